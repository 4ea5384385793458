//! Command-line driver: argument parsing, model loading and report emission.

pub mod commands;
pub mod config;
mod model;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

pub use config::{ExperimentConfig, GenKind, GenSpec, SignMode};

/// Directory that relative `--out` paths resolve against when set.
pub const OUT_DIR_ENV: &str = "SPARSE_ISING_OUT_DIR";
pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sparse_ising::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Parser)]
#[command(name = "sparse-ising", version, about = "Sparse Ising experiments: decomposition, sampling, oracles and spectral checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Treat slack-band warnings and soft verdicts as failures.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output file; relative paths resolve against $SPARSE_ISING_OUT_DIR when set.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Generator spec: sbm:n,d,lambda or er:n,d.
    #[arg(long = "gen", conflicts_with_all = ["input", "model"])]
    pub generator: Option<String>,
    /// Edge list file ("n m" header, then "u v [w]" lines).
    #[arg(long, conflicts_with = "model")]
    pub input: Option<PathBuf>,
    /// Either a generator spec or an edge list path.
    #[arg(long)]
    pub model: Option<String>,
    /// Per-edge coupling magnitude; centered models use β/√d.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Constant external field, or a file of n whitespace-separated values.
    #[arg(long, default_value = "0")]
    pub field: String,
    #[arg(long, value_enum, default_value_t = SignMode::Random)]
    pub signs: SignMode,
    /// Centered SBM interaction A − E[A|σ] (sbm generator only).
    #[arg(long)]
    pub centered: bool,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Average degree; defaults to the generator's d or the observed mean degree.
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectraKind {
    Bethe,
    Nonbacktracking,
    Bulk,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovMode {
    Exact,
    Mc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the graph as an edge list.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Excise heavy neighborhoods and report the bulk/near-forest split.
    Decompose {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run Glauber chains and write a CSV trace.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// Steps per chain (default 10n).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        /// Comma list of mag, energy, overlap.
        #[arg(long, default_value = "mag")]
        observe: String,
        #[arg(long, default_value_t = 1)]
        stride: u64,
    },
    /// Exact log-partition function, marginals and covariance (n ≤ 20).
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Spectral quantities against their bounds.
    Spectra {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = SpectraKind::Bulk)]
        what: SpectraKind,
        /// Bethe Hessian parameter.
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Largest distance for the distance-matrix norms.
        #[arg(long, default_value_t = 3)]
        ell: usize,
        /// Multiplier on the bulk bound before a hard failure.
        #[arg(long, default_value_t = 1.2)]
        slack: f64,
    },
    /// Covariance norms along the annealing path and the mixture residual.
    Localize {
        #[command(flatten)]
        model: ModelArgs,
        /// `auto`, or a file with a dense n×n control used for the mixture residual.
        #[arg(long, default_value = "auto")]
        control: String,
        /// Number of path intervals; times are k/grid.
        #[arg(long = "t-grid", default_value_t = 4)]
        t_grid: usize,
        /// Comma list of zero, plus, minus, gaussian:K.
        #[arg(long, default_value = "zero,plus,minus,gaussian:2")]
        probes: String,
        #[arg(long, value_enum, default_value_t = CovMode::Exact)]
        mode: CovMode,
    },
    /// Aggregate verdict document.
    Report {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "paper-checks")]
        suite: String,
    },
}

/// Result of a subcommand: a JSON document or raw text, plus a verdict.
pub struct Artifact {
    pub body: ArtifactBody,
    pub verdict_ok: bool,
    /// Extra files written next to `--out`, keyed by suffix.
    pub companions: Vec<(String, String)>,
}

pub enum ArtifactBody {
    Json(Map<String, Value>),
    Text(String),
}

impl ModelArgs {
    fn into_config(self, subcommand: &str, strict: bool, knobs: Value) -> Result<ExperimentConfig, CliError> {
        let (generator, input) = match (self.generator, self.input, self.model) {
            (Some(g), None, None) => (Some(g.parse()?), None),
            (None, Some(p), None) => (None, Some(p.display().to_string())),
            (None, None, Some(m)) => match m.parse::<GenSpec>() {
                Ok(g) => (Some(g), None),
                Err(_) => (None, Some(m)),
            },
            (None, None, None) => return Err(CliError::Usage("one of --gen, --input or --model is required".into())),
            _ => return Err(CliError::Usage("--gen, --input and --model are exclusive".into())),
        };
        let Value::Object(knobs) = knobs else { unreachable!("knobs are an object") };
        Ok(ExperimentConfig {
            subcommand: subcommand.into(),
            generator,
            input,
            signs: self.signs,
            centered: self.centered,
            epsilon: self.epsilon,
            beta: self.beta,
            field: self.field,
            seed: self.seed,
            d: self.d,
            strict,
            knobs,
        })
    }
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

fn render(config: &ExperimentConfig, body: ArtifactBody) -> String {
    match body {
        ArtifactBody::Json(fields) => {
            let mut doc = Map::new();
            doc.insert("schema".into(), json!(SCHEMA_VERSION));
            doc.insert("tool".into(), json!("sparse-ising"));
            doc.insert("version".into(), json!(VERSION));
            doc.insert("config_hash".into(), json!(config.hash()));
            doc.insert("config".into(), serde_json::to_value(config).expect("config serializes"));
            doc.extend(fields);
            let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("report serializes");
            s.push('\n');
            s
        }
        ArtifactBody::Text(text) => {
            format!("# sparse-ising {VERSION} schema {SCHEMA_VERSION} config {}\n{text}", config.hash())
        }
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set thread count: {e}")))?;
    }
    let strict = cli.strict;
    let (config, artifact) = match cli.command {
        Command::Generate { model } => {
            let cfg = model.into_config("generate", strict, json!({}))?;
            let a = commands::generate(&cfg)?;
            (cfg, a)
        }
        Command::Decompose { model } => {
            let cfg = model.into_config("decompose", strict, json!({}))?;
            let a = commands::decompose(&cfg)?;
            (cfg, a)
        }
        Command::Sample {
            model,
            steps,
            chains,
            observe,
            stride,
        } => {
            let cfg = model.into_config(
                "sample",
                strict,
                json!({"steps": steps, "chains": chains, "observe": observe, "stride": stride}),
            )?;
            let a = commands::sample(&cfg)?;
            (cfg, a)
        }
        Command::Oracle { model } => {
            let cfg = model.into_config("oracle", strict, json!({}))?;
            let a = commands::oracle(&cfg)?;
            (cfg, a)
        }
        Command::Spectra {
            model,
            what,
            t,
            ell,
            slack,
        } => {
            let what = what.to_possible_value().expect("named").get_name().to_string();
            let cfg = model.into_config("spectra", strict, json!({"what": what, "t": t, "ell": ell, "slack": slack}))?;
            let a = commands::spectra(&cfg)?;
            (cfg, a)
        }
        Command::Localize {
            model,
            control,
            t_grid,
            probes,
            mode,
        } => {
            let mode = mode.to_possible_value().expect("named").get_name().to_string();
            let cfg = model.into_config(
                "localize",
                strict,
                json!({"control": control, "t_grid": t_grid, "probes": probes, "mode": mode}),
            )?;
            let a = commands::localize(&cfg)?;
            (cfg, a)
        }
        Command::Report { model, suite } => {
            if suite != "paper-checks" {
                return Err(CliError::Usage(format!("unknown suite {suite:?}; available: paper-checks")));
            }
            let cfg = model.into_config("report", strict, json!({"suite": suite}))?;
            let a = commands::report(&cfg)?;
            (cfg, a)
        }
    };
    let text = render(&config, artifact.body);
    match &cli.out {
        Some(path) => {
            let path = resolve_out(path);
            write_file(&path, &text)?;
            for (suffix, contents) in &artifact.companions {
                let mut name: OsString = path.clone().into_os_string();
                name.push(suffix);
                write_file(Path::new(&name), &render(&config, ArtifactBody::Text(contents.clone())))?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            })?;
        }
    }
    Ok(artifact.verdict_ok)
}

/// Parses `args` and runs the subcommand. Returns the process exit code:
/// 0 on success, 2 on a failed verdict, 1 on usage or runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

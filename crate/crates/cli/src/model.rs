//! Graph and model construction from a resolved config.

use std::fs;
use std::io::BufReader;

use sparse_ising::generate::{gen_er, gen_sbm, random_signing};
use sparse_ising::ising::IsingModel;
use sparse_ising::{CenteredInteraction, CommunityLabels, Graph, RngSeed};

use crate::config::{ExperimentConfig, GenKind, SignMode};
use crate::CliError;

/// Seed-derivation tags, one per independent random stream.
pub mod tags {
    pub const GRAPH: u64 = 0;
    pub const SIGNS: u64 = 1;
    pub const CHAINS: u64 = 2;
    pub const PROBES: u64 = 3;
    pub const MIXTURE: u64 = 4;
    pub const TAILS: u64 = 5;
    pub const PROXY: u64 = 6;
    pub const TREES: u64 = 7;
}

pub struct Instance {
    pub graph: Graph,
    pub labels: Option<CommunityLabels>,
    pub d: f64,
    pub lambda: f64,
}

pub fn root_seed(cfg: &ExperimentConfig) -> RngSeed {
    RngSeed::new(cfg.seed)
}

fn io_err(path: &str) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_string(),
        source,
    }
}

pub fn load_instance(cfg: &ExperimentConfig) -> Result<Instance, CliError> {
    let seed = root_seed(cfg).derive(tags::GRAPH);
    let (graph, labels, d, lambda) = match (&cfg.generator, &cfg.input) {
        (Some(g), _) => match g.kind {
            GenKind::Sbm => {
                let (graph, labels) = gen_sbm(g.n, g.d, g.lambda, seed)?;
                (graph, Some(labels), g.d, g.lambda)
            }
            GenKind::Er => (gen_er(g.n, g.d, seed)?, None, g.d, 0.0),
        },
        (None, Some(path)) => {
            let file = fs::File::open(path).map_err(io_err(path))?;
            let graph = Graph::read_edge_list(BufReader::new(file)).map_err(|e| match e {
                sparse_ising::Error::Io(source) => CliError::Io {
                    path: path.clone(),
                    source,
                },
                other => CliError::Usage(format!("{path}: {other}")),
            })?;
            let mean = if graph.n() == 0 { 0.0 } else { 2.0 * graph.m() as f64 / graph.n() as f64 };
            (graph, None, mean, 0.0)
        }
        (None, None) => return Err(CliError::Usage("no graph source".into())),
    };
    let d = cfg.d.unwrap_or(d);
    Ok(Instance { graph, labels, d, lambda })
}

/// Unit-magnitude couplings with the configured signs.
pub fn signed_graph(cfg: &ExperimentConfig, graph: &Graph) -> Result<Graph, CliError> {
    let unit = graph.map_weights(|_| 1.0)?;
    Ok(match cfg.signs {
        SignMode::Ferro => unit,
        SignMode::Random => random_signing(&unit, root_seed(cfg).derive(tags::SIGNS))?,
    })
}

/// `β` times a unit-magnitude coupling graph; `β = 0` drops every edge.
pub fn scale_couplings(g: &Graph, beta: f64) -> Result<Graph, CliError> {
    if beta == 0.0 {
        return Ok(Graph::empty(g.n()));
    }
    Ok(g.scaled(beta)?)
}

pub fn parse_field(spec: &str, n: usize) -> Result<Vec<f64>, CliError> {
    if let Ok(h) = spec.trim().parse::<f64>() {
        return Ok(vec![h; n]);
    }
    let text = fs::read_to_string(spec).map_err(io_err(spec))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("{spec}: cannot parse field value {t:?}"))))
        .collect::<Result<_, _>>()?;
    if values.len() != n {
        return Err(CliError::Usage(format!("{spec}: expected {n} field values, found {}", values.len())));
    }
    Ok(values)
}

pub fn build_model(cfg: &ExperimentConfig, inst: &Instance) -> Result<IsingModel, CliError> {
    let field = parse_field(&cfg.field, inst.graph.n())?;
    if cfg.centered {
        let labels = inst
            .labels
            .as_ref()
            .ok_or_else(|| CliError::Usage("--centered needs community labels (use an sbm generator)".into()))?;
        let c = CenteredInteraction::new(&inst.graph, labels, inst.d, inst.lambda, cfg.beta)?;
        return Ok(IsingModel::centered(c, field)?);
    }
    let couplings = scale_couplings(&signed_graph(cfg, &inst.graph)?, cfg.beta)?;
    Ok(IsingModel::sparse(couplings, field)?)
}

"""Smoke test for the sparse_ising_py extension module."""

import itertools
import math

import numpy as np

import sparse_ising_py as si


def brute_force(n, edges, field):
    j = np.zeros((n, n))
    for u, v, w in edges:
        j[u, v] = j[v, u] = w
    states = np.array(list(itertools.product([-1, 1], repeat=n)), dtype=float)
    logw = 0.5 * np.einsum("si,ij,sj->s", states, j, states) + states @ np.asarray(field)
    top = logw.max()
    p = np.exp(logw - top)
    z = p.sum()
    p /= z
    mean = p @ states
    cov = (states * p[:, None]).T @ states - np.outer(mean, mean)
    return top + math.log(z), mean, cov


def check_oracle():
    g = si.Graph.erdos_renyi(8, 3.0, seed=11).couplings(0.4, seed=2)
    field = list(np.linspace(-0.3, 0.3, 8))
    model = si.IsingModel(g, field)
    out = model.oracle()
    log_z, mean, cov = brute_force(8, g.edges(), field)
    assert abs(out["log_z"] - log_z) < 1e-10
    assert np.allclose(out["mean"], mean, atol=1e-12)
    assert np.allclose(out["covariance"], cov, atol=1e-12)
    assert np.allclose(out["marginals"], (1 + mean) / 2, atol=1e-12)


def check_graph_round_trip():
    g = si.Graph.sbm(200, 4.0, 0.5, seed=3)
    assert len(g.labels) == 200 and set(g.labels) <= {-1, 1}
    h = si.Graph.from_edge_list(g.to_edge_list())
    assert (h.n, h.m) == (g.n, g.m)
    assert sorted(h.edges()) == sorted(g.edges())
    try:
        si.Graph(3, [(0, 0, 1.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("self-loop accepted")
    try:
        g.degree(200)
    except IndexError:
        pass
    else:
        raise AssertionError("out-of-range vertex accepted")


def check_decomposition():
    g = si.Graph.sbm(20000, 5.0, 0.0, seed=1)
    dec = si.decompose(g, 5.0, 0.5)
    assert dec["bulk_max_degree"] <= dec["bulk_degree_bound"] == 7.5
    assert dec["bulk_edges"] + dec["near_forest_edges"] == g.m
    signed = dec["bulk"].couplings(1.0, seed=4)
    rep = si.bulk_norm(signed, 5.0, 0.5)
    assert rep["norm"] > 0 and rep["bound"] > 0


def check_dynamics():
    model = si.IsingModel(si.Graph.erdos_renyi(10, 2.0, seed=5).couplings(0.2, seed=6))
    gap = model.spectral_gap()
    assert 0 < gap <= 1.0
    mlsi = model.mlsi(probes=8, seed=1)
    assert 0 < mlsi["value"] and mlsi["mixing_bound"] > 0
    traces = model.sample(steps=200, chains=3, stride=20, seed=9)
    assert len(traces) == 3
    assert all(abs(m) <= 1 for tr in traces for _, m in tr)
    assert traces == model.sample(steps=200, chains=3, stride=20, seed=9)


def check_spectra_and_params():
    # A cycle's non-backtracking radius is exactly 1.
    cycle = si.Graph(6, [(i, (i + 1) % 6, 1.0) for i in range(6)])
    assert abs(si.nonbacktracking_radius(cycle) - 1.0) < 1e-6
    gamma, big_d, rho, ok = si.control_params(4.0, 0.5, 0.1)
    assert abs(gamma - 0.1 * math.sqrt(1.5)) < 1e-12 and abs(big_d - 6.0) < 1e-12
    assert isinstance(ok, bool) and rho > 0


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("check_"):
            fn()
            print(f"ok {name[len('check_'):]}")
    print("smoke test passed")

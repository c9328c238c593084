import numpy as np
import pytest

from rankprune import centrality as ce, graph_repr as gr, mlp_engine as me
from helpers import random_calib, random_mlp


def random_dag(rng, n=8, p=0.5):
    """Upper-to-lower triangular random DAG adjacency (edges j -> i, i > j)."""
    a = np.tril(rng.random((n, n)) < p, k=-1).astype(float)
    # ensure at least one edge so the graph is not empty
    a[n - 1, 0] = 1.0
    return a


def solve_pr_fixed_point(adjacency, gamma):
    """Dense linear-solver oracle for the recursive score definition."""
    a = np.asarray(adjacency, dtype=float)
    n = a.shape[0]
    d = a.sum(axis=0)
    m = np.zeros_like(a)
    nz = d > 0
    m[:, nz] = a[:, nz] / d[nz]
    return np.linalg.solve(np.eye(n) - gamma * m, np.full(n, (1 - gamma) / n))


def test_pagerank_two_cycle_symmetry():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(ce.pagerank(a, gamma=0.85), [0.5, 0.5], atol=1e-9)


def test_pagerank_gamma_zero_uniform():
    a = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    assert np.allclose(ce.pagerank(a, gamma=0.0), np.full(3, 1 / 3), atol=1e-15)


def test_pagerank_matches_linear_solver_on_worked_graph(worked_example_model):
    g = gr.assemble_block_graph(worked_example_model)
    expect = solve_pr_fixed_point(g.adjacency, 0.85)
    assert np.allclose(ce.pagerank(g.adjacency, gamma=0.85), expect, atol=1e-9)


def test_pagerank_convergence_error():
    a = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(ce.ConvergenceError):
        ce.pagerank(a, gamma=0.85, tol=1e-30, max_iters=2)


def test_wpr_reduces_to_pr():
    params = ce.WprParams(gamma=0.85, theta=0.0, tol=1e-14)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        a = random_dag(rng)
        w = a * rng.random(a.shape)
        phi = ce.weighted_pagerank(a, w, np.ones(a.shape[0]), params)
        assert np.max(np.abs(phi - ce.pagerank(a, gamma=0.85, tol=1e-14))) < 1e-10


def test_wpr_gamma_zero_is_normalised_beta():
    rng = np.random.default_rng(1)
    a = random_dag(rng)
    beta = rng.random(a.shape[0])
    phi = ce.weighted_pagerank(a, a, beta, ce.WprParams(gamma=0.0))
    assert np.allclose(phi, beta / beta.sum(), atol=1e-15)


def test_wpr_theta_irrelevant_for_equal_weights():
    rng = np.random.default_rng(2)
    a = random_dag(rng)
    w = a * 2.5  # all existing edges share one weight
    beta = np.ones(a.shape[0])
    p0 = ce.weighted_pagerank(a, w, beta, ce.WprParams(theta=0.0, tol=1e-13))
    p1 = ce.weighted_pagerank(a, w, beta, ce.WprParams(theta=1.0, tol=1e-13))
    assert np.allclose(p0, p1, atol=1e-10)


def test_wpr_rejects_zero_beta():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        ce.weighted_pagerank(a, a, np.zeros(2), ce.WprParams())


def test_mlp_wpr_gamma_zero_closed_form():
    rng = np.random.default_rng(3)
    model = random_mlp(rng, widths=[4, 6, 3])
    calib = random_calib(rng, model)
    scores = ce.mlp_wpr(gr.decompose(model), calib, ce.WprParams(gamma=0.0))
    for phi, beta in zip(scores.layer_scores, calib.layer_norms):
        assert np.array_equal(phi, np.asarray(beta) / np.asarray(beta).sum())


def test_mlp_wpr_dense_adjacency_term_uniform():
    rng = np.random.default_rng(4)
    model = random_mlp(rng, widths=[3, 5, 4])
    calib = random_calib(rng, model)
    # theta=0: edge term depends only on the (uniform) adjacency normalisation
    scores = ce.mlp_wpr(gr.decompose(model), calib,
                        ce.WprParams(gamma=0.85, theta=0.0))
    for k, phi in enumerate(scores.layer_scores):
        beta = np.asarray(calib.layer_norms[k])
        structural = phi - 0.15 * beta / beta.sum()
        assert np.allclose(structural, structural[0], atol=1e-12)


def test_mlp_wpr_matches_block_graph_oracle(worked_example_model):
    calib = me.CalibrationStats(np.ones(2), [np.ones(2), np.ones(2)], 1)
    params = ce.WprParams(gamma=0.85, theta=1.0, tol=1e-13)
    comp = ce.mlp_wpr(gr.decompose(worked_example_model), calib, params)
    block = ce.block_graph_wpr(gr.assemble_block_graph(worked_example_model), calib, params)
    assert np.max(np.abs(comp.stacked() - block.stacked())) < 1e-10


def test_mlp_wpr_power_equals_sweep_and_converges_fast():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        model = random_mlp(rng)
        calib = random_calib(rng, model)
        params = ce.WprParams()
        power = ce.mlp_wpr(gr.decompose(model), calib, params, mode="power")
        sweep = ce.mlp_wpr(gr.decompose(model), calib, params, mode="sweep")
        assert np.max(np.abs(power.stacked() - sweep.stacked())) < 1e-10
        assert power.metadata["iterations_used"] <= len(model.layers) + 1


def test_mlp_wpr_non_negative_and_teleport_mass():
    rng = np.random.default_rng(11)
    model = random_mlp(rng, widths=[4, 7, 5, 3])
    calib = random_calib(rng, model)
    gamma = 0.6
    scores = ce.mlp_wpr(gr.decompose(model), calib, ce.WprParams(gamma=gamma))
    assert all((np.asarray(v) >= 0).all() for v in scores.layer_scores)
    teleports = ce._layer_teleports(calib, gr.decompose(model).widths, gamma)
    for t in teleports:
        assert abs(t.sum() - (1 - gamma)) < 1e-12


def test_mlp_wpr_layer_scale_invariance():
    rng = np.random.default_rng(12)
    model = random_mlp(rng, widths=[4, 6, 5, 3], activation="relu")
    samples = np.abs(rng.standard_normal((10, 4))) + 0.1
    params = ce.WprParams()
    base = ce.mlp_wpr(gr.decompose(model), me.calibrate(model, samples), params)
    c = 4.0
    scaled_layers = [me.Layer(model.layers[1].weights * c, model.layers[1].bias * c,
                              "relu")]
    scaled = me.MlpModel([model.layers[0]] + scaled_layers + model.layers[2:])
    res = ce.mlp_wpr(gr.decompose(scaled), me.calibrate(scaled, samples), params)
    # scores up to and including the rescaled layer are unchanged; later
    # layers may move because their biases no longer match the new scale
    assert np.max(np.abs(base.input_scores - res.input_scores)) < 1e-10
    for k in (0, 1):
        assert np.max(np.abs(base.layer_scores[k] - res.layer_scores[k])) < 1e-10


def test_mlp_wpr_rank_invariance_under_global_scaling():
    rng = np.random.default_rng(13)
    model = random_mlp(rng, widths=[4, 8, 3])
    calib = random_calib(rng, model)
    scores = ce.mlp_wpr(gr.decompose(model), calib, ce.WprParams())
    for phi in scores.layer_scores:
        assert np.array_equal(np.argsort(phi), np.argsort(np.asarray(phi) * 17.5))


def test_mlp_wpr_zero_layer_beta_rejected():
    model = me.MlpModel([me.Layer([[1.0, 1.0], [1.0, 1.0]], [0, 0], "relu")])
    calib = me.CalibrationStats(np.ones(2), [np.zeros(2)], 1)
    with pytest.raises(ValueError):
        ce.mlp_wpr(gr.decompose(model), calib, ce.WprParams())


def test_wpr_params_validation():
    with pytest.raises(ValueError):
        ce.WprParams(gamma=1.5)
    with pytest.raises(ValueError):
        ce.WprParams(theta=-0.1)
    with pytest.raises(ValueError):
        ce.WprParams(tol=0.0)

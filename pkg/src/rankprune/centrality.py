"""Node importance scoring: classic PageRank and its weighted variant on
explicit graphs (reference implementations), and the layer-wise weighted
variant used for neuron scoring, evaluated component-wise by power
iteration."""

from dataclasses import dataclass, field

import numpy as np

from .graph_repr import BlockGraph, ComponentGraph
from .mlp_engine import CalibrationStats


class ConvergenceError(RuntimeError):
    """Power iteration failed to reach tolerance within max_iters."""


@dataclass
class WprParams:
    gamma: float = 0.85
    theta: float = 0.5
    tol: float = 1e-9
    max_iters: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass
class ImportanceScores:
    """Per-layer neuron scores; input_scores covers the input surrogate
    nodes, layer_scores[k] the neurons of layer k."""
    input_scores: np.ndarray
    layer_scores: list
    metadata: dict = field(default_factory=dict)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.input_scores] + list(self.layer_scores))


def _safe_div_cols(m: np.ndarray, col_sums: np.ndarray) -> np.ndarray:
    """Column-normalise m, leaving dangling (zero-sum) columns at zero."""
    out = np.zeros_like(m, dtype=np.float64)
    nz = col_sums > 0
    out[:, nz] = m[:, nz] / col_sums[nz]
    return out


def pagerank(adjacency: np.ndarray, gamma: float = 0.85,
             tol: float = 1e-9, max_iters: int = 1000) -> np.ndarray:
    """Classic PageRank by power iteration; dangling columns contribute
    nothing to the structural term."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    n = a.shape[0]
    m = _safe_div_cols(a, a.sum(axis=0))
    phi = np.full(n, 1.0 / n)
    teleport = (1.0 - gamma) / n
    for _ in range(max_iters):
        new = gamma * (m @ phi) + teleport
        if np.abs(new - phi).sum() < tol:
            return new
        phi = new
    raise ConvergenceError(f"pagerank did not converge in {max_iters} iterations")


def weighted_pagerank(adjacency: np.ndarray, weights: np.ndarray,
                      beta: np.ndarray, params: WprParams) -> np.ndarray:
    """Weighted variant mixing weight-normalised and adjacency-normalised
    edge terms with a node-specific teleport vector beta."""
    a = np.asarray(adjacency, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if a.shape != w.shape or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency/weights must be square and same shape")
    if beta.min() < 0:
        raise ValueError("beta must be non-negative")
    total = beta.sum()
    if total <= 0:
        raise ValueError("beta must have positive sum")
    m = (params.theta * _safe_div_cols(w, w.sum(axis=0))
         + (1.0 - params.theta) * _safe_div_cols(a, a.sum(axis=0)))
    teleport = (1.0 - params.gamma) * beta / total
    n = a.shape[0]
    phi = np.full(n, 1.0 / n)
    for _ in range(params.max_iters):
        new = params.gamma * (m @ phi) + teleport
        if np.abs(new - phi).sum() < params.tol:
            return new
        phi = new
    raise ConvergenceError(f"weighted pagerank did not converge in {params.max_iters} iterations")


def _layer_teleports(calib: CalibrationStats, widths, gamma: float) -> list:
    """Teleport vectors, beta normalised within each layer (input first)."""
    betas = [np.asarray(calib.input_norms, dtype=np.float64)]
    betas += [np.asarray(v, dtype=np.float64) for v in calib.layer_norms]
    if len(betas) != len(widths):
        raise ValueError("calibration stats do not match layer count")
    out = []
    for beta, width in zip(betas, widths):
        if beta.shape[0] != width:
            raise ValueError("calibration vector length does not match layer width")
        total = beta.sum()
        if total <= 0:
            raise ValueError("zero calibration mass within a layer")
        out.append((1.0 - gamma) * beta / total)
    return out


def _layer_transitions(component: ComponentGraph, params: WprParams) -> list:
    """Per-layer propagation matrices: mixed weight/adjacency column
    normalisation on absolute weights, scaled by gamma."""
    mats = []
    for block in component.blocks:
        w = np.abs(np.asarray(block, dtype=np.float64))
        m_k = w.shape[0]
        w_term = _safe_div_cols(w, w.sum(axis=0))
        a_term = np.full_like(w, 1.0 / m_k)  # dense layer: all-ones adjacency
        mats.append(params.gamma * (params.theta * w_term + (1.0 - params.theta) * a_term))
    return mats


def mlp_wpr(component: ComponentGraph, calib: CalibrationStats,
            params: WprParams, mode: str = "power") -> ImportanceScores:
    """Layer-wise weighted PageRank scores for every node of the network.

    mode "power": power iteration from a uniform positive start until the L1
    change falls below tol. mode "sweep": one sequential layer-by-layer
    evaluation, which is the exact fixed point since the graph is acyclic.
    """
    widths = component.widths
    teleports = _layer_teleports(calib, widths, params.gamma)
    transitions = _layer_transitions(component, params)

    if mode == "sweep":
        phis = [teleports[0]]
        for t_mat, tele in zip(transitions, teleports[1:]):
            phis.append(t_mat @ phis[-1] + tele)
        iterations = 1
    elif mode == "power":
        phis = [np.full(w, 1.0 / w) for w in widths]
        iterations = None
        for it in range(1, params.max_iters + 1):
            new = [teleports[0]]
            for t_mat, tele, prev in zip(transitions, teleports[1:], phis):
                new.append(t_mat @ prev + tele)
            diff = sum(np.abs(a - b).sum() for a, b in zip(new, phis))
            phis = new
            if diff < params.tol:
                # the final sweep only confirms the fixed point
                iterations = max(it - 1, 1)
                break
        if iterations is None:
            raise ConvergenceError(f"did not converge in {params.max_iters} iterations")
    else:
        raise ValueError(f"unknown mode {mode!r}")

    meta = {
        "method": "wpr",
        "gamma": params.gamma,
        "theta": params.theta,
        "iterations_used": iterations,
    }
    return ImportanceScores(phis[0], phis[1:], meta)


def block_graph_wpr(graph: BlockGraph, calib: CalibrationStats,
                    params: WprParams) -> ImportanceScores:
    """Oracle: the same scores computed on the explicit block matrices with
    dense operations; teleport beta normalised per layer block."""
    w = np.abs(graph.weight)
    a = graph.adjacency
    m = (params.theta * _safe_div_cols(w, w.sum(axis=0))
         + (1.0 - params.theta) * _safe_div_cols(a, a.sum(axis=0)))

    offsets = list(graph.layer_offsets) + [graph.node_count]
    widths = [offsets[i + 1] - offsets[i] for i in range(len(offsets) - 1)]
    teleports = _layer_teleports(calib, widths, params.gamma)
    teleport = np.concatenate(teleports)

    n = graph.node_count
    phi = np.full(n, 1.0 / n)
    converged = False
    for it in range(1, params.max_iters + 1):
        new = params.gamma * (m @ phi) + teleport
        done = np.abs(new - phi).sum() < params.tol
        phi = new
        if done:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"did not converge in {params.max_iters} iterations")

    per_layer = [phi[offsets[i]:offsets[i + 1]] for i in range(len(widths))]
    meta = {"method": "wpr-block-oracle", "gamma": params.gamma,
            "theta": params.theta, "iterations_used": it}
    return ImportanceScores(per_layer[0], per_layer[1:], meta)

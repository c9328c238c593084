"""Turn scores into uniform structured prune plans, apply them, and account
parameters/FLOPs/theoretical speedup."""

from dataclasses import dataclass, field

import numpy as np

from . import graph_repr
from .centrality import ImportanceScores
from .mlp_engine import MlpModel


@dataclass
class PrunePlan:
    layer_indices: list  # per prunable layer, sorted ascending; final layer excluded
    widths: list         # widths of the model the plan was made for
    sparsity_local: float
    sparsity_overall_requested: float = None
    accounting: dict = field(default_factory=dict)


def mlp_flops(widths) -> int:
    """Dense forward multiply-accumulates, counted as 2 FLOPs each."""
    return sum(2 * m * n for n, m in zip(widths, widths[1:]))


def mlp_params(widths) -> int:
    return sum(m * n + m for n, m in zip(widths, widths[1:]))


def select_lowest(scores: np.ndarray, count: int) -> list:
    """Indices of the `count` lowest scores; ties keep lower index first."""
    order = np.argsort(scores, kind="stable")
    return sorted(int(i) for i in order[:count])


def plan(scores: ImportanceScores, sparsity_local: float,
         widths: list, sparsity_overall_requested: float = None) -> PrunePlan:
    """Per prunable layer, mark the floor(s * width) lowest-scoring neurons."""
    if not 0.0 <= sparsity_local < 1.0:
        raise ValueError("local sparsity must be in [0, 1)")
    layer_widths = widths[1:]
    if len(scores.layer_scores) != len(layer_widths):
        raise ValueError("scores do not match model layer count")
    indices = []
    for k, width in enumerate(layer_widths[:-1]):  # final layer never pruned
        vec = np.asarray(scores.layer_scores[k], dtype=np.float64)
        if vec.shape[0] != width:
            raise ValueError(f"score vector length mismatch at layer {k}")
        indices.append(select_lowest(vec, int(np.floor(sparsity_local * width))))

    new_widths = list(widths)
    for k, idx in enumerate(indices):
        new_widths[k + 1] -= len(idx)
    p = PrunePlan(indices, list(widths), sparsity_local, sparsity_overall_requested)
    p.accounting = {
        "params_before": mlp_params(widths),
        "params_after": mlp_params(new_widths),
        "flops_before": mlp_flops(widths),
        "flops_after": mlp_flops(new_widths),
    }
    return p


def apply(model: MlpModel, p: PrunePlan) -> MlpModel:
    """Remove every planned neuron; indices are applied descending within a
    layer so earlier removals do not shift later ones."""
    if model.widths != p.widths:
        raise ValueError("plan is stale: model widths do not match plan widths")
    out = model
    for k, idx in enumerate(p.layer_indices):
        for i in sorted(idx, reverse=True):
            out = graph_repr.remove_neuron(out, k, i)
    return out


def map_overall_to_local(total_params: int, prunable_params: int,
                         sparsity_overall: float) -> float:
    """Local sparsity on the prunable set needed to hit an overall target."""
    if not 0.0 <= sparsity_overall < 1.0:
        raise ValueError("overall sparsity must be in [0, 1)")
    if prunable_params <= 0:
        raise ValueError("no prunable parameters")
    local = sparsity_overall * total_params / prunable_params
    if local >= 1.0:
        raise ValueError(
            f"overall sparsity {sparsity_overall} unachievable: would need "
            f"local sparsity {local:.3f} on the prunable set")
    return local


def speedup_report(p: PrunePlan) -> dict:
    acc = p.accounting
    flop_ratio = acc["flops_after"] / acc["flops_before"]
    return {
        "params_before": acc["params_before"],
        "params_after": acc["params_after"],
        "params_ratio": acc["params_after"] / acc["params_before"],
        "flops_before": acc["flops_before"],
        "flops_after": acc["flops_after"],
        "flops_ratio": flop_ratio,
        "theoretical_speedup": 1.0 / flop_ratio,
        "sparsity_local": p.sparsity_local,
    }

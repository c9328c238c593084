"""Chained-FFN view of a decoder-only transformer: the feed-forward
sublayers are scored as one deep MLP while calibration activations come from
the full unchanged model. Scores map back onto block tensors, and the
attention projections can be scored as appendices to the chain."""

from dataclasses import dataclass, field

import numpy as np

from . import centrality, pruner, toy_transformer
from .centrality import ImportanceScores, WprParams
from .graph_repr import ComponentGraph
from .mlp_engine import CalibrationStats
from .toy_transformer import ToyTransformer


@dataclass
class ChainLayer:
    magnitude: np.ndarray  # non-negative edge magnitudes (m, n)
    block: int
    role: str              # "up" (intermediate) or "down" (residual output)


@dataclass
class ChainedView:
    layers: list

    @property
    def widths(self) -> list:
        return [self.layers[0].magnitude.shape[1]] + \
            [l.magnitude.shape[0] for l in self.layers]

    def component(self) -> ComponentGraph:
        return ComponentGraph([l.magnitude for l in self.layers])


@dataclass
class LlmPrunePlan:
    block_indices: list  # per block, sorted intermediate indices
    d_ff: list           # pre-prune intermediate widths
    sparsity_local: float
    sparsity_overall_requested: float = None
    accounting: dict = field(default_factory=dict)


def chain_ffns(model: ToyTransformer) -> ChainedView:
    """Alternating up/down chain over all blocks; gated pairs are fused into
    one logical layer with edge magnitudes |gate| + |up|."""
    cfg = model.config
    layers = []
    for b in range(cfg.n_blocks):
        p = f"blocks.{b}."
        up = np.abs(model.tensors[p + "up"].astype(np.float64))
        if cfg.ffn_kind == "gated":
            up = up + np.abs(model.tensors[p + "gate"].astype(np.float64))
        down = np.abs(model.tensors[p + "down"].astype(np.float64))
        if up.shape[1] != cfg.d_model or down.shape[0] != cfg.d_model:
            raise ValueError(f"block {b}: interface width mismatch")
        layers.append(ChainLayer(up, b, "up"))
        layers.append(ChainLayer(down, b, "down"))
    return ChainedView(layers)


def calibrate_transformer(model: ToyTransformer, token_batches) -> CalibrationStats:
    """Chain-aligned activation L2 norms from full forward passes.

    token_batches is an iterable of token id sequences; norms are taken over
    every position of every sequence. Attention projection norms ride along
    in metadata for the attention extension.
    """
    cfg = model.config
    sq_input = None
    sq_layers = None
    sq_attn = None
    n_seqs = 0
    n_tokens = 0
    for ids in token_batches:
        _, trace = toy_transformer.forward_with_trace(model, ids)
        n_seqs += 1
        n_tokens += len(ids)
        if sq_input is None:
            sq_input = np.zeros(cfg.d_model)
            sq_layers = [np.zeros(w) for b in range(cfg.n_blocks)
                         for w in (cfg.d_ff[b], cfg.d_model)]
            sq_attn = [{r: np.zeros(cfg.d_model) for r in ("wq", "wk", "wv")}
                       for _ in range(cfg.n_blocks)]
        sq_input += (trace["ffn_input"][0] ** 2).sum(axis=0)
        for b in range(cfg.n_blocks):
            sq_layers[2 * b] += (trace["ffn_intermediate"][b] ** 2).sum(axis=0)
            sq_layers[2 * b + 1] += (trace["ffn_output"][b] ** 2).sum(axis=0)
            for role, key in (("wq", "q"), ("wk", "k"), ("wv", "v")):
                sq_attn[b][role] += (trace[key][b] ** 2).sum(axis=0)
    if n_seqs == 0:
        raise ValueError("no calibration tokens")
    meta = {
        "kind": "decoder_transformer",
        "token_count": n_tokens,
        "attn_norms": [
            {role: [float(x) for x in np.sqrt(sq)] for role, sq in block.items()}
            for block in sq_attn
        ],
    }
    return CalibrationStats(np.sqrt(sq_input), [np.sqrt(s) for s in sq_layers],
                            sample_count=n_seqs, metadata=meta)


def score_chain(model: ToyTransformer, calib: CalibrationStats,
                params: WprParams) -> ImportanceScores:
    view = chain_ffns(model)
    scores = centrality.mlp_wpr(view.component(), calib, params)
    scores.metadata["chain_roles"] = [(l.block, l.role) for l in view.layers]
    return scores


def prunable_param_count(model: ToyTransformer) -> int:
    """Parameters removed per intermediate neuron, summed over all of them:
    up row (+ gate row, + bias) and the matching down column."""
    cfg = model.config
    per_neuron = 2 * cfg.d_model
    if cfg.ffn_kind == "gated":
        per_neuron += cfg.d_model
    if cfg.use_bias:
        per_neuron += 1
    return per_neuron * sum(cfg.d_ff)


def plan_llm(model: ToyTransformer, scores: ImportanceScores,
             sparsity_local: float = None,
             sparsity_overall: float = None) -> LlmPrunePlan:
    """Uniform plan over the prunable set (intermediate FFN neurons only);
    residual-stream positions are never planned."""
    cfg = model.config
    if (sparsity_local is None) == (sparsity_overall is None):
        raise ValueError("give exactly one of local or overall sparsity")
    if sparsity_overall is not None:
        sparsity_local = pruner.map_overall_to_local(
            model.param_count(), prunable_param_count(model), sparsity_overall)
    if not 0.0 <= sparsity_local < 1.0:
        raise ValueError("local sparsity must be in [0, 1)")
    if len(scores.layer_scores) != 2 * cfg.n_blocks:
        raise ValueError("scores do not match chain layer count")
    indices = []
    removed = 0
    per_neuron = prunable_param_count(model) // sum(cfg.d_ff)
    for b in range(cfg.n_blocks):
        vec = np.asarray(scores.layer_scores[2 * b], dtype=np.float64)
        if vec.shape[0] != cfg.d_ff[b]:
            raise ValueError(f"block {b}: score length mismatch")
        count = int(np.floor(sparsity_local * cfg.d_ff[b]))
        indices.append(pruner.select_lowest(vec, count))
        removed += count
    params_before = model.param_count()
    plan = LlmPrunePlan(indices, list(cfg.d_ff), sparsity_local, sparsity_overall)
    plan.accounting = {
        "params_before": params_before,
        "params_after": params_before - removed * per_neuron,
        "prunable_params": prunable_param_count(model),
    }
    return plan


def apply_llm(model: ToyTransformer, plan: LlmPrunePlan) -> ToyTransformer:
    if list(model.config.d_ff) != list(plan.d_ff):
        raise ValueError("plan is stale: intermediate widths do not match")
    out = model
    for b, idx in enumerate(plan.block_indices):
        if idx:
            out = toy_transformer.prune_intermediate(out, b, idx)
    return out


def _attn_beta(calib: CalibrationStats, block: int, role: str) -> np.ndarray:
    try:
        return np.asarray(calib.metadata["attn_norms"][block][role], dtype=np.float64)
    except (KeyError, IndexError) as e:
        raise ValueError("calibration stats lack attention projection norms") from e


def attention_extension_scores(model: ToyTransformer, chain_scores: ImportanceScores,
                               calib: CalibrationStats, params: WprParams,
                               use_cache: bool = True) -> list:
    """Per-row scores for each block's query/key/value projections.

    Each projection is treated as the final layer of an MLP made of all
    preceding FFN chain layers. With caching the already-computed chain
    scores provide the incoming importance for every shared prefix; without
    it each small MLP is rescored from scratch.
    """
    cfg = model.config
    view = chain_ffns(model)
    results = []
    for b in range(cfg.n_blocks):
        block_scores = {}
        for role in ("wq", "wk", "wv"):
            w = np.abs(model.tensors[f"blocks.{b}.{role}"].astype(np.float64))
            beta = _attn_beta(calib, b, role)
            if use_cache:
                prefix = chain_scores.input_scores if b == 0 \
                    else chain_scores.layer_scores[2 * b - 1]
                t_mat = centrality._layer_transitions(
                    ComponentGraph([w]), params)[0]
                tele = (1.0 - params.gamma) * beta / beta.sum()
                block_scores[role] = t_mat @ np.asarray(prefix) + tele
            else:
                blocks = [l.magnitude for l in view.layers[:2 * b]] + [w]
                sub_calib = CalibrationStats(
                    calib.input_norms,
                    list(calib.layer_norms[:2 * b]) + [beta],
                    sample_count=calib.sample_count,
                )
                sub = centrality.mlp_wpr(ComponentGraph(blocks), sub_calib, params)
                block_scores[role] = sub.layer_scores[-1]
        results.append(block_scores)
    return results

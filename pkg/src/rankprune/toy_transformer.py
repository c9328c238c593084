"""Minimal decoder-only transformer forward pass in numpy.

Two wiring styles are supported: "classic" (post-norm LayerNorm blocks,
sinusoidal positions, biased projections, two-layer FFN) and "llama"
(pre-norm RMSNorm, rotary positions, no biases, gated FFN). The latter
mirrors the reference HuggingFace Llama computation so exported real
checkpoints calibrate identically here.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import model_io
from .mlp_engine import apply_activation


@dataclass
class TransformerConfig:
    vocab: int = 64
    d_model: int = 8
    n_heads: int = 2
    n_blocks: int = 2
    d_ff: list | int = 16  # one width per block; an int applies to all
    ffn_kind: str = "two_layer"          # "two_layer" | "gated"
    activation: str = "relu"
    norm: str = "layernorm"              # "layernorm" | "rmsnorm"
    norm_placement: str = "post"         # "post" | "pre"
    positional: str = "sinusoidal"       # "sinusoidal" | "rotary"
    rope_theta: float = 10000.0
    norm_eps: float = 1e-5
    use_bias: bool = True

    def __post_init__(self):
        if isinstance(self.d_ff, int):
            self.d_ff = [self.d_ff] * self.n_blocks
        if len(self.d_ff) != self.n_blocks:
            raise ValueError("d_ff list must have one entry per block")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads


LLAMA_STYLE = dict(ffn_kind="gated", activation="silu", norm="rmsnorm",
                   norm_placement="pre", positional="rotary", use_bias=False)


@dataclass
class ToyTransformer:
    config: TransformerConfig
    tensors: dict  # name -> float32 array

    def param_count(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


def make_fixture(seed: int, config: TransformerConfig | None = None) -> ToyTransformer:
    """Deterministic random-weight model for structural tests."""
    cfg = config or TransformerConfig()
    rng = np.random.default_rng(seed)
    scale = 0.25 / math.sqrt(cfg.d_model)

    def w(*shape):
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    t = {"embedding": w(cfg.vocab, cfg.d_model)}
    for b in range(cfg.n_blocks):
        p = f"blocks.{b}."
        for norm in ("attn_norm", "ffn_norm"):
            t[p + norm + ".gain"] = np.ones(cfg.d_model, dtype=np.float32)
            if cfg.norm == "layernorm":
                t[p + norm + ".bias"] = np.zeros(cfg.d_model, dtype=np.float32)
        for name in ("wq", "wk", "wv", "wo"):
            t[p + name] = w(cfg.d_model, cfg.d_model)
            if cfg.use_bias:
                t[p + name + "_bias"] = np.zeros(cfg.d_model, dtype=np.float32)
        d_ff = cfg.d_ff[b]
        t[p + "up"] = w(d_ff, cfg.d_model)
        t[p + "down"] = w(cfg.d_model, d_ff)
        if cfg.ffn_kind == "gated":
            t[p + "gate"] = w(d_ff, cfg.d_model)
        if cfg.use_bias:
            t[p + "up_bias"] = np.zeros(d_ff, dtype=np.float32)
            t[p + "down_bias"] = np.zeros(cfg.d_model, dtype=np.float32)
    t["final_norm.gain"] = np.ones(cfg.d_model, dtype=np.float32)
    if cfg.norm == "layernorm":
        t["final_norm.bias"] = np.zeros(cfg.d_model, dtype=np.float32)
    t["lm_head"] = w(cfg.vocab, cfg.d_model)
    return ToyTransformer(cfg, t)


# ---------------------------------------------------------------------------
# forward pass

def _norm(model: ToyTransformer, prefix: str, x: np.ndarray) -> np.ndarray:
    cfg = model.config
    gain = model.tensors[prefix + ".gain"].astype(np.float64)
    if cfg.norm == "rmsnorm":
        rms = np.sqrt(np.mean(x**2, axis=-1, keepdims=True) + cfg.norm_eps)
        return x / rms * gain
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    bias = model.tensors[prefix + ".bias"].astype(np.float64)
    return (x - mean) / np.sqrt(var + cfg.norm_eps) * gain + bias


def _proj(model: ToyTransformer, name: str, x: np.ndarray) -> np.ndarray:
    y = x @ model.tensors[name].astype(np.float64).T
    bias = model.tensors.get(name + "_bias")
    if bias is not None:
        y = y + bias.astype(np.float64)
    return y


def sinusoidal_encoding(seq: int, d_model: int) -> np.ndarray:
    pos = np.arange(seq)[:, None].astype(np.float64)
    i = np.arange(0, d_model, 2).astype(np.float64)
    angles = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((seq, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : pe[:, 1::2].shape[1]])
    return pe


def _rotary(x: np.ndarray, theta: float) -> np.ndarray:
    """Apply rotary embedding; x is (heads, seq, d_k), half-split convention."""
    _, seq, d_k = x.shape
    inv_freq = 1.0 / theta ** (np.arange(0, d_k, 2).astype(np.float64) / d_k)
    freqs = np.arange(seq)[:, None] * inv_freq[None, :]          # (seq, d_k/2)
    cos = np.cos(np.concatenate([freqs, freqs], axis=-1))        # (seq, d_k)
    sin = np.sin(np.concatenate([freqs, freqs], axis=-1))
    half = d_k // 2
    rotated = np.concatenate([-x[..., half:], x[..., :half]], axis=-1)
    return x * cos + rotated * sin


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _attention(model: ToyTransformer, b: int, x: np.ndarray, trace: dict | None):
    cfg = model.config
    seq = x.shape[0]
    p = f"blocks.{b}."
    q, k, v = (_proj(model, p + n, x) for n in ("wq", "wk", "wv"))
    if trace is not None:
        trace["q"].append(q)
        trace["k"].append(k)
        trace["v"].append(v)

    def split(h):  # (seq, d_model) -> (heads, seq, d_k)
        return h.reshape(seq, cfg.n_heads, cfg.d_k).transpose(1, 0, 2)

    qh, kh, vh = split(q), split(k), split(v)
    if cfg.positional == "rotary":
        qh = _rotary(qh, cfg.rope_theta)
        kh = _rotary(kh, cfg.rope_theta)
    scores = qh @ kh.transpose(0, 2, 1) / math.sqrt(cfg.d_k)
    mask = np.triu(np.full((seq, seq), -np.inf), k=1)
    probs = _softmax(scores + mask)
    if trace is not None:
        trace["attn"].append(probs)
    out = (probs @ vh).transpose(1, 0, 2).reshape(seq, cfg.d_model)
    return _proj(model, p + "wo", out)


def _ffn(model: ToyTransformer, b: int, x: np.ndarray, trace: dict | None):
    cfg = model.config
    p = f"blocks.{b}."
    if trace is not None:
        trace["ffn_input"].append(x)
    if cfg.ffn_kind == "gated":
        inter = apply_activation(cfg.activation, _proj(model, p + "gate", x)) \
            * _proj(model, p + "up", x)
    else:
        inter = apply_activation(cfg.activation, _proj(model, p + "up", x))
    out = _proj(model, p + "down", inter)
    if trace is not None:
        trace["ffn_intermediate"].append(inter)
        trace["ffn_output"].append(out)
    return out


def forward(model: ToyTransformer, token_ids, trace: dict | None = None) -> np.ndarray:
    """Per-position logits (seq, vocab) for one token id sequence."""
    cfg = model.config
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= cfg.vocab:
        raise ValueError("token id out of vocabulary range")
    h = model.tensors["embedding"].astype(np.float64)[ids]
    if cfg.positional == "sinusoidal":
        h = h + sinusoidal_encoding(len(ids), cfg.d_model)
    for b in range(cfg.n_blocks):
        p = f"blocks.{b}."
        if cfg.norm_placement == "pre":
            h = h + _attention(model, b, _norm(model, p + "attn_norm", h), trace)
            h = h + _ffn(model, b, _norm(model, p + "ffn_norm", h), trace)
        else:
            h = _norm(model, p + "attn_norm", h + _attention(model, b, h, trace))
            h = _norm(model, p + "ffn_norm", h + _ffn(model, b, h, trace))
    h = _norm(model, "final_norm", h)
    return h @ model.tensors["lm_head"].astype(np.float64).T


def forward_with_trace(model: ToyTransformer, token_ids):
    trace = {"ffn_input": [], "ffn_intermediate": [], "ffn_output": [],
             "q": [], "k": [], "v": [], "attn": []}
    logits = forward(model, token_ids, trace)
    return logits, trace


# ---------------------------------------------------------------------------
# serialization

def transformer_manifest(model: ToyTransformer) -> dict:
    cfg = model.config
    return {
        "model_type": "decoder_transformer",
        "vocab": cfg.vocab,
        "d_model": cfg.d_model,
        "n_heads": cfg.n_heads,
        "n_blocks": cfg.n_blocks,
        "d_ff": list(cfg.d_ff),
        "ffn_kind": cfg.ffn_kind,
        "activation": cfg.activation,
        "norm": cfg.norm,
        "norm_placement": cfg.norm_placement,
        "positional": cfg.positional,
        "rope_theta": cfg.rope_theta,
        "norm_eps": cfg.norm_eps,
        "use_bias": cfg.use_bias,
        "param_count": model.param_count(),
    }


def write_transformer(model: ToyTransformer, path) -> None:
    tensors = [(name, model.tensors[name]) for name in sorted(model.tensors)]
    model_io.write_container(transformer_manifest(model), tensors, path)


def transformer_from_container(manifest: dict, tensors: dict) -> ToyTransformer:
    cfg = TransformerConfig(
        vocab=manifest["vocab"], d_model=manifest["d_model"],
        n_heads=manifest["n_heads"], n_blocks=manifest["n_blocks"],
        d_ff=list(manifest["d_ff"]), ffn_kind=manifest["ffn_kind"],
        activation=manifest["activation"], norm=manifest["norm"],
        norm_placement=manifest["norm_placement"],
        positional=manifest["positional"], rope_theta=manifest["rope_theta"],
        norm_eps=manifest["norm_eps"], use_bias=manifest["use_bias"],
    )
    fixed = {
        name: arr.reshape(-1) if name.endswith((".gain", ".bias", "_bias")) else arr
        for name, arr in tensors.items()
    }
    return ToyTransformer(cfg, fixed)


def prune_intermediate(model: ToyTransformer, block: int, indices) -> ToyTransformer:
    """Remove intermediate FFN neurons of one block: rows of up (and gate),
    the matching bias entries, and columns of down."""
    cfg = model.config
    d_ff = cfg.d_ff[block]
    indices = sorted(set(int(i) for i in indices))
    if indices and (indices[0] < 0 or indices[-1] >= d_ff):
        raise IndexError("intermediate index out of range")
    if len(indices) >= d_ff:
        raise ValueError("cannot remove every intermediate neuron")
    keep = np.setdiff1d(np.arange(d_ff), indices)
    t = dict(model.tensors)
    p = f"blocks.{block}."
    t[p + "up"] = t[p + "up"][keep]
    if p + "gate" in t:
        t[p + "gate"] = t[p + "gate"][keep]
    if p + "up_bias" in t:
        t[p + "up_bias"] = t[p + "up_bias"][keep]
    t[p + "down"] = t[p + "down"][:, keep]
    new_dff = list(cfg.d_ff)
    new_dff[block] = len(keep)
    return ToyTransformer(replace(cfg, d_ff=new_dff), t)

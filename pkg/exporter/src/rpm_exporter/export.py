"""Export a decoder-only checkpoint (llama-family layout) to the pruning
toolkit's container format, together with chain-aligned calibration norms.

The exporter is the only component that runs the original model; it captures
post-activation l2 norms with forward hooks on the unchanged network and
writes them as plain data. The toolkit consumes the emitted files without
ever needing torch or transformers.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import container

# tensor roles a llama-family block must provide, and their manifest names
_BLOCK_ROLES = {
    "self_attn.q_proj": "wq",
    "self_attn.k_proj": "wk",
    "self_attn.v_proj": "wv",
    "self_attn.o_proj": "wo",
    "mlp.gate_proj": "gate",
    "mlp.up_proj": "up",
    "mlp.down_proj": "down",
    "input_layernorm": "attn_norm.gain",
    "post_attention_layernorm": "ffn_norm.gain",
}


class UnsupportedArchitecture(ValueError):
    pass


@dataclass
class ExportConfig:
    checkpoint: str
    output_model: str
    output_calib: str
    samples: int = 16
    seq_len: int = 16
    seed: int = 0
    tokens_file: str = None  # JSON list of token id sequences
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")


def _load_model(path):
    from transformers import AutoModelForCausalLM
    model = AutoModelForCausalLM.from_pretrained(path, torch_dtype=torch.float32)
    model.eval()
    return model


def _module(root, dotted):
    cur = root
    for part in dotted.split("."):
        cur = getattr(cur, part, None)
        if cur is None:
            return None
    return cur


def _check_architecture(model):
    missing = []
    base = getattr(model, "model", None)
    if base is None or _module(base, "embed_tokens") is None:
        missing.append("embed_tokens")
    layers = getattr(base, "layers", None) if base is not None else None
    if not layers:
        missing.append("layers")
    else:
        for dotted in _BLOCK_ROLES:
            if _module(layers[0], dotted) is None:
                missing.append(dotted)
    if base is None or _module(base, "norm") is None:
        missing.append("norm")
    if _module(model, "lm_head") is None:
        missing.append("lm_head")
    if missing:
        raise UnsupportedArchitecture(
            "checkpoint lacks required tensor roles: " + ", ".join(missing))
    cfg = model.config
    if getattr(cfg, "num_key_value_heads", cfg.num_attention_heads) \
            != cfg.num_attention_heads:
        raise UnsupportedArchitecture(
            "grouped-query attention is not representable in the container")


def _np(tensor):
    return tensor.detach().to(torch.float32).cpu().numpy()


def build_manifest_tensors(model):
    """Map checkpoint weights to the container's manifest and tensor names."""
    cfg = model.config
    base = model.model
    n_blocks = len(base.layers)
    tensors = {"embedding": _np(base.embed_tokens.weight),
               "final_norm.gain": _np(base.norm.weight),
               "lm_head": _np(model.lm_head.weight)}
    d_ff = []
    for b, layer in enumerate(base.layers):
        p = f"blocks.{b}."
        for dotted, role in _BLOCK_ROLES.items():
            tensors[p + role] = _np(_module(layer, dotted).weight)
        d_ff.append(layer.mlp.gate_proj.weight.shape[0])
    manifest = {
        "model_type": "decoder_transformer",
        "vocab": cfg.vocab_size,
        "d_model": cfg.hidden_size,
        "n_heads": cfg.num_attention_heads,
        "n_blocks": n_blocks,
        "d_ff": d_ff,
        "ffn_kind": "gated",
        "activation": cfg.hidden_act,
        "norm": "rmsnorm",
        "norm_placement": "pre",
        "positional": "rotary",
        "rope_theta": float(getattr(cfg, "rope_theta", 10000.0)),
        "norm_eps": float(cfg.rms_norm_eps),
        "use_bias": False,
        "param_count": sum(int(t.size) for t in tensors.values()),
    }
    return manifest, tensors


def calibration_batches(config: ExportConfig, vocab: int):
    if config.tokens_file:
        batches = json.loads(Path(config.tokens_file).read_text())
        source = config.tokens_file
    else:
        rng = np.random.default_rng(config.seed)
        batches = [rng.integers(0, vocab, size=config.seq_len).tolist()
                   for _ in range(config.samples)]
        source = "seeded-random"
    if not batches:
        raise ValueError("no calibration token sequences")
    return batches, source


def capture_norms(model, batches):
    """Chain-aligned l2 norms over every token position, via forward hooks
    on the unchanged model: ffn input of the first block, then per block the
    intermediate and output activations; q/k/v projection outputs ride along
    for the attention extension."""
    base = model.model
    n_blocks = len(base.layers)
    d_model = model.config.hidden_size
    sq_input = np.zeros(d_model)
    sq_layers = [np.zeros(layer.mlp.gate_proj.weight.shape[0] if i % 2 == 0
                          else d_model)
                 for b, layer in enumerate(base.layers) for i in (0, 1)]
    sq_attn = [{r: np.zeros(d_model) for r in ("wq", "wk", "wv")}
               for _ in range(n_blocks)]

    def sq(t):
        return (t.detach().to(torch.float64) ** 2).sum(dim=(0, 1)).numpy()

    hooks = []

    def add(module, fn, pre=False):
        hooks.append(module.register_forward_pre_hook(fn) if pre
                     else module.register_forward_hook(fn))

    for b, layer in enumerate(base.layers):
        def ffn_pre(module, args, b=b):
            if b == 0:
                sq_input[:] += sq(args[0])

        def inter_pre(module, args, b=b):
            sq_layers[2 * b] += sq(args[0])

        def ffn_out(module, args, out, b=b):
            sq_layers[2 * b + 1] += sq(out)

        add(layer.mlp, ffn_pre, pre=True)
        add(layer.mlp.down_proj, inter_pre, pre=True)
        add(layer.mlp, ffn_out)
        for role, name in (("wq", "q_proj"), ("wk", "k_proj"), ("wv", "v_proj")):
            def attn_out(module, args, out, b=b, role=role):
                sq_attn[b][role] += sq(out)
            add(getattr(layer.self_attn, name), attn_out)

    n_tokens = 0
    try:
        with torch.no_grad():
            for ids in batches:
                n_tokens += len(ids)
                model(torch.tensor([list(ids)], dtype=torch.long))
    finally:
        for h in hooks:
            h.remove()

    meta = {
        "kind": "decoder_transformer",
        "token_count": n_tokens,
        "attn_norms": [
            {role: [float(x) for x in np.sqrt(v)] for role, v in block.items()}
            for block in sq_attn
        ],
    }
    return np.sqrt(sq_input), [np.sqrt(s) for s in sq_layers], meta


def export(config: ExportConfig) -> None:
    model = _load_model(config.checkpoint)
    _check_architecture(model)
    manifest, tensors = build_manifest_tensors(model)
    ordered = [(name, tensors[name]) for name in sorted(tensors)]
    container.write_container(manifest, ordered, config.output_model)

    batches, source = calibration_batches(config, manifest["vocab"])
    input_norms, layer_norms, meta = capture_norms(model, batches)
    meta.update({"seed": config.seed, "token_source": source,
                 "calibration_sample_count": len(batches),
                 "checkpoint": str(config.checkpoint)})
    meta.update(config.metadata)
    container.write_calib(input_norms, layer_norms, len(batches), meta,
                          config.output_calib)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rpm-export")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--output-model", required=True)
    parser.add_argument("--output-calib", required=True)
    parser.add_argument("--samples", type=int, default=16)
    parser.add_argument("--seq-len", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tokens", default=None,
                        help="JSON file with token id sequences")
    args = parser.parse_args(argv)
    try:
        export(ExportConfig(args.checkpoint, args.output_model,
                            args.output_calib, samples=args.samples,
                            seq_len=args.seq_len, seed=args.seed,
                            tokens_file=args.tokens))
    except (UnsupportedArchitecture, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: train, calibrate, score, plan, prune, eval,
chain-info, export-graph, toy-fixture, report.

Exit codes: 0 success, 1 usage error, 2 data/validation error. Diagnostics
go to stderr; machine-readable JSON to stdout or --output."""

import argparse
import json
import sys

import numpy as np

from . import (__version__, centrality, graph_repr, llm_chain, mlp_engine,
               model_io, pruner, scoring, toy_transformer)
from .centrality import WprParams
from .mlp_engine import MlpModel
from .toy_transformer import ToyTransformer

FORMAT_VERSION = model_io.FORMAT_VERSION


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2)
    if output:
        with open(output, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _load_model(path):
    try:
        return model_io.read_model(path)
    except FileNotFoundError as e:
        raise DataError(f"model file not found: {path}") from e
    except (model_io.ContainerError, ValueError) as e:
        raise DataError(f"cannot read model {path}: {e}") from e


def _load_dataset(images_path, labels_path=None):
    try:
        xs = model_io.read_idx_images(images_path)
        ys = model_io.read_idx_labels(labels_path) if labels_path else None
    except FileNotFoundError as e:
        raise DataError(str(e)) from e
    except ValueError as e:
        raise DataError(f"bad IDX file: {e}") from e
    if ys is not None and xs.shape[0] != ys.shape[0]:
        raise DataError(f"image/label count mismatch: {xs.shape[0]} vs {ys.shape[0]}")
    return xs, ys


def _mlp_prunable_params(model: MlpModel) -> int:
    total = 0
    layers = model.layers
    for k in range(len(layers) - 1):
        m, n = layers[k].weights.shape
        total += m * (n + 1 + layers[k + 1].weights.shape[0])
    return total


def cmd_train_mlp(args) -> int:
    xs, ys = _load_dataset(args.images, args.labels)
    widths = [int(w) for w in args.widths.split(",")]
    if widths[0] != xs.shape[1]:
        raise DataError(f"first width {widths[0]} does not match image size {xs.shape[1]}")
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(xs.shape[0])
    cut = int(0.8 * len(order))
    train_idx, eval_idx = order[:cut], order[cut:]
    model = mlp_engine.make_mlp(widths, activation=args.activation, seed=args.seed)
    cfg = mlp_engine.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                                 lr=args.lr, seed=args.seed, steps=args.steps)
    try:
        trained, loss = mlp_engine.train(model, xs[train_idx], ys[train_idx], cfg)
    except mlp_engine.TrainingDiverged as e:
        raise DataError(str(e)) from e
    metrics = mlp_engine.evaluate(trained, xs[eval_idx], ys[eval_idx])
    model_io.write_model(trained, args.output)
    _emit({"final_train_loss": loss, "eval": metrics, "model": args.output}, None)
    return 0


def cmd_calibrate(args) -> int:
    model = _load_model(args.model)
    if isinstance(model, MlpModel):
        if not args.images:
            raise UsageError("--images is required to calibrate an MLP model")
        xs, _ = _load_dataset(args.images)
        if args.calib_samples and args.calib_samples < xs.shape[0]:
            rng = np.random.default_rng(args.seed)
            xs = xs[rng.choice(xs.shape[0], args.calib_samples, replace=False)]
        stats = mlp_engine.calibrate(model, xs)
        stats.metadata = {"seed": args.seed, "calibration_sample_count": int(xs.shape[0])}
    else:
        if args.tokens:
            try:
                batches = json.loads(open(args.tokens).read())
            except (OSError, json.JSONDecodeError) as e:
                raise DataError(f"cannot read token file: {e}") from e
        else:
            rng = np.random.default_rng(args.seed)
            batches = [rng.integers(0, model.config.vocab, size=args.seq_len).tolist()
                       for _ in range(args.calib_samples)]
        stats = llm_chain.calibrate_transformer(model, batches)
        stats.metadata["seed"] = args.seed
        stats.metadata["calibration_sample_count"] = len(batches)
    model_io.write_calib(stats, args.output)
    return 0


def _wpr_params(args) -> WprParams:
    try:
        return WprParams(gamma=args.gamma, theta=args.theta,
                         tol=args.tol, max_iters=args.max_iters)
    except ValueError as e:
        raise UsageError(str(e)) from e


def cmd_score(args) -> int:
    model = _load_model(args.model)
    calib = None
    if args.method in ("wpr", "activation"):
        if not args.calib:
            raise UsageError(f"--calib is required for method {args.method!r}")
        calib = model_io.read_calib(args.calib)
    if args.method == "random" and args.seed is None:
        raise UsageError("--seed is required for method 'random'")

    try:
        if isinstance(model, MlpModel):
            method = scoring.ScoringMethod(args.method, params=_wpr_params(args),
                                           seed=args.seed)
            result = scoring.score(model, calib, method)
        else:
            result = _score_transformer(model, calib, args)
    except centrality.ConvergenceError as e:
        raise DataError(str(e)) from e
    except ValueError as e:
        raise DataError(str(e)) from e
    model_io.write_scores(result, args.output)
    return 0


def _score_transformer(model: ToyTransformer, calib, args):
    view = llm_chain.chain_ffns(model)
    if args.method == "wpr":
        return llm_chain.score_chain(model, calib, _wpr_params(args))
    widths = view.widths
    if args.method == "l1norm":
        layer_scores = [l.magnitude.sum(axis=1) for l in view.layers]
        meta = {"method": "l1norm"}
    elif args.method == "activation":
        layer_scores = [np.asarray(v, dtype=np.float64) for v in calib.layer_norms]
        meta = {"method": "activation"}
    else:
        rng = np.random.default_rng(args.seed)
        layer_scores = [rng.uniform(0.0, 1.0, size=w) for w in widths[1:]]
        meta = {"method": "random", "seed": args.seed}
    return centrality.ImportanceScores(np.zeros(widths[0]), layer_scores, meta)


def cmd_plan(args) -> int:
    if (args.sparsity_local is None) == (args.sparsity_overall is None):
        raise UsageError("give exactly one of --sparsity-local or --sparsity-overall")
    model = _load_model(args.model)
    scores = model_io.read_scores(args.scores)
    try:
        if isinstance(model, MlpModel):
            local = args.sparsity_local
            if local is None:
                local = pruner.map_overall_to_local(
                    model.param_count(), _mlp_prunable_params(model),
                    args.sparsity_overall)
            p = pruner.plan(scores, local, model.widths, args.sparsity_overall)
        else:
            p = llm_chain.plan_llm(model, scores,
                                   sparsity_local=args.sparsity_local,
                                   sparsity_overall=args.sparsity_overall)
    except ValueError as e:
        raise DataError(str(e)) from e
    model_io.write_plan(p, args.output)
    return 0


def cmd_prune(args) -> int:
    model = _load_model(args.model)
    plan = model_io.read_plan(args.plan)
    try:
        if isinstance(model, MlpModel):
            pruned = pruner.apply(model, plan)
        else:
            pruned = llm_chain.apply_llm(model, plan)
    except (ValueError, IndexError) as e:
        raise DataError(str(e)) from e
    model_io.write_model(pruned, args.output)
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    if not isinstance(model, MlpModel):
        raise DataError("eval supports MLP models only")
    xs, ys = _load_dataset(args.images, args.labels)
    try:
        metrics = mlp_engine.evaluate(model, xs, ys)
    except ValueError as e:
        raise DataError(str(e)) from e
    _emit(metrics, args.output)
    return 0


def cmd_chain_info(args) -> int:
    model = _load_model(args.model)
    if isinstance(model, MlpModel):
        _emit({"model_type": "mlp", "widths": model.widths,
               "param_count": model.param_count()}, args.output)
        return 0
    view = llm_chain.chain_ffns(model)
    cfg = model.config
    _emit({
        "model_type": "decoder_transformer",
        "chain_widths": view.widths,
        "n_blocks": cfg.n_blocks,
        "d_model": cfg.d_model,
        "d_ff": list(cfg.d_ff),
        "ffn_kind": cfg.ffn_kind,
        "param_count": model.param_count(),
        "prunable_params": llm_chain.prunable_param_count(model),
    }, args.output)
    return 0


def cmd_export_graph(args) -> int:
    model = _load_model(args.model)
    if not isinstance(model, MlpModel):
        raise DataError("export-graph supports MLP models only")
    try:
        graph = graph_repr.assemble_block_graph(model)
    except ValueError as e:
        raise DataError(str(e)) from e
    _emit({
        "node_count": int(graph.node_count),
        "layer_offsets": [int(o) for o in graph.layer_offsets],
        "weight": graph.weight.tolist(),
        "adjacency": graph.adjacency.tolist(),
    }, args.output)
    return 0


def cmd_toy_fixture(args) -> int:
    style = dict(toy_transformer.LLAMA_STYLE) if args.style == "llama" else {}
    if args.ffn_kind:
        style["ffn_kind"] = args.ffn_kind
        if args.ffn_kind == "gated" and args.style != "llama":
            style.setdefault("activation", "gelu")
    cfg = toy_transformer.TransformerConfig(
        vocab=args.vocab, d_model=args.d_model, n_heads=args.heads,
        n_blocks=args.blocks, d_ff=[args.d_ff] * args.blocks, **style)
    model = toy_transformer.make_fixture(args.seed, cfg)
    model_io.write_model(model, args.output)
    return 0


def cmd_report(args) -> int:
    plan = model_io.read_plan(args.plan)
    if isinstance(plan, pruner.PrunePlan):
        _emit(pruner.speedup_report(plan), args.output)
    else:
        acc = plan.accounting
        ratio = acc["params_after"] / acc["params_before"]
        _emit({**acc, "params_ratio": ratio,
               "sparsity_local": plan.sparsity_local}, args.output)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rankprune")
    parser.add_argument("--version", action="version",
                        version=f"rankprune {__version__} (format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-mlp")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--widths", required=True, help="comma-separated, e.g. 784,256,10")
    p.add_argument("--activation", default="relu")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_train_mlp)

    p = sub.add_parser("calibrate")
    p.add_argument("--model", required=True)
    p.add_argument("--images")
    p.add_argument("--tokens", help="JSON file with token id sequences")
    p.add_argument("--calib-samples", type=int, default=128)
    p.add_argument("--seq-len", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score")
    p.add_argument("--model", required=True)
    p.add_argument("--calib")
    p.add_argument("--method", required=True,
                   choices=["wpr", "l1norm", "activation", "random"])
    p.add_argument("--gamma", type=float, default=0.85)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("plan")
    p.add_argument("--scores", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--sparsity-local", type=float, default=None)
    p.add_argument("--sparsity-overall", type=float, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("prune")
    p.add_argument("--model", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chain-info")
    p.add_argument("--model", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_chain_info)

    p = sub.add_parser("export-graph")
    p.add_argument("--model", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("toy-fixture")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--style", choices=["classic", "llama"], default="classic")
    p.add_argument("--vocab", type=int, default=64)
    p.add_argument("--d-model", type=int, default=8)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--d-ff", type=int, default=16)
    p.add_argument("--ffn-kind", choices=["two_layer", "gated"], default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_toy_fixture)

    p = sub.add_parser("report")
    p.add_argument("--plan", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (model_io.ContainerError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Dense feedforward networks: construction, forward pass, Adam training,
top-k evaluation and calibration activation statistics."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg

ACTIVATION_KINDS = ("relu", "sigmoid", "gelu", "silu", "identity")


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf during training."""


def apply_activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    if kind == "gelu":
        # tanh approximation, standard in transformer implementations
        return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))
    if kind == "silu":
        return x / (1.0 + np.exp(-x))
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation kind: {kind!r}")


def activation_grad(kind: str, x: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation values x."""
    if kind == "relu":
        return (x > 0.0).astype(x.dtype)
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-x))
        return s * (1.0 - s)
    if kind == "gelu":
        c = math.sqrt(2.0 / math.pi)
        t = np.tanh(c * (x + 0.044715 * x**3))
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * c * (1.0 + 3 * 0.044715 * x**2)
    if kind == "silu":
        s = 1.0 / (1.0 + np.exp(-x))
        return s * (1.0 + x * (1.0 - s))
    if kind == "identity":
        return np.ones_like(x)
    raise ValueError(f"unknown activation kind: {kind!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (m, n) float32
    bias: np.ndarray     # (m,) float32
    activation: str

    def __post_init__(self):
        self.weights = linalg.as_matrix(self.weights)
        self.bias = linalg.as_vector(self.bias)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise linalg.ShapeError("bias length must equal weight rows")
        if self.activation not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind: {self.activation!r}")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class MlpModel:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.in_dim != a.out_dim:
                raise linalg.ShapeError(
                    f"layer width mismatch: {a.out_dim} feeds {b.in_dim}"
                )
        for layer in self.layers:
            if layer.out_dim == 0 or layer.in_dim == 0:
                raise ValueError("degenerate zero-width layer")

    @property
    def widths(self) -> list:
        """[input width, layer 1 width, ..., output width]."""
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    def param_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@dataclass
class CalibrationStats:
    """Per-neuron L2 norms of post-activation outputs over a calibration set.

    input_norms covers the raw input features (surrogate nodes); layer_norms[k]
    covers the outputs of layer k.
    """
    input_norms: np.ndarray
    layer_norms: list
    sample_count: int = 0
    metadata: dict = field(default_factory=dict)


def make_mlp(widths, activation="relu", seed=0, last_identity=True) -> MlpModel:
    """Seeded Kaiming-uniform initialised MLP with the given layer widths."""
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(widths) - 1
    for k in range(n_layers):
        n, m = widths[k], widths[k + 1]
        bound = math.sqrt(6.0 / n)
        w = rng.uniform(-bound, bound, size=(m, n)).astype(np.float32)
        b = np.zeros(m, dtype=np.float32)
        kind = "identity" if (last_identity and k == n_layers - 1) else activation
        layers.append(Layer(w, b, kind))
    return MlpModel(layers)


def forward(model: MlpModel, x: np.ndarray) -> list:
    """Per-layer post-activation values X^(1)..X^(K) for a single input."""
    acts = []
    h = np.asarray(x, dtype=np.float64)
    if h.shape[0] != model.layers[0].in_dim:
        raise linalg.ShapeError("input length does not match first layer")
    for layer in model.layers:
        z = linalg.matvec(layer.weights, h) + layer.bias.astype(np.float64)
        h = apply_activation(layer.activation, z)
        acts.append(h)
    return acts


def forward_batch(model: MlpModel, xs: np.ndarray, keep_all=False):
    """Batched forward; xs is (samples, features). Returns logits, or all
    per-layer activations when keep_all is set."""
    h = np.asarray(xs, dtype=np.float64)
    all_acts = []
    for layer in model.layers:
        z = h @ layer.weights.T.astype(np.float64) + layer.bias.astype(np.float64)
        h = apply_activation(layer.activation, z)
        if keep_all:
            all_acts.append(h)
    return all_acts if keep_all else h


def calibrate(model: MlpModel, samples: np.ndarray) -> CalibrationStats:
    """L2 norm of every neuron's post-activation output across samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("calibration set is empty")
    acts = forward_batch(model, samples, keep_all=True)
    input_norms = np.linalg.norm(samples, axis=0)
    layer_norms = [np.linalg.norm(a, axis=0) for a in acts]
    return CalibrationStats(input_norms, layer_norms, sample_count=samples.shape[0])


def merge_calibration(a: CalibrationStats, b: CalibrationStats) -> CalibrationStats:
    """Combine two runs; norms compose as root of summed squares."""
    return CalibrationStats(
        np.sqrt(a.input_norms**2 + b.input_norms**2),
        [np.sqrt(x**2 + y**2) for x, y in zip(a.layer_norms, b.layer_norms)],
        sample_count=a.sample_count + b.sample_count,
    )


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and gradient w.r.t. logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.mean(np.log(probs[np.arange(n), labels] + 1e-300))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    steps: int = 0  # if > 0, stop after this many minibatch steps


def train(model: MlpModel, xs: np.ndarray, labels: np.ndarray,
          config: TrainConfig | None = None) -> tuple:
    """Adam-trained copy of the model; deterministic for a fixed seed.

    Returns (trained model, final minibatch loss).
    """
    cfg = config or TrainConfig()
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)

    ws = [l.weights.astype(np.float64) for l in model.layers]
    bs = [l.bias.astype(np.float64) for l in model.layers]
    kinds = [l.activation for l in model.layers]
    m_w = [np.zeros_like(w) for w in ws]
    v_w = [np.zeros_like(w) for w in ws]
    m_b = [np.zeros_like(b) for b in bs]
    v_b = [np.zeros_like(b) for b in bs]

    n = xs.shape[0]
    step = 0
    loss = math.nan
    done = False
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = xs[idx], labels[idx]

            # forward, keeping pre-activations for backprop
            pre, post = [], [xb]
            h = xb
            for w, b, kind in zip(ws, bs, kinds):
                z = h @ w.T + b
                h = apply_activation(kind, z)
                pre.append(z)
                post.append(h)

            loss, dlogits = softmax_cross_entropy(post[-1], yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at step {step}")

            delta = dlogits * activation_grad(kinds[-1], pre[-1])
            grads_w, grads_b = [None] * len(ws), [None] * len(ws)
            for k in range(len(ws) - 1, -1, -1):
                grads_w[k] = delta.T @ post[k]
                grads_b[k] = delta.sum(axis=0)
                if k > 0:
                    delta = (delta @ ws[k]) * activation_grad(kinds[k - 1], pre[k - 1])

            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for k in range(len(ws)):
                for p, g, mm, vv in ((ws[k], grads_w[k], m_w[k], v_w[k]),
                                     (bs[k], grads_b[k], m_b[k], v_b[k])):
                    mm *= cfg.beta1
                    mm += (1 - cfg.beta1) * g
                    vv *= cfg.beta2
                    vv += (1 - cfg.beta2) * g**2
                    p -= cfg.lr * (mm / bc1) / (np.sqrt(vv / bc2) + cfg.eps)
            if cfg.steps and step >= cfg.steps:
                done = True
                break
        if done:
            break

    trained = MlpModel([
        Layer(w.astype(np.float32), b.astype(np.float32), kind)
        for w, b, kind in zip(ws, bs, kinds)
    ])
    return trained, float(loss)


def evaluate(model: MlpModel, xs: np.ndarray, labels: np.ndarray) -> dict:
    """Top-1/top-5 accuracy in percent; ties broken by lower class index."""
    logits = forward_batch(model, xs)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label out of range of output width")
    # stable sort on (-logit, index): equal logits rank lower index first
    order = np.argsort(-logits, axis=1, kind="stable")
    top1 = float(np.mean(order[:, 0] == labels) * 100.0)
    k = min(5, n_classes)
    top5 = float(np.mean((order[:, :k] == labels[:, None]).any(axis=1)) * 100.0)
    return {"top1": top1, "top5": top5}

"""Shared builders for randomized test models and calibration stats."""

import numpy as np

from rankprune import mlp_engine


def random_mlp(rng, widths=None, activation="relu"):
    if widths is None:
        n_layers = rng.integers(2, 6)
        widths = [int(rng.integers(2, 9)) for _ in range(n_layers + 1)]
    layers = []
    for n, m in zip(widths, widths[1:]):
        layers.append(mlp_engine.Layer(
            rng.standard_normal((m, n)).astype(np.float32),
            rng.standard_normal(m).astype(np.float32),
            activation,
        ))
    return mlp_engine.MlpModel(layers)


def random_calib(rng, model):
    samples = rng.standard_normal((8, model.layers[0].in_dim)) + 2.0
    return mlp_engine.calibrate(model, samples)

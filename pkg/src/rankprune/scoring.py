"""Uniform scoring interface: centrality scores plus the three baselines
(row L1 norm, calibration activation norm, seeded random)."""

from dataclasses import dataclass

import numpy as np

from . import centrality, graph_repr
from .centrality import ImportanceScores, WprParams
from .mlp_engine import CalibrationStats, MlpModel

METHODS = ("wpr", "l1norm", "activation", "random")


@dataclass
class ScoringMethod:
    name: str
    params: WprParams = None
    seed: int = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown scoring method {self.name!r}")
        if self.name == "wpr" and self.params is None:
            self.params = WprParams()
        if self.name == "random" and self.seed is None:
            raise ValueError("random scoring requires an explicit seed")


def score(model: MlpModel, calib: CalibrationStats | None,
          method: ScoringMethod) -> ImportanceScores:
    widths = model.widths
    if method.name == "wpr":
        if calib is None:
            raise ValueError("wpr scoring requires calibration stats")
        component = graph_repr.decompose(model)
        return centrality.mlp_wpr(component, calib, method.params)
    if method.name == "l1norm":
        layer_scores = [np.abs(l.weights.astype(np.float64)).sum(axis=1)
                        for l in model.layers]
        meta = {"method": "l1norm"}
    elif method.name == "activation":
        if calib is None:
            raise ValueError("activation scoring requires calibration stats")
        layer_scores = [np.asarray(v, dtype=np.float64) for v in calib.layer_norms]
        meta = {"method": "activation"}
    else:  # random
        rng = np.random.default_rng(method.seed)
        layer_scores = [rng.uniform(0.0, 1.0, size=w) for w in widths[1:]]
        meta = {"method": "random", "seed": method.seed}
    return ImportanceScores(np.zeros(widths[0]), layer_scores, meta)

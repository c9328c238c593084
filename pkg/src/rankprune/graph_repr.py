"""Graph views of an MLP: the explicit block matrix over all neurons (used as
a test oracle at small scale) and the component-wise per-layer form used by
all production scoring."""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .mlp_engine import Layer, MlpModel

BLOCK_GRAPH_NODE_LIMIT = 4096


@dataclass
class BlockGraph:
    weight: np.ndarray      # |V| x |V| float64, block sub-diagonal
    adjacency: np.ndarray   # |V| x |V| 0/1
    layer_offsets: list     # starting node index of each layer's node group

    @property
    def node_count(self) -> int:
        return self.weight.shape[0]


@dataclass
class ComponentGraph:
    """Per-layer weight blocks; the adjacency of each block is all-ones
    (dense layers connect every input to every output)."""
    blocks: list  # list of (m, n) float arrays

    @property
    def widths(self) -> list:
        return [self.blocks[0].shape[1]] + [b.shape[0] for b in self.blocks]


def assemble_block_graph(model: MlpModel) -> BlockGraph:
    """Explicit |V| x |V| weight and adjacency matrices with each layer's
    weight block directly below the diagonal."""
    widths = model.widths
    total = sum(widths)
    if total > BLOCK_GRAPH_NODE_LIMIT:
        raise ValueError(f"block graph limited to {BLOCK_GRAPH_NODE_LIMIT} nodes, got {total}")
    weight = np.zeros((total, total), dtype=np.float64)
    adjacency = np.zeros((total, total), dtype=np.float64)
    offsets = np.concatenate([[0], np.cumsum(widths[:-1])]).astype(int)
    for k, layer in enumerate(model.layers):
        r0, c0 = offsets[k + 1], offsets[k]
        m, n = layer.weights.shape
        weight[r0:r0 + m, c0:c0 + n] = layer.weights
        adjacency[r0:r0 + m, c0:c0 + n] = 1.0
    return BlockGraph(weight, adjacency, list(offsets))


def decompose(model: MlpModel) -> ComponentGraph:
    return ComponentGraph([l.weights.astype(np.float64) for l in model.layers])


def component_matvec(component: ComponentGraph, x: np.ndarray) -> np.ndarray:
    """Evaluate the block-graph matvec without materialising it: the result is
    the concatenation of per-layer products, with zeros on the input nodes."""
    widths = component.widths
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != sum(widths):
        raise linalg.ShapeError("vector length does not match node count")
    pieces = [np.zeros(widths[0])]
    start = 0
    for k, block in enumerate(component.blocks):
        seg = x[start:start + widths[k]]
        pieces.append(block @ seg)
        start += widths[k]
    return np.concatenate(pieces)


def remove_neuron(model: MlpModel, k: int, i: int) -> MlpModel:
    """Drop neuron i of layer k: row i of W^(k) and b^(k), column i of
    W^(k+1). The final layer is never prunable."""
    n_layers = len(model.layers)
    if not 0 <= k < n_layers - 1:
        raise IndexError(f"layer {k} is not prunable (model has {n_layers} layers)")
    layer = model.layers[k]
    if not 0 <= i < layer.out_dim:
        raise IndexError(f"neuron {i} out of range for width {layer.out_dim}")
    if layer.out_dim == 1:
        raise ValueError("cannot remove the last neuron of a layer")
    new_layers = list(model.layers)
    new_layers[k] = Layer(
        linalg.delete_row(layer.weights, i),
        np.delete(layer.bias, i),
        layer.activation,
    )
    nxt = model.layers[k + 1]
    new_layers[k + 1] = Layer(linalg.delete_col(nxt.weights, i), nxt.bias, nxt.activation)
    return MlpModel(new_layers)

"""Sparse deep ReLU networks with shifted activations.

A network with ``L`` hidden layers and widths ``p_0, ..., p_{L+1}`` maps
``x`` to ``W_{L+1} s_L(W_L s_{L-1}(... s_1(W_1 x)))`` where
``s_l(y) = max(y - b_l, 0)`` subtracts the shift vector inside the ReLU.
The output layer has weights only.

All parameters live in one flat vector.  The ordering is layer-major
(``l = 1, ..., L+1``); inside a layer the weight matrix comes first in
row-major order, followed by the shift vector.  Indices are 0-based.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Architecture",
    "FlatIndexMap",
    "SparseNetwork",
    "count_params",
    "forward",
    "forward_flat",
    "densify",
    "sparsify",
    "sparsity",
    "sup_norm_estimate",
    "embed_indices",
    "to_text",
    "from_text",
    "InfeasibleSizeError",
]

MAX_GRID_POINTS = 10_000_000


class InfeasibleSizeError(ValueError):
    """Problem too large to handle exactly or within memory."""


@dataclass(frozen=True)
class Architecture:
    """Network skeleton: ``widths = (p_0, ..., p_{L+1})`` with ``p_{L+1} = 1``."""

    widths: tuple[int, ...]
    width_multiplier: Optional[int] = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValueError("an architecture needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        if widths[-1] != 1:
            raise ValueError("the output layer must have exactly one unit")
        if self.width_multiplier is not None:
            N = int(self.width_multiplier)
            if N < 1:
                raise ValueError("width multiplier must be >= 1")
            expected = 12 * widths[0] * N
            if any(w != expected for w in widths[1:-1]):
                raise ValueError(
                    f"template widths must all equal 12*p*N = {expected}, got {widths}"
                )

    @classmethod
    def template(cls, input_dim: int, N: int, depth: int) -> "Architecture":
        """Equal-width template ``(p, 12pN, ..., 12pN, 1)`` with ``depth`` hidden layers."""
        hidden = 12 * input_dim * N
        return cls((input_dim,) + (hidden,) * depth + (1,), width_multiplier=N)

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def depth(self) -> int:
        return len(self.widths) - 2

    @property
    def n_params(self) -> int:
        return count_params(self)

    def with_multiplier(self, N: int) -> "Architecture":
        return Architecture.template(self.input_dim, N, self.depth)


def count_params(arch: Architecture) -> int:
    """``T = sum_l p_{l+1}(p_l + 1) - p_{L+1}``."""
    w = arch.widths
    return sum(w[l + 1] * (w[l] + 1) for l in range(len(w) - 1)) - w[-1]


@dataclass(frozen=True)
class _Block:
    layer: int  # 1-based layer index
    kind: str  # "weight" or "shift"
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class FlatIndexMap:
    """Bijection between flat parameter indices and (layer, kind, row, col) slots."""

    def __init__(self, arch: Architecture):
        self.arch = arch
        blocks = []
        offset = 0
        w = arch.widths
        n_layers = len(w) - 1
        for l in range(1, n_layers + 1):
            shape = (w[l], w[l - 1])
            blocks.append(_Block(l, "weight", offset, shape))
            offset += shape[0] * shape[1]
            if l < n_layers:
                blocks.append(_Block(l, "shift", offset, (w[l],)))
                offset += w[l]
        self.blocks = tuple(blocks)
        self.size = offset
        self._starts = np.array([b.offset for b in blocks])

    def weight_block(self, layer: int) -> _Block:
        return self.blocks[2 * (layer - 1)]

    def shift_block(self, layer: int) -> _Block:
        if layer > self.arch.depth:
            raise IndexError("the output layer has no shift vector")
        return self.blocks[2 * (layer - 1) + 1]

    def position_of(self, j: int) -> tuple[int, str, int, int]:
        """Return ``(layer, kind, row, col)``; ``col`` is 0 for shifts."""
        if not 0 <= j < self.size:
            raise IndexError(f"flat index {j} outside [0, {self.size})")
        b = self.blocks[int(np.searchsorted(self._starts, j, side="right")) - 1]
        local = j - b.offset
        if b.kind == "weight":
            row, col = divmod(local, b.shape[1])
            return b.layer, "weight", row, col
        return b.layer, "shift", local, 0

    def index_of(self, layer: int, kind: str, row: int, col: int = 0) -> int:
        b = self.weight_block(layer) if kind == "weight" else self.shift_block(layer)
        if kind == "weight":
            if not (0 <= row < b.shape[0] and 0 <= col < b.shape[1]):
                raise IndexError("weight position out of range")
            return b.offset + row * b.shape[1] + col
        if not 0 <= row < b.shape[0] or col != 0:
            raise IndexError("shift position out of range")
        return b.offset + row


@lru_cache(maxsize=256)
def _index_map(arch: Architecture) -> FlatIndexMap:
    return FlatIndexMap(arch)


def _layer_views(arch: Architecture, beta: np.ndarray):
    """Yield ``(W_l, b_l)`` views into the flat vector; ``b`` is None for the output layer."""
    fmap = _index_map(arch)
    out = []
    for l in range(1, arch.depth + 2):
        wb = fmap.weight_block(l)
        W = beta[wb.offset : wb.offset + wb.size].reshape(wb.shape)
        if l <= arch.depth:
            sb = fmap.shift_block(l)
            b = beta[sb.offset : sb.offset + sb.size]
        else:
            b = None
        out.append((W, b))
    return out


def forward_flat(
    arch: Architecture, beta: np.ndarray, X: np.ndarray, clip_bound: float = math.inf
) -> np.ndarray:
    """Evaluate the network given by flat parameters ``beta`` at the rows of ``X``.

    Units with no nonzero incoming weight from a live unit and a zero shift are
    exactly zero and are skipped; the result is therefore unchanged, bit for
    bit, when dead units are appended to a layer.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ValueError(f"expected inputs of shape (n, {arch.input_dim}), got {X.shape}")
    layers = _layer_views(arch, beta)
    h = X.T
    live = np.arange(arch.input_dim)
    for W, b in layers[:-1]:
        Wl = W[:, live]
        alive = (Wl != 0).any(axis=1) | (b != 0)
        rows = np.flatnonzero(alive)
        # an all-dead layer still feeds later units whose negative shift makes them fire
        h = np.maximum(Wl[rows] @ h - b[rows, None], 0.0)
        live = rows
    W_out = layers[-1][0][:, live]
    out = (W_out @ h)[0]
    if math.isfinite(clip_bound):
        out = np.clip(out, -clip_bound, clip_bound)
    return out


@dataclass(frozen=True, eq=False)
class SparseNetwork:
    """One element of the sparse class: a pattern ``gamma`` plus bounded parameters ``beta``."""

    arch: Architecture
    gamma: np.ndarray
    beta: np.ndarray
    clip_bound: float = math.inf

    def __post_init__(self):
        T = count_params(self.arch)
        gamma = np.array(self.gamma, dtype=bool).reshape(-1)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        if gamma.shape != (T,) or beta.shape != (T,):
            raise ValueError(f"gamma and beta must have length T={T}")
        if np.any(beta[~gamma] != 0):
            raise ValueError("inactive coordinates must be exactly zero")
        if np.any(np.abs(beta) > 1):
            raise ValueError("parameters must satisfy |beta_j| <= 1")
        if not self.clip_bound > 0:
            raise ValueError("clip bound must be positive")
        gamma.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls, arch: Architecture, clip_bound: float = math.inf) -> "SparseNetwork":
        T = count_params(arch)
        return cls(arch, np.zeros(T, dtype=bool), np.zeros(T), clip_bound)

    @classmethod
    def from_beta(cls, arch: Architecture, beta, clip_bound: float = math.inf) -> "SparseNetwork":
        beta = np.asarray(beta, dtype=float)
        return cls(arch, beta != 0, beta, clip_bound)

    @property
    def n_params(self) -> int:
        return self.beta.size

    @property
    def s(self) -> int:
        return int(self.gamma.sum())

    def __call__(self, x):
        return forward(self, x)

    def __eq__(self, other):
        if not isinstance(other, SparseNetwork):
            return NotImplemented
        return (
            self.arch == other.arch
            and np.array_equal(self.gamma, other.gamma)
            and np.array_equal(self.beta, other.beta)
            and self.clip_bound == other.clip_bound
        )

    __hash__ = None


def forward(net: SparseNetwork, x):
    """Evaluate ``net`` at one point (returns float) or at the rows of an ``(n, p)`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != net.arch.input_dim:
            raise ValueError(f"point has dimension {x.shape[0]}, network expects {net.arch.input_dim}")
        return float(forward_flat(net.arch, net.beta, x[None, :], net.clip_bound)[0])
    return forward_flat(net.arch, net.beta, x, net.clip_bound)


def densify(net: SparseNetwork) -> list[tuple[np.ndarray, Optional[np.ndarray]]]:
    """Layered parameters ``[(W_1, b_1), ..., (W_L, b_L), (W_{L+1}, None)]`` as fresh arrays."""
    return [(W.copy(), None if b is None else b.copy()) for W, b in _layer_views(net.arch, net.beta)]


def sparsify(
    params: Sequence[tuple[np.ndarray, Optional[np.ndarray]]],
    arch: Optional[Architecture] = None,
    clip_bound: float = math.inf,
) -> SparseNetwork:
    """Flatten layered parameters; a slot is active iff its value is nonzero."""
    if arch is None:
        widths = [np.asarray(params[0][0]).shape[1]] + [np.asarray(W).shape[0] for W, _ in params]
        arch = Architecture(tuple(widths))
    if len(params) != arch.depth + 1:
        raise ValueError(f"expected {arch.depth + 1} layers, got {len(params)}")
    fmap = _index_map(arch)
    beta = np.zeros(fmap.size)
    for l, (W, b) in enumerate(params, start=1):
        W = np.asarray(W, dtype=float)
        wb = fmap.weight_block(l)
        if W.shape != wb.shape:
            raise ValueError(f"layer {l} weight shape {W.shape} != {wb.shape}")
        beta[wb.offset : wb.offset + wb.size] = W.ravel()
        if l <= arch.depth:
            b = np.zeros(wb.shape[0]) if b is None else np.asarray(b, dtype=float)
            sb = fmap.shift_block(l)
            if b.shape != sb.shape:
                raise ValueError(f"layer {l} shift shape {b.shape} != {sb.shape}")
            beta[sb.offset : sb.offset + sb.size] = b
        elif b is not None and np.any(np.asarray(b) != 0):
            raise ValueError("the output layer carries no shift")
    if np.any(np.abs(beta) > 1):
        raise ValueError("parameters exceed the bound |beta_j| <= 1")
    return SparseNetwork(arch, beta != 0, beta, clip_bound)


def sparsity(net: SparseNetwork) -> int:
    return int(np.count_nonzero(net.gamma))


def unit_grid(p: int, resolution: int) -> np.ndarray:
    """Tensor grid on ``[0, 1]^p`` with ``resolution`` points per axis, shape ``(resolution**p, p)``."""
    if resolution < 1:
        raise ValueError("grid resolution must be positive")
    if resolution**p > MAX_GRID_POINTS:
        raise InfeasibleSizeError(f"grid with {resolution}^{p} points exceeds {MAX_GRID_POINTS}")
    axis = np.linspace(0.0, 1.0, resolution) if resolution > 1 else np.array([0.0])
    mesh = np.meshgrid(*([axis] * p), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sup_norm_estimate(net: SparseNetwork, grid_resolution: int) -> float:
    """Max of ``|f|`` over a tensor grid; a lower bound on the sup norm."""
    X = unit_grid(net.arch.input_dim, grid_resolution)
    return float(np.max(np.abs(forward_flat(net.arch, net.beta, X, net.clip_bound))))


@lru_cache(maxsize=256)
def _embed_indices(small: Architecture, big: Architecture) -> np.ndarray:
    if small.depth != big.depth or small.input_dim != big.input_dim:
        raise ValueError("embedding needs equal depth and input dimension")
    if any(a > b for a, b in zip(small.widths, big.widths)):
        raise ValueError("target architecture must be at least as wide in every layer")
    fs, fb = _index_map(small), _index_map(big)
    pieces = []
    for bs, bb in zip(fs.blocks, fb.blocks):
        full = bb.offset + np.arange(bb.size).reshape(bb.shape)
        if bs.kind == "weight":
            pieces.append(full[: bs.shape[0], : bs.shape[1]].ravel())
        else:
            pieces.append(full[: bs.shape[0]])
    idx = np.concatenate(pieces)
    idx.setflags(write=False)
    return idx


def embed_indices(small: Architecture, big: Architecture) -> np.ndarray:
    """Flat positions in ``big`` of every slot of ``small`` (new units appended last)."""
    return _embed_indices(small, big)


def to_text(net: SparseNetwork) -> str:
    doc = {
        "widths": list(net.arch.widths),
        "width_multiplier": net.arch.width_multiplier,
        "clip_bound": repr(float(net.clip_bound)),
        "gamma": "".join("1" if g else "0" for g in net.gamma),
        "beta": [repr(float(b)) for b in net.beta],
    }
    return json.dumps(doc, indent=1)


def from_text(text: str) -> SparseNetwork:
    doc = json.loads(text)
    arch = Architecture(tuple(doc["widths"]), doc.get("width_multiplier"))
    gamma = np.array([c == "1" for c in doc["gamma"]], dtype=bool)
    beta = np.array([float(b) for b in doc["beta"]])
    return SparseNetwork(arch, gamma, beta, float(doc["clip_bound"]))

"""Stationary-vector computation and rank orderings.

`pagerank` works on anything exposing a column-stochastic transition: either
a plain square ndarray or an object with `size` and `matvec(x)`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConvergenceError

if TYPE_CHECKING:
    from .ingest import Registry

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10000


@dataclass(frozen=True)
class RankVector:
    """Probability vector over nodes plus solver metadata."""

    probabilities: np.ndarray
    iterations: int
    residual: float

    @property
    def size(self) -> int:
        return self.probabilities.shape[0]


@dataclass(frozen=True)
class RankIndex:
    """Permutation ordering nodes by decreasing probability.

    `order[k]` is the node at position k (0-based); `rank_of[node]` is the
    inverse lookup. Ties are broken by ascending node id.
    """

    order: np.ndarray
    rank_of: np.ndarray

    def top(self, k: int) -> np.ndarray:
        return self.order[:k]


def order_indices(vector: np.ndarray) -> RankIndex:
    """Stable decreasing sort of a probability (or any finite) vector."""
    vector = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise ValueError("cannot rank non-finite values")
    order = np.argsort(-vector, kind="stable")
    rank_of = np.empty_like(order)
    rank_of[order] = np.arange(order.shape[0])
    return RankIndex(order=order, rank_of=rank_of)


def _as_operator(matrix):
    if isinstance(matrix, np.ndarray):
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("dense operator must be a square matrix")
        return matrix.shape[0], lambda x: matrix @ x
    return matrix.size, matrix.matvec


def pagerank(
    matrix,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: np.ndarray | None = None,
) -> RankVector:
    """Power iteration for the stationary vector of a column-stochastic matrix.

    Args:
        matrix: square ndarray, or operator with `size` and `matvec`.
        tol: L1 bound on the fixed-point residual of the returned vector.
        max_iter: iteration cap before raising ConvergenceError.
        start: optional starting distribution (defaults to uniform).

    Returns:
        RankVector whose probabilities x satisfy sum(x) == 1 and
        ||matrix @ x - x||_1 < tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n, matvec = _as_operator(matrix)
    if start is None:
        x = np.full(n, 1.0 / n)
    else:
        x = np.asarray(start, dtype=np.float64)
        if x.shape != (n,) or np.any(x < 0) or x.sum() <= 0:
            raise ValueError("start must be a nonnegative vector of matching size")
        x = x / x.sum()
    residual = np.inf
    for it in range(max_iter + 1):
        y = matvec(x)
        residual = float(np.abs(y - x).sum())
        if residual < tol:
            return RankVector(probabilities=x, iterations=it, residual=residual)
        s = y.sum()
        if s <= 0:
            raise ConvergenceError("iteration collapsed to zero mass", it, residual)
        x = y / s  # renormalize to absorb floating-point drift
    raise ConvergenceError("power iteration did not converge", max_iter, residual)


def trace(vector, axis: str, registry: "Registry") -> np.ndarray:
    """Sum node probabilities to a per-country or per-product marginal."""
    probs = vector.probabilities if isinstance(vector, RankVector) else np.asarray(vector)
    grid = probs.reshape(registry.n_countries, registry.n_products)
    if axis == "country":
        return grid.sum(axis=1)
    if axis == "product":
        return grid.sum(axis=0)
    raise ValueError(f"axis must be 'country' or 'product', got {axis!r}")


def product_slice(vector, registry: "Registry", product: str) -> np.ndarray:
    """Per-country probabilities of a single product (local product ranking)."""
    probs = vector.probabilities if isinstance(vector, RankVector) else np.asarray(vector)
    grid = probs.reshape(registry.n_countries, registry.n_products)
    return grid[:, registry.product_index(product)].copy()


def write_node_ranks(path, probabilities: np.ndarray, registry: "Registry") -> None:
    """CSV export `node,country,product,probability,rank_index`, best first."""
    idx = order_indices(probabilities)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("node,country,product,probability,rank_index\n")
        for pos, node in enumerate(idx.order, start=1):
            fh.write(
                f"{node},{registry.country_of(node)},{registry.product_of(node)},"
                f"{float(probabilities[node])!r},{pos}\n"
            )


def write_marginal_ranks(path, probabilities: np.ndarray, labels, label_name: str) -> None:
    """CSV export `<label>,probability,rank_index`, best first."""
    idx = order_indices(probabilities)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{label_name},probability,rank_index\n")
        for pos, i in enumerate(idx.order, start=1):
            fh.write(f"{labels[i]},{float(probabilities[i])!r},{pos}\n")

"""Reduced Google matrix on a node selection, with component decomposition.

For selection blocks r (selected) and s (complement) of a column-stochastic
damped matrix G, the reduced matrix is

    R = G_rr + G_rs (1 - G_ss)^(-1) G_sr

computed without ever forming the dense complement block. The resolvent is
split through the leading eigenpair of G_ss: with right/left eigenvectors
psi_r, psi_l (normalized to psi_l . psi_r = 1), eigenvalue lam, projector
P = psi_r psi_l^T and deflation Q = 1 - P,

    (1 - G_ss)^(-1) = P / (1 - lam) + Q (sum_l (Q G_ss Q)^l) Q .

The projector term gives the rank-one component; the deflated geometric
series converges at the modulus of the second eigenvalue of G_ss and gives
the indirect-pathway component. All reduced matrices are stored dense.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConvergenceError
from .gmatrix import GoogleMatrix
from .ingest import Registry
from .ranking import pagerank

log = logging.getLogger(__name__)

DEFAULT_SERIES_TOL = 1e-14
DEFAULT_MAX_TERMS = 10000
DEFAULT_EIG_TOL = 1e-13
DEFAULT_EIG_MAX_ITER = 100000
ORACLE_CAP = 2000
_NEGATIVE_WARN = -1e-12


@dataclass(frozen=True)
class Selection:
    """Ordered distinct node ids; the order fixes reduced row/column order."""

    node_ids: tuple[int, ...]
    total: int

    def __post_init__(self):
        ids = self.node_ids
        if not ids:
            raise ValueError("selection is empty")
        if len(set(ids)) != len(ids):
            raise ValueError("selection contains duplicate node ids")
        if min(ids) < 0 or max(ids) >= self.total:
            raise ValueError("selection node id out of range")

    @property
    def n_selected(self) -> int:
        return len(self.node_ids)

    @property
    def n_complement(self) -> int:
        return self.total - len(self.node_ids)

    @cached_property
    def complement(self) -> np.ndarray:
        mask = np.ones(self.total, dtype=bool)
        mask[list(self.node_ids)] = False
        return np.flatnonzero(mask)

    @classmethod
    def for_countries(
        cls,
        registry: Registry,
        countries,
        products=None,
        extra_nodes=(),
    ) -> "Selection":
        """Selection of country x product nodes (given order) plus extras."""
        product_list = registry.products if products is None else tuple(products)
        ids = [
            registry.node_id(c, p)
            for c in countries
            for p in product_list
        ]
        for node in extra_nodes:
            if node not in ids:
                ids.append(node)
        return cls(node_ids=tuple(ids), total=registry.size)

    def labels(self, registry: Registry) -> tuple[str, ...]:
        return tuple(registry.node_label(i) for i in self.node_ids)


@dataclass(frozen=True)
class ReducedSet:
    """Reduced matrix, its components, and solver diagnostics.

    `reduced == direct_part + projector_part + indirect_part` holds by
    construction up to the clamping of tiny negative series residue;
    `indirect_part == indirect_diag + indirect_offdiag` is exact.
    """

    selection: Selection
    reduced: np.ndarray
    direct_part: np.ndarray
    projector_part: np.ndarray
    indirect_part: np.ndarray
    indirect_diag: np.ndarray
    indirect_offdiag: np.ndarray
    complement_eigenvalue: float
    complement_right: np.ndarray
    complement_left: np.ndarray
    series_terms: int
    series_residual: float
    term_norms: tuple[float, ...]

    @property
    def weights(self) -> dict[str, float]:
        return {
            "reduced": component_weight(self.reduced),
            "direct": component_weight(self.direct_part),
            "projector": component_weight(self.projector_part),
            "indirect": component_weight(self.indirect_part),
            "indirect_offdiag": component_weight(self.indirect_offdiag),
        }

    @cached_property
    def projector_column_distance(self) -> float:
        """Max L1 distance between normalized projector columns and the
        reduced matrix's own stationary vector (closeness diagnostic)."""
        sums = self.projector_part.sum(axis=0)
        live = sums > 0
        if not np.any(live):
            return 0.0
        try:
            stationary = pagerank(self.reduced, tol=1e-10, max_iter=50000).probabilities
        except ConvergenceError:
            return float("nan")
        cols = self.projector_part[:, live] / sums[live]
        return float(np.abs(cols - stationary[:, None]).sum(axis=0).max())


def component_weight(matrix: np.ndarray) -> float:
    """Sum of all elements divided by the matrix size."""
    matrix = np.asarray(matrix)
    return float(matrix.sum() / matrix.shape[0])


def split_diagonal(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a square matrix into its diagonal and off-diagonal parts."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("expected a square matrix")
    diag = np.zeros_like(matrix)
    idx = np.arange(matrix.shape[0])
    diag[idx, idx] = matrix[idx, idx]
    return diag, matrix - diag


class _Block:
    """Lazy block G[rows, cols] of a damped matrix.

    Equals alpha * A[rows, cols] + (alpha/N) * 1 d[cols]^T
    + (1-alpha) * v[rows] 1^T, with A the stored links and d the dangling
    indicator, so products with tall/wide blocks stay O(nnz).
    """

    def __init__(self, matrix: GoogleMatrix, rows: np.ndarray, cols: np.ndarray):
        stoch = matrix.stochastic
        self.alpha = matrix.alpha
        self.n_total = matrix.size
        self.links = stoch.links[rows][:, cols].tocsr()
        self.dang = stoch.dangling[cols].astype(np.float64)
        self.v = matrix.personalization[rows]
        self.shape = (rows.shape[0], cols.shape[0])
        self._links_t = None

    def matmat(self, x: np.ndarray) -> np.ndarray:
        """Apply the block to a vector or (cols, k) matrix."""
        a = self.alpha
        out = a * (self.links @ x)
        if x.ndim == 1:
            out += (a / self.n_total) * (self.dang @ x)
            out += (1.0 - a) * self.v * x.sum()
        else:
            out += (a / self.n_total) * (self.dang @ x)[None, :]
            out += (1.0 - a) * np.outer(self.v, x.sum(axis=0))
        return out

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        if self._links_t is None:
            self._links_t = self.links.T.tocsr()
        a = self.alpha
        out = a * (self._links_t @ y)
        out += (a / self.n_total) * self.dang * y.sum()
        out += (1.0 - a) * np.full(self.shape[1], self.v @ y)
        return out

    def to_dense(self) -> np.ndarray:
        a = self.alpha
        out = a * self.links.toarray()
        out += (a / self.n_total) * self.dang[None, :]
        out += (1.0 - a) * self.v[:, None]
        return out


def _leading_pair(block: _Block, tol: float, max_iter: int):
    """Leading eigenvalue of a nonnegative block with right/left vectors.

    Power iteration on the block and its transpose; vectors converge to the
    Perron pair when the block is irreducible (always true for damped
    matrices with positive teleportation). Right vector is L1-normalized,
    left vector scaled so left . right = 1.
    """
    n = block.shape[0]
    lam = 0.0
    x = np.full(n, 1.0 / n)
    for it in range(max_iter):
        y = block.matmat(x)
        lam = float(y.sum())
        if lam <= 0.0:
            # complement absorbs nothing: resolvent is a finite sum
            return 0.0, x, np.zeros(n), it
        residual = float(np.abs(y - lam * x).sum())
        x = y / lam
        if residual < tol:
            break
    else:
        raise ConvergenceError("complement eigenvector iteration stalled", max_iter, residual)

    z = np.full(n, 1.0 / n)
    for it_l in range(max_iter):
        w = block.rmatvec(z)
        norm = float(np.abs(w).sum())
        if norm <= 0.0:
            return 0.0, x, np.zeros(n), it + it_l
        residual_l = float(np.abs(w - norm * z).sum())
        z = w / norm
        if residual_l < tol:
            break
    else:
        raise ConvergenceError("complement left-eigenvector iteration stalled", max_iter, residual_l)

    overlap = float(z @ x)
    if overlap <= 1e-300:
        raise ConvergenceError(
            "degenerate left/right eigenvector overlap in complement block", it + it_l, overlap
        )
    return lam, x, z / overlap, it + it_l


def _trivial_reduction(matrix: GoogleMatrix, sel: Selection) -> ReducedSet:
    dense = matrix.to_dense()
    order = np.asarray(sel.node_ids)
    dense = dense[np.ix_(order, order)]
    return ReducedSet(
        selection=sel,
        reduced=dense,
        direct_part=dense.copy(),
        projector_part=np.zeros_like(dense),
        indirect_part=np.zeros_like(dense),
        indirect_diag=np.zeros_like(dense),
        indirect_offdiag=np.zeros_like(dense),
        complement_eigenvalue=0.0,
        complement_right=np.empty(0),
        complement_left=np.empty(0),
        series_terms=0,
        series_residual=0.0,
        term_norms=(),
    )


def reduce(
    matrix: GoogleMatrix,
    sel: Selection,
    series_tol: float = DEFAULT_SERIES_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
    eig_tol: float = DEFAULT_EIG_TOL,
    eig_max_iter: int = DEFAULT_EIG_MAX_ITER,
) -> ReducedSet:
    """Reduce a Google matrix onto a selection with full decomposition.

    Args:
        matrix: the damped matrix to reduce.
        sel: ordered node selection (its order is the reduced index order).
        series_tol: stop the deflated series when a term's max-norm drops
            below this.
        max_terms: series length cap before ConvergenceError.
        eig_tol / eig_max_iter: complement leading-eigenpair iteration.

    The trivial all-nodes selection returns the dense matrix itself with
    zero projector/indirect parts.
    """
    if matrix.size != sel.total:
        raise ValueError("selection built for a different matrix size")
    if sel.n_complement == 0:
        return _trivial_reduction(matrix, sel)

    r = np.asarray(sel.node_ids)
    s = sel.complement
    b_rr = _Block(matrix, r, r)
    b_rs = _Block(matrix, r, s)
    b_sr = _Block(matrix, s, r)
    b_ss = _Block(matrix, s, s)

    lam, psi_r, psi_l, _ = _leading_pair(b_ss, eig_tol, eig_max_iter)
    if 1.0 - lam < 1e-12:
        raise ConvergenceError(
            "complement block is not strictly substochastic; resolvent undefined", 0, 1.0 - lam
        )

    def deflate(x):
        return x - np.outer(psi_r, psi_l @ x)

    g_sr = b_sr.matmat(np.eye(sel.n_selected))
    projector_part = np.outer(b_rs.matmat(psi_r), psi_l @ g_sr) / (1.0 - lam)

    term = deflate(g_sr)
    series = term.copy()
    term_norms = []
    terms = 0
    residual = float(np.abs(term).max())
    term_norms.append(residual)
    while residual >= series_tol:
        if terms >= max_terms:
            raise ConvergenceError("deflated resolvent series did not converge", terms, residual)
        term = deflate(b_ss.matmat(term))
        series += term
        terms += 1
        residual = float(np.abs(term).max())
        term_norms.append(residual)
    indirect_part = b_rs.matmat(deflate(series))

    direct_part = b_rr.to_dense()
    reduced = direct_part + projector_part + indirect_part

    worst = float(reduced.min())
    if worst < _NEGATIVE_WARN:
        log.warning("reduced matrix has negative entries down to %.3e", worst)
    negative_cols = np.unique(np.nonzero(reduced < 0)[1])
    if negative_cols.size:
        reduced = reduced.copy()
        np.clip(reduced, 0.0, None, out=reduced)
        reduced[:, negative_cols] /= reduced[:, negative_cols].sum(axis=0)
        log.info("clamped tiny negatives in %d column(s)", negative_cols.size)

    diag, offdiag = split_diagonal(indirect_part)
    return ReducedSet(
        selection=sel,
        reduced=reduced,
        direct_part=direct_part,
        projector_part=projector_part,
        indirect_part=indirect_part,
        indirect_diag=diag,
        indirect_offdiag=offdiag,
        complement_eigenvalue=lam,
        complement_right=psi_r,
        complement_left=psi_l,
        series_terms=terms,
        series_residual=residual,
        term_norms=tuple(term_norms),
    )


def reduce_dense_oracle(matrix: GoogleMatrix, sel: Selection, cap: int = ORACLE_CAP) -> np.ndarray:
    """Reference reduction by dense block solve; for verification only."""
    if matrix.size > cap:
        raise ValueError(f"oracle refuses size {matrix.size} > cap {cap}")
    dense = matrix.to_dense()
    r = np.asarray(sel.node_ids)
    if sel.n_complement == 0:
        return dense[np.ix_(r, r)]
    s = sel.complement
    g_rr = dense[np.ix_(r, r)]
    g_rs = dense[np.ix_(r, s)]
    g_sr = dense[np.ix_(s, r)]
    g_ss = dense[np.ix_(s, s)]
    x = np.linalg.solve(np.eye(s.shape[0]) - g_ss, g_sr)
    return g_rr + g_rs @ x


def write_reduced_csv(path, matrix: np.ndarray, labels) -> None:
    """Dense CSV: header of node labels, then one row per node."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(labels) + "\n")
        for row in matrix:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def write_diagnostics(path, reduced: ReducedSet) -> None:
    """Key-value sidecar with eigenvalue, series and weight diagnostics."""
    w = reduced.weights
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"lambda_c {reduced.complement_eigenvalue!r}\n")
        fh.write(f"series_terms {reduced.series_terms}\n")
        fh.write(f"residual {reduced.series_residual!r}\n")
        fh.write(f"projector_column_distance {reduced.projector_column_distance!r}\n")
        for name in ("reduced", "direct", "projector", "indirect", "indirect_offdiag"):
            fh.write(f"weight_{name} {w[name]!r}\n")

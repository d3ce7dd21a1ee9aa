"""Column-stochastic trade matrices and their damped Google matrices.

The damped matrix is never materialized: with stochastic part S, damping
alpha and personalization v, the product is evaluated lazily as

    G @ x = alpha * (S @ x) + (1 - alpha) * v * sum(x)

which is exact because the teleportation term is rank one. Dangling columns
(zero source volume) are stored as a flag set and contribute uniformly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import TradeDataError
from .ingest import MoneyTensor, Registry, volumes
from .ranking import pagerank, trace

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5

DIRECT = "direct"
INVERTED = "inverted"


@dataclass(frozen=True)
class StochasticMatrix:
    """Sparse column-stochastic matrix with an explicit dangling flag set.

    `links` holds the normalized columns of nodes with nonzero source volume;
    flagged columns are implicitly uniform at 1/size and stored empty.
    """

    size: int
    direction: str
    links: sparse.csr_matrix
    dangling: np.ndarray  # bool, per column

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = self.links @ x
        hanging = x[self.dangling].sum()
        if hanging != 0.0:
            out = out + hanging / self.size
        return out

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = self.links.T @ x
        out[self.dangling] = x.sum() / self.size
        return out

    def column(self, j: int) -> np.ndarray:
        if self.dangling[j]:
            return np.full(self.size, 1.0 / self.size)
        return self.links[:, [j]].toarray().ravel()

    def column_sums(self) -> np.ndarray:
        sums = np.asarray(self.links.sum(axis=0)).ravel()
        sums[self.dangling] = 1.0
        return sums

    def to_dense(self) -> np.ndarray:
        dense = self.links.toarray()
        dense[:, self.dangling] = 1.0 / self.size
        return dense


@dataclass(frozen=True)
class GoogleMatrix:
    """Damped matrix alpha * S + (1 - alpha) * v 1^T, kept in lazy form."""

    stochastic: StochasticMatrix
    personalization: np.ndarray
    alpha: float

    @property
    def size(self) -> int:
        return self.stochastic.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.alpha * self.stochastic.matvec(x) + (
            1.0 - self.alpha
        ) * self.personalization * x.sum()

    def column(self, j: int) -> np.ndarray:
        return self.alpha * self.stochastic.column(j) + (1.0 - self.alpha) * self.personalization

    def to_dense(self) -> np.ndarray:
        dense = self.alpha * self.stochastic.to_dense()
        dense += (1.0 - self.alpha) * self.personalization[:, None]
        return dense


def _check_personalization(v: np.ndarray, size: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (size,):
        raise ValueError(f"personalization size {v.shape} != ({size},)")
    if np.any(v < 0):
        raise ValueError("personalization entries must be nonnegative")
    if abs(v.sum() - 1.0) > 1e-8:
        raise ValueError("personalization must sum to 1")
    return v


def build_stochastic(tensor: MoneyTensor, direction: str = DIRECT) -> StochasticMatrix:
    """Normalize per-product flows into a column-stochastic matrix.

    Direct: column (exporter, p) distributes over importers, normalized by
    the exporter's product export volume. Inverted: flows reversed, columns
    normalized by import volume. Products never mix except through dangling
    columns, which are uniform over all nodes.
    """
    if direction not in (DIRECT, INVERTED):
        raise ValueError(f"direction must be {DIRECT!r} or {INVERTED!r}")
    reg = tensor.registry
    vol = volumes(tensor)
    n_p = reg.n_products
    size = reg.size
    rows_parts = []
    cols_parts = []
    data_parts = []
    if direction == DIRECT:
        source_vol = vol.export_vol  # column node's own outflow volume
    else:
        source_vol = vol.import_vol
    for p, m in enumerate(tensor.flows):
        coo = m.tocoo()  # row = importer, col = exporter
        if direction == DIRECT:
            row_c, col_c = coo.row, coo.col
        else:
            row_c, col_c = coo.col, coo.row
        denom = source_vol[col_c, p]
        rows_parts.append(row_c * n_p + p)
        cols_parts.append(col_c * n_p + p)
        data_parts.append(coo.data / denom)
    links = sparse.coo_matrix(
        (
            np.concatenate(data_parts) if data_parts else np.empty(0),
            (
                np.concatenate(rows_parts) if rows_parts else np.empty(0, dtype=np.int64),
                np.concatenate(cols_parts) if cols_parts else np.empty(0, dtype=np.int64),
            ),
        ),
        shape=(size, size),
    ).tocsr()
    dangling = (source_vol == 0).ravel()
    return StochasticMatrix(size=size, direction=direction, links=links, dangling=dangling)


def personalization_volume(tensor: MoneyTensor, direction: str = DIRECT) -> np.ndarray:
    """Teleportation weights proportional to each country's product volumes.

    Every country gets total weight 1/n_countries, split across products by
    its own import (direct) or export (inverted) volume mix. A country with
    no volume in the relevant direction gets a uniform product split.
    """
    reg = tensor.registry
    vol = volumes(tensor)
    table = vol.import_vol if direction == DIRECT else vol.export_vol
    if direction not in (DIRECT, INVERTED):
        raise ValueError(f"direction must be {DIRECT!r} or {INVERTED!r}")
    totals = table.sum(axis=1)
    v = np.empty_like(table)
    silent = totals == 0
    if np.any(silent):
        log.warning(
            "%d country(ies) with zero %s volume: uniform teleport block used",
            int(silent.sum()),
            direction,
        )
        v[silent, :] = 1.0 / (reg.n_countries * reg.n_products)
    active = ~silent
    v[active, :] = table[active, :] / (reg.n_countries * totals[active, None])
    return v.ravel()


def rank_personalization(product_marginal: np.ndarray, registry: Registry) -> np.ndarray:
    """Teleportation from a product marginal, uniform across countries."""
    p = np.asarray(product_marginal, dtype=np.float64)
    if p.shape != (registry.n_products,):
        raise ValueError("product marginal size mismatch")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-8:
        raise ValueError("product marginal must be a probability vector")
    return np.tile(p / registry.n_countries, registry.n_countries)


def assemble_google(
    stochastic: StochasticMatrix, personalization: np.ndarray, alpha: float = DEFAULT_ALPHA
) -> GoogleMatrix:
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    v = _check_personalization(personalization, stochastic.size)
    return GoogleMatrix(stochastic=stochastic, personalization=v, alpha=alpha)


def build_trade_pair(
    tensor: MoneyTensor,
    alpha: float = DEFAULT_ALPHA,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> tuple[GoogleMatrix, GoogleMatrix]:
    """Build the second-iteration (direct, inverted) Google matrix pair.

    First iteration teleports by relative country volumes; its stationary
    vectors are traced to product marginals, which define the second-round
    teleportation (uniform across countries). The second-iteration pair is
    what the rest of the pipeline consumes.
    """
    vol = volumes(tensor)
    if vol.total <= 0:
        raise TradeDataError("tensor has zero total volume")
    reg = tensor.registry
    s_direct = build_stochastic(tensor, DIRECT)
    s_inverted = build_stochastic(tensor, INVERTED)
    g1 = assemble_google(s_direct, personalization_volume(tensor, DIRECT), alpha)
    g1_star = assemble_google(s_inverted, personalization_volume(tensor, INVERTED), alpha)
    p = pagerank(g1, tol=tol, max_iter=max_iter)
    p_star = pagerank(g1_star, tol=tol, max_iter=max_iter)
    prod_marginal = trace(p, "product", reg)
    prod_marginal_star = trace(p_star, "product", reg)
    g2 = assemble_google(s_direct, rank_personalization(prod_marginal, reg), alpha)
    g2_star = assemble_google(s_inverted, rank_personalization(prod_marginal_star, reg), alpha)
    return g2, g2_star


def dump_google(matrix: GoogleMatrix, triples_path, sidecar_path) -> None:
    """Debug dump: `row,col,value` triples of the stored stochastic links plus
    a sidecar with alpha, the dangling columns and the personalization vector."""
    coo = matrix.stochastic.links.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(triples_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("row,col,value\n")
        for k in order:
            fh.write(f"{coo.row[k]},{coo.col[k]},{float(coo.data[k])!r}\n")
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        fh.write(f"alpha {float(matrix.alpha)!r}\n")
        hanging = ",".join(str(i) for i in np.flatnonzero(matrix.stochastic.dangling))
        fh.write(f"dangling {hanging}\n")
        for value in matrix.personalization:
            fh.write(f"{float(value)!r}\n")

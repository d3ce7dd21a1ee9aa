"""Loading, validation and synthesis of multiproduct bilateral trade tensors.

Input CSV format (UTF-8, comment lines start with '#'):

    year,product,exporter,importer,value_usd

`product` is a 2-character commodity code, `exporter`/`importer` are
2-character country codes, `value_usd` a nonnegative decimal. Duplicate
(product, importer, exporter) rows are summed; self-trade rows are dropped
with a warning.

An optional registry file fixes the index order of countries and products:

    [countries]
    DE
    FR
    [products]
    33
    34
"""
from __future__ import annotations

import csv
import itertools
import logging
import string
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import ParseError, TradeDataError
from .ranking import RankIndex, order_indices

log = logging.getLogger(__name__)

CSV_HEADER = ("year", "product", "exporter", "importer", "value_usd")


@dataclass(frozen=True)
class Registry:
    """Fixed ordering of country and product codes.

    Node ids run over country-product pairs with the product index varying
    fastest: node = country_index * n_products + product_index.
    """

    countries: tuple[str, ...]
    products: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.countries)) != len(self.countries):
            raise TradeDataError("duplicate country codes in registry")
        if len(set(self.products)) != len(self.products):
            raise TradeDataError("duplicate product codes in registry")
        if not self.countries or not self.products:
            raise TradeDataError("registry needs at least one country and one product")

    @cached_property
    def _country_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.countries)}

    @cached_property
    def _product_index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.products)}

    @property
    def n_countries(self) -> int:
        return len(self.countries)

    @property
    def n_products(self) -> int:
        return len(self.products)

    @property
    def size(self) -> int:
        return self.n_countries * self.n_products

    def country_index(self, code: str) -> int:
        try:
            return self._country_index[code]
        except KeyError:
            raise TradeDataError(f"unknown country code {code!r}") from None

    def product_index(self, code: str) -> int:
        try:
            return self._product_index[code]
        except KeyError:
            raise TradeDataError(f"unknown product code {code!r}") from None

    def node_id(self, country: str, product: str) -> int:
        return self.country_index(country) * self.n_products + self.product_index(product)

    def node_of(self, country_idx: int, product_idx: int) -> int:
        return country_idx * self.n_products + product_idx

    def country_of(self, node: int) -> str:
        return self.countries[node // self.n_products]

    def product_of(self, node: int) -> str:
        return self.products[node % self.n_products]

    def node_label(self, node: int) -> str:
        return f"{self.country_of(node)}:{self.product_of(node)}"


@dataclass(frozen=True)
class MoneyTensor:
    """Per-product bilateral trade values in USD.

    `flows[p]` is an (n_countries, n_countries) CSR matrix with rows indexed
    by importer and columns by exporter. Instances are treated as immutable;
    the underlying sparse matrices must not be modified after construction.
    """

    year: int
    registry: Registry
    flows: tuple[sparse.csr_matrix, ...]

    def __post_init__(self):
        if len(self.flows) != self.registry.n_products:
            raise TradeDataError("one flow matrix per product required")
        n = self.registry.n_countries
        for p, m in enumerate(self.flows):
            if m.shape != (n, n):
                raise TradeDataError(f"flow matrix shape {m.shape} != ({n}, {n})")
            if m.diagonal().any():
                raise TradeDataError(f"self-trade entries in product {self.registry.products[p]}")
            if m.nnz and m.data.min() < 0:
                raise TradeDataError("negative trade value")

    @classmethod
    def from_entries(
        cls,
        registry: Registry,
        year: int,
        product_idx: np.ndarray,
        importer_idx: np.ndarray,
        exporter_idx: np.ndarray,
        values: np.ndarray,
    ) -> "MoneyTensor":
        """Build from parallel index arrays; duplicate triples are summed."""
        n = registry.n_countries
        flows = []
        product_idx = np.asarray(product_idx)
        for p in range(registry.n_products):
            mask = product_idx == p
            m = sparse.coo_matrix(
                (values[mask], (importer_idx[mask], exporter_idx[mask])), shape=(n, n)
            ).tocsr()
            m.sum_duplicates()
            m.eliminate_zeros()
            flows.append(m)
        return cls(year=year, registry=registry, flows=tuple(flows))

    @classmethod
    def from_product_matrices(cls, registry: Registry, year: int, matrices) -> "MoneyTensor":
        flows = []
        for m in matrices:
            m = sparse.csr_matrix(m)
            m.eliminate_zeros()
            flows.append(m)
        return cls(year=year, registry=registry, flows=tuple(flows))

    def value(self, product: str, importer: str, exporter: str) -> float:
        p = self.registry.product_index(product)
        i = self.registry.country_index(importer)
        j = self.registry.country_index(exporter)
        return float(self.flows[p][i, j])

    @property
    def nnz(self) -> int:
        return sum(m.nnz for m in self.flows)

    @property
    def total_value(self) -> float:
        return float(sum(m.sum() for m in self.flows))

    def to_records(self):
        """Yield (product, exporter, importer, value) sorted by code."""
        reg = self.registry
        for p in range(reg.n_products):
            coo = self.flows[p].tocoo()
            rows = sorted(
                zip(coo.col, coo.row, coo.data), key=lambda t: (t[0], t[1])
            )
            for exp_i, imp_i, v in rows:
                yield reg.products[p], reg.countries[exp_i], reg.countries[imp_i], float(v)

    def scaled_product(self, product: str, factor: float) -> "MoneyTensor":
        """New tensor with every flow of one product multiplied by `factor`."""
        p = self.registry.product_index(product)
        flows = list(self.flows)
        flows[p] = flows[p] * factor
        return MoneyTensor(year=self.year, registry=self.registry, flows=tuple(flows))

    def scaled_flows(
        self, product: str, exporter: str, importers, factor: float
    ) -> "MoneyTensor":
        """New tensor with flows of `product` from `exporter` into the given
        importer countries multiplied by `factor`."""
        reg = self.registry
        p = reg.product_index(product)
        j = reg.country_index(exporter)
        rows = [reg.country_index(c) for c in importers]
        m = self.flows[p].tolil(copy=True)
        for i in rows:
            if m[i, j] != 0:
                m[i, j] = m[i, j] * factor
        flows = list(self.flows)
        flows[p] = m.tocsr()
        return MoneyTensor(year=self.year, registry=self.registry, flows=tuple(flows))

    def same_trade(self, other: "MoneyTensor") -> bool:
        """Exact equality of registries and stored flow values."""
        if self.registry != other.registry or self.year != other.year:
            return False
        return list(self.to_records()) == list(other.to_records())


@dataclass(frozen=True)
class VolumeTable:
    """Import/export volumes per (country, product) with totals."""

    registry: Registry
    import_vol: np.ndarray  # (n_countries, n_products)
    export_vol: np.ndarray

    @property
    def country_import(self) -> np.ndarray:
        return self.import_vol.sum(axis=1)

    @property
    def country_export(self) -> np.ndarray:
        return self.export_vol.sum(axis=1)

    @property
    def product_import(self) -> np.ndarray:
        return self.import_vol.sum(axis=0)

    @property
    def product_export(self) -> np.ndarray:
        return self.export_vol.sum(axis=0)

    @property
    def total(self) -> float:
        return float(self.import_vol.sum())


@dataclass(frozen=True)
class VolumeRankTable:
    """Probabilities and orderings derived from raw trade volumes.

    Node-level probabilities normalize the per-(country, product) volumes by
    the grand total, so both vectors sum to one.
    """

    registry: Registry
    import_prob: np.ndarray
    export_prob: np.ndarray
    country_import: np.ndarray
    country_export: np.ndarray
    product_import: np.ndarray
    product_export: np.ndarray
    import_order: RankIndex
    export_order: RankIndex
    country_import_order: RankIndex
    country_export_order: RankIndex
    product_import_order: RankIndex
    product_export_order: RankIndex


def _parse_registry_file(path) -> Registry:
    countries: list[str] = []
    products: list[str] = []
    section = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower() == "[countries]":
                section = countries
                continue
            if line.lower() == "[products]":
                section = products
                continue
            if section is None:
                raise ParseError("code before a [countries]/[products] section", lineno)
            section.append(line)
    if not countries or not products:
        raise TradeDataError(f"registry file {path} must list countries and products")
    return Registry(countries=tuple(countries), products=tuple(products))


def load_registry(path) -> Registry:
    return _parse_registry_file(path)


def save_registry(registry: Registry, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("[countries]\n")
        for c in registry.countries:
            fh.write(c + "\n")
        fh.write("[products]\n")
        for p in registry.products:
            fh.write(p + "\n")


def _parse_rows(fh, year: int):
    """Yield (lineno, product, exporter, importer, value) for matching rows."""
    reader = csv.reader(fh)
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or (row[0].lstrip().startswith("#")):
            continue
        if not header_seen:
            if tuple(c.strip() for c in row) != CSV_HEADER:
                raise ParseError(
                    f"expected header {','.join(CSV_HEADER)!r}, got {','.join(row)!r}", lineno
                )
            header_seen = True
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 columns, got {len(row)}", lineno)
        y_s, product, exporter, importer, value_s = (c.strip() for c in row)
        try:
            y = int(y_s)
        except ValueError:
            raise ParseError(f"bad year {y_s!r}", lineno) from None
        if len(product) != 2:
            raise ParseError(f"product code {product!r} is not 2 characters", lineno)
        if len(exporter) != 2 or len(importer) != 2:
            raise ParseError("country codes must be 2 characters", lineno)
        try:
            value = float(value_s)
        except ValueError:
            raise ParseError(f"bad value {value_s!r}", lineno) from None
        if not np.isfinite(value) or value < 0:
            raise ParseError(f"value {value_s!r} is negative or not finite", lineno)
        if y != year:
            continue
        yield lineno, product, exporter, importer, value
    if not header_seen:
        raise TradeDataError("no records: file is empty")


def load_money_tensor(path, year: int, registry: Registry | None = None) -> MoneyTensor:
    """Load a trade tensor for one year from the CSV format above.

    Without an explicit registry the country and product orderings are the
    lexicographically sorted unions of the codes seen. With a registry,
    unknown codes are rejected.
    """
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(_parse_rows(fh, year))
    dropped_self = 0
    records = []
    for lineno, product, exporter, importer, value in rows:
        if exporter == importer:
            dropped_self += 1
            continue
        records.append((lineno, product, exporter, importer, value))
    if dropped_self:
        log.warning("%s: dropped %d self-trade row(s)", path, dropped_self)
    if not records:
        raise TradeDataError(f"no records for year {year} in {path}")

    if registry is None:
        countries = sorted({r[2] for r in records} | {r[3] for r in records})
        products = sorted({r[1] for r in records})
        registry = Registry(countries=tuple(countries), products=tuple(products))

    p_idx = np.empty(len(records), dtype=np.int64)
    imp_idx = np.empty(len(records), dtype=np.int64)
    exp_idx = np.empty(len(records), dtype=np.int64)
    values = np.empty(len(records), dtype=np.float64)
    for k, (lineno, product, exporter, importer, value) in enumerate(records):
        try:
            p_idx[k] = registry.product_index(product)
            exp_idx[k] = registry.country_index(exporter)
            imp_idx[k] = registry.country_index(importer)
        except TradeDataError as exc:
            raise TradeDataError(f"line {lineno}: {exc}") from None
        values[k] = value
    return MoneyTensor.from_entries(registry, year, p_idx, imp_idx, exp_idx, values)


def serialize_tensor(tensor: MoneyTensor, path) -> None:
    """Write a tensor in the input CSV format; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for product, exporter, importer, value in tensor.to_records():
            fh.write(f"{tensor.year},{product},{exporter},{importer},{value!r}\n")


def _synthetic_codes(n: int, alphabet: str, width: int) -> tuple[str, ...]:
    pool = ["".join(t) for t in itertools.product(alphabet, repeat=width)]
    return tuple(pool[:n])


def synth_tensor(
    seed: int, n_countries: int, n_products: int, density: float, year: int = 2016
) -> MoneyTensor:
    """Deterministic synthetic tensor with log-uniform positive flows.

    Roughly density * n_countries * (n_countries-1) * n_products entries.
    When n_products >= 2 the last country's exports of the first product are
    zeroed so that at least one node exercises the dangling-column rule
    (with a single product this could contradict full density, so it is
    skipped there).
    """
    if n_countries < 2 or n_products < 1:
        raise ValueError("need n_countries >= 2 and n_products >= 1")
    if not 0 < density <= 1:
        raise ValueError("density must be in (0, 1]")
    if n_countries > 676 or n_products > 100:
        raise ValueError("synthetic code space caps at 676 countries / 100 products")
    rng = np.random.default_rng(seed)
    countries = _synthetic_codes(n_countries, string.ascii_uppercase, 2)
    products = _synthetic_codes(n_products, string.digits, 2)
    registry = Registry(countries=countries, products=products)
    n = n_countries
    mats = []
    for p in range(n_products):
        keep = rng.random((n, n)) < density
        vals = 10.0 ** rng.uniform(2.0, 8.0, size=(n, n))
        m = np.where(keep, vals, 0.0)
        np.fill_diagonal(m, 0.0)
        if p == 0 and n_products >= 2:
            m[:, n - 1] = 0.0  # force a dangling exporter column
        mats.append(sparse.csr_matrix(m))
    return MoneyTensor.from_product_matrices(registry, year, mats)


def volumes(tensor: MoneyTensor) -> VolumeTable:
    """Row/column sums of the per-product flow matrices.

    import_vol[c, p] adds flows into country c; export_vol[c, p] flows out.
    """
    reg = tensor.registry
    imp = np.zeros((reg.n_countries, reg.n_products))
    exp = np.zeros((reg.n_countries, reg.n_products))
    for p, m in enumerate(tensor.flows):
        imp[:, p] = np.asarray(m.sum(axis=1)).ravel()
        exp[:, p] = np.asarray(m.sum(axis=0)).ravel()
    return VolumeTable(registry=reg, import_vol=imp, export_vol=exp)


def volume_ranks(vol: VolumeTable) -> VolumeRankTable:
    """Normalized volume probabilities with all rank orderings populated."""
    total = vol.total
    if total <= 0:
        raise ValueError("total trade volume is zero")
    import_prob = (vol.import_vol / total).ravel()
    export_prob = (vol.export_vol / total).ravel()
    country_import = vol.country_import / total
    country_export = vol.country_export / total
    product_import = vol.product_import / total
    product_export = vol.product_export / total
    return VolumeRankTable(
        registry=vol.registry,
        import_prob=import_prob,
        export_prob=export_prob,
        country_import=country_import,
        country_export=country_export,
        product_import=product_import,
        product_export=product_export,
        import_order=order_indices(import_prob),
        export_order=order_indices(export_prob),
        country_import_order=order_indices(country_import),
        country_export_order=order_indices(country_export),
        product_import_order=order_indices(product_import),
        product_export_order=order_indices(product_export),
    )

"""Top-k partner extraction from reduced matrices and graph serialization.

For each node's column, the k strongest off-diagonal entries are kept.
Edges point along the trade flow: in the import view (direct reduction)
column c lists who imports from c, so edges run c -> partner; in the export
view (inverted reduction) column c lists who supplies c, so edges run
partner -> c.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VIEW_IMPORT = "import"
VIEW_EXPORT = "export"


@dataclass(frozen=True)
class TradeEdgeList:
    """Directed weighted edges plus the extraction parameters."""

    edges: tuple[tuple[str, str, float], ...]
    view: str
    k: int


def top_links(matrix: np.ndarray, labels, k: int, view: str = VIEW_IMPORT) -> TradeEdgeList:
    """Select each column's k largest off-diagonal entries as edges.

    Ties break toward the smaller partner index; exact-zero entries are
    never emitted. k must be smaller than the matrix size.
    """
    matrix = np.asarray(matrix)
    n = matrix.shape[0]
    if matrix.ndim != 2 or matrix.shape[1] != n:
        raise ValueError("expected a square matrix")
    if len(labels) != n:
        raise ValueError("one label per node required")
    if view not in (VIEW_IMPORT, VIEW_EXPORT):
        raise ValueError(f"view must be {VIEW_IMPORT!r} or {VIEW_EXPORT!r}")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the matrix size {n}")
    edges = []
    for j in range(n):
        col = matrix[:, j]
        partners = [i for i in range(n) if i != j and col[i] > 0.0]
        # weight descending, index ascending on ties
        partners.sort(key=lambda i: (-col[i], i))
        for i in partners[:k]:
            if view == VIEW_IMPORT:
                edges.append((labels[j], labels[i], float(col[i])))
            else:
                edges.append((labels[i], labels[j], float(col[i])))
    return TradeEdgeList(edges=tuple(edges), view=view, k=k)


def serialize_graph(edge_list: TradeEdgeList, fmt: str, path) -> None:
    """Write edges as `dot` or `edge-csv`; output is byte-deterministic."""
    if fmt == "dot":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("digraph trade {\n")
            fh.write(f"  // view={edge_list.view} k={edge_list.k}\n")
            for src, dst, w in edge_list.edges:
                fh.write(f'  "{src}" -> "{dst}" [weight={w!r}, label="{w:.3g}"];\n')
            fh.write("}\n")
    elif fmt == "edge-csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# view={edge_list.view},k={edge_list.k}\n")
            fh.write("from,to,weight\n")
            for src, dst, w in edge_list.edges:
                fh.write(f"{src},{dst},{w!r}\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def parse_edge_csv(path) -> TradeEdgeList:
    """Read back an edge-csv file written by serialize_graph."""
    view = ""
    k = 0
    edges = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta = dict(part.split("=", 1) for part in line[1:].strip().split(","))
                view = meta.get("view", "")
                k = int(meta.get("k", 0))
                continue
            if line == "from,to,weight":
                continue
            src, dst, w = line.split(",")
            edges.append((src, dst, float(w)))
    return TradeEdgeList(edges=tuple(edges), view=view, k=k)

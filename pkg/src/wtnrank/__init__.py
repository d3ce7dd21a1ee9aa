"""Multiproduct trade-network analysis: stochastic/Google matrices,
stationary rankings, reduced-matrix decomposition and shock sensitivity."""

from .errors import ConvergenceError, ParseError, TradeDataError
from .gmatrix import (
    DEFAULT_ALPHA,
    GoogleMatrix,
    StochasticMatrix,
    assemble_google,
    build_stochastic,
    build_trade_pair,
    personalization_volume,
    rank_personalization,
)
from .groups import EU27_2008
from .ingest import (
    MoneyTensor,
    Registry,
    VolumeRankTable,
    VolumeTable,
    load_money_tensor,
    load_registry,
    save_registry,
    serialize_tensor,
    synth_tensor,
    volume_ranks,
    volumes,
)
from .netexport import TradeEdgeList, parse_edge_csv, serialize_graph, top_links
from .ranking import (
    RankIndex,
    RankVector,
    order_indices,
    pagerank,
    product_slice,
    trace,
)
from .regomax import (
    ReducedSet,
    Selection,
    component_weight,
    reduce,
    reduce_dense_oracle,
    split_diagonal,
)
from .sensitivity import (
    SensitivityReport,
    ShockSpec,
    balance,
    build_shock_matrices,
    global_price_sensitivity,
    import_export_sensitivity,
    reduce_for_shock,
    reduced_balance_sensitivity,
    shock_pair,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "ParseError",
    "TradeDataError",
    "DEFAULT_ALPHA",
    "GoogleMatrix",
    "StochasticMatrix",
    "assemble_google",
    "build_stochastic",
    "build_trade_pair",
    "personalization_volume",
    "rank_personalization",
    "EU27_2008",
    "MoneyTensor",
    "Registry",
    "VolumeRankTable",
    "VolumeTable",
    "load_money_tensor",
    "load_registry",
    "save_registry",
    "serialize_tensor",
    "synth_tensor",
    "volume_ranks",
    "volumes",
    "TradeEdgeList",
    "parse_edge_csv",
    "serialize_graph",
    "top_links",
    "RankIndex",
    "RankVector",
    "order_indices",
    "pagerank",
    "product_slice",
    "trace",
    "ReducedSet",
    "Selection",
    "component_weight",
    "reduce",
    "reduce_dense_oracle",
    "split_diagonal",
    "SensitivityReport",
    "ShockSpec",
    "balance",
    "build_shock_matrices",
    "global_price_sensitivity",
    "import_export_sensitivity",
    "reduce_for_shock",
    "reduced_balance_sensitivity",
    "shock_pair",
    "__version__",
]

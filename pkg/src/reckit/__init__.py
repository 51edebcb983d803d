"""Neighborhood collaborative filtering, ACT-R memory scoring, privacy-aware
KNN, trust-based cold-start, popularity-bias metrics and an agent-based
fairness simulation, on numpy/scipy."""

__version__ = "0.1.0"

from .corpus import (
    ColumnMapping,
    Event,
    IngestError,
    InteractionLog,
    ItemMeta,
    assign_popularity_groups,
    chronological_split,
    ingest_interactions,
    item_popularity,
)
from .neighbors import EmptyNeighborhood, ItemKNN, MostPopular, SimilarityConfig, UserKNN
from .privacy import DpMechanism, ReuseKNN, UsageLedger
from .actr import ActrModel
from .trust import TrustGraph, TrustKNN, katz_similarity
from .metrics import MetricReport
from .fairsim import SimConfig, run_simulation

__all__ = [
    "__version__",
    "ColumnMapping",
    "Event",
    "IngestError",
    "InteractionLog",
    "ItemMeta",
    "assign_popularity_groups",
    "chronological_split",
    "ingest_interactions",
    "item_popularity",
    "EmptyNeighborhood",
    "ItemKNN",
    "MostPopular",
    "SimilarityConfig",
    "UserKNN",
    "DpMechanism",
    "ReuseKNN",
    "UsageLedger",
    "ActrModel",
    "TrustGraph",
    "TrustKNN",
    "katz_similarity",
    "MetricReport",
    "SimConfig",
    "run_simulation",
]

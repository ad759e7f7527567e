"""Corpus-level knowledge base of mechanism relations with embedding-based
min-aggregation semantic search."""

from .embed import FallbackEmbedding, RemoteEmbedding, fallback_embed, similarity
from .index import (
    KbIndex,
    SearchStats,
    build_index,
    load_index,
    save_index,
    search_bruteforce,
    search_threshold,
    topk_entities,
)
from .ingest import IngestReport, run_ingest
from .normalize import (
    NormalizationConfig,
    coref_representative,
    lemmatize_token,
    normalize_surface,
    unify_corefs,
)
from .schema import (
    CorefCluster,
    CorefMention,
    EntitySurface,
    ExtractionRecord,
    MechanismRelation,
    Provenance,
    RelationClass,
    RelationQuery,
    ScoredResult,
    relation_id,
    validate_record,
)

__version__ = "0.1.0"

__all__ = [
    "CorefCluster",
    "CorefMention",
    "EntitySurface",
    "ExtractionRecord",
    "FallbackEmbedding",
    "IngestReport",
    "KbIndex",
    "MechanismRelation",
    "NormalizationConfig",
    "Provenance",
    "RelationClass",
    "RelationQuery",
    "RemoteEmbedding",
    "ScoredResult",
    "SearchStats",
    "build_index",
    "coref_representative",
    "fallback_embed",
    "lemmatize_token",
    "load_index",
    "normalize_surface",
    "relation_id",
    "run_ingest",
    "save_index",
    "search_bruteforce",
    "search_threshold",
    "similarity",
    "topk_entities",
    "unify_corefs",
    "validate_record",
]

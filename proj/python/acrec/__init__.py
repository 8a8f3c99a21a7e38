from ._core import (
    ConfigError,
    CorruptionError,
    DataError,
    NotFoundError,
    Recommender,
    bpr_loss,
    classify_emotions,
    compose,
    config_digest,
    default_config,
    even_spread_positions,
    extract_statements,
    hash_embed,
    hit_ratio_at_k,
    long_term_weights,
    ndcg_at_k,
    run_synthetic,
    select_step_indices,
    wheel,
)

__all__ = [
    "ConfigError",
    "CorruptionError",
    "DataError",
    "NotFoundError",
    "Recommender",
    "bpr_loss",
    "classify_emotions",
    "compose",
    "config_digest",
    "default_config",
    "even_spread_positions",
    "extract_statements",
    "hash_embed",
    "hit_ratio_at_k",
    "long_term_weights",
    "ndcg_at_k",
    "run_synthetic",
    "select_step_indices",
    "wheel",
]

"""Oblivious forest inference kernels."""

from ._oblivforest import (
    CapabilityError,
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    Forest,
    ValidationError,
    bench,
    capabilities,
    evaluate,
    evaluate_sums,
    forest_from_bytes,
    generate_features,
    generate_forest,
    load_features,
    load_forest,
    save_features,
    shipped_configs,
    verify,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""DIQaM / WaDIQaM deep image-quality models."""

from ._diqa import (
    ConfigError,
    DegenerateError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    Model,
    StateError,
    ValidationError,
    count_params,
    lcc,
    load_image,
    pca_fit,
    pool_average,
    pool_weighted,
    run_cli,
    srocc,
    synth_corpus,
)

__all__ = [
    "ConfigError",
    "DegenerateError",
    "DimensionError",
    "Error",
    "FormatError",
    "IoError",
    "Model",
    "StateError",
    "ValidationError",
    "count_params",
    "lcc",
    "load_image",
    "pca_fit",
    "pool_average",
    "pool_weighted",
    "run_cli",
    "srocc",
    "synth_corpus",
]

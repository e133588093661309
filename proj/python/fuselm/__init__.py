"""LSTM language models fused with per-prefix artefact vectors."""

from ._fuselm import (
    ConfigError,
    DataError,
    Error,
    FormatError,
    InputError,
    IoError,
    LookupError,
    NumericError,
    Store,
    Vocab,
    __version__,
    crop_range,
    encode_store,
    pearson,
    run_cli,
    split_words,
    write_store,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "FormatError",
    "InputError",
    "IoError",
    "LookupError",
    "NumericError",
    "Store",
    "Vocab",
    "__version__",
    "crop_range",
    "encode_store",
    "pearson",
    "run_cli",
    "split_words",
    "write_store",
]

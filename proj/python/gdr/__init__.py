"""Grouped discrete representations for object-centric learning."""

import torch  # noqa: F401  (loads libtorch before the extension)

from ._gdr import (
    ConfigError,
    FormatError,
    PlacementError,
    ProjectionKind,
    Quantizer,
    QuantizerConfig,
    QuantizerMode,
    ari,
    evaluate,
    generate_scene,
    generate_split,
    load_checkpoint,
    load_split,
    mbo,
    miou,
    parameter_accounting,
    radix_product,
    read_tensor_file,
    scalar_to_tuple,
    tuple_to_scalar,
    vae_represent,
    write_tensor_file,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "PlacementError",
    "ProjectionKind",
    "Quantizer",
    "QuantizerConfig",
    "QuantizerMode",
    "ari",
    "evaluate",
    "generate_scene",
    "generate_split",
    "load_checkpoint",
    "load_split",
    "mbo",
    "miou",
    "parameter_accounting",
    "radix_product",
    "read_tensor_file",
    "scalar_to_tuple",
    "tuple_to_scalar",
    "vae_represent",
    "write_tensor_file",
]

"""HD-sEMG gesture recognition: synthetic data, motor-unit decomposition and dual-path ViT inference."""

from ._core import (
    ConfigError,
    HydtError,
    MissingArtifact,
    SeededRng,
    VitModel,
    accuracy,
    config,
    decode_tensor,
    decompose_window,
    encode_tensor,
    envelope,
    from_grid,
    generate,
    kfold_split,
    macro_input,
    micro_input,
    mu_law_normalize,
    muap_stack,
    rate_of_agreement,
    read_manifest,
    read_tensor,
    to_grid,
    write_dataset,
    write_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]

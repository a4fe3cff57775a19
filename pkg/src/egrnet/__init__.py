"""Embedding Gramian representation transform and double-branch CNN classifier."""

from .signal_core import (
    Egr,
    NoiseSpec,
    Rsm,
    RsmConfig,
    Signal,
    StripeProfile,
    add_noise_snr,
    build_rsm,
    egr_of_signal,
    gram,
    normalize_sample,
    stripe_profile,
    suggest_dims,
)
from .model import (
    CANONICAL_BLOCKS,
    EgrNetModel,
    GcbSpec,
    NetworkVariant,
    build_network,
    load_model,
    save_model,
)
from .errors import (
    ConfigError,
    DegenerateSignalError,
    DimensionError,
    EgrnetError,
    FormatError,
)

__version__ = "0.1.0"

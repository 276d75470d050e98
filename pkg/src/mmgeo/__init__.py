"""Computations on finite metric measure spaces.

Core objects live in mmcore; packing, separation, witness, and groups
build on it; reports and cli wrap everything for batch runs.
"""

from .errors import MmgeoError
from .groups import (
    ChainSpec,
    build_chain_space,
    hamming_normalized,
    inverse_of,
    invert_space,
    obs_diam_estimate,
    theorem_witness,
    weighted_mismatch,
)
from .mmcore import (
    FiniteMMSpace,
    hausdorff_distance,
    ky_fan,
    parametrize,
    pushforward,
    read_space,
    restrict_support,
    support,
    validate_space,
    write_space,
)
from .packing import capacity, gh_bracket, lip_net, observable_lower
from .separation import dissipation_report, sep, sep_uniform, separation_at_least
from .witness import (
    agreement_count,
    capacity_certificate,
    capacity_growth_check,
    lip_extend,
    rademacher,
    verify_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "MmgeoError",
    "FiniteMMSpace",
    "validate_space",
    "support",
    "restrict_support",
    "pushforward",
    "ky_fan",
    "parametrize",
    "hausdorff_distance",
    "read_space",
    "write_space",
    "capacity",
    "gh_bracket",
    "lip_net",
    "observable_lower",
    "sep",
    "sep_uniform",
    "separation_at_least",
    "dissipation_report",
    "rademacher",
    "agreement_count",
    "lip_extend",
    "capacity_certificate",
    "verify_certificate",
    "capacity_growth_check",
    "ChainSpec",
    "build_chain_space",
    "weighted_mismatch",
    "hamming_normalized",
    "inverse_of",
    "invert_space",
    "theorem_witness",
    "obs_diam_estimate",
    "__version__",
]

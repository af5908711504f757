"""The nine monitored variables: names, bio-limits, and per-bin aggregation.

Column order is fixed; every tensor in the pipeline uses it.
"""

from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class VariableSpec:
    """One monitored variable.

    bio_limits is a closed interval in physical units, or None when no
    plausibility filter applies. aggregation picks the representative value
    when several measurements fall into one resampling bin.
    """

    name: str
    bio_limits: Optional[Tuple[float, float]]
    aggregation: str  # one of {"min", "max", "mean"}
    column_index: int

    def __post_init__(self):
        if self.aggregation not in ("min", "max", "mean"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.bio_limits is not None and self.bio_limits[0] > self.bio_limits[1]:
            raise ValueError(f"bio_limits reversed for {self.name!r}")


VARIABLES: Tuple[VariableSpec, ...] = (
    VariableSpec("temperature", (29.0, 43.0), "max", 0),
    VariableSpec("thrombocytes", None, "min", 1),
    VariableSpec("leukocytes", None, "mean", 2),
    VariableSpec("crp", None, "max", 3),
    VariableSpec("sofa", None, "max", 4),
    VariableSpec("heart_rate", (30.0, 250.0), "max", 5),
    VariableSpec("resp_rate", (0.0, 100.0), "max", 6),
    VariableSpec("inr", None, "max", 7),
    VariableSpec("mean_sap", (30.0, 170.0), "max", 8),
)

VARIABLE_NAMES: Tuple[str, ...] = tuple(v.name for v in VARIABLES)

BY_NAME = {v.name: v for v in VARIABLES}

N_VARIABLES = len(VARIABLES)

# tensor layout shared by prep, the model, and the binary cache format
N_BINS = 72
BIN_SECONDS = 3600
WINDOW_SECONDS = N_BINS * BIN_SECONDS

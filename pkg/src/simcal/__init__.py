"""simcal: likelihood-free Bayesian calibration of time-series simulators."""

__version__ = "0.1.0"

from .priors import BoxUniform  # noqa: F401
from .training import TrainConfig  # noqa: F401

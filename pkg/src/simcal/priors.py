"""Box-uniform priors over parameter space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["BoxUniform"]


@dataclass(frozen=True)
class BoxUniform:
    """Independent uniform prior on a box, with per-dimension bounds."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape:
            raise ValueError(f"bound shapes differ: {lower.shape} vs {upper.shape}")
        if not np.all(lower < upper):
            raise ValueError("prior requires lower < upper in every dimension")
        if not self.names:
            object.__setattr__(
                self, "names", tuple(f"theta{i + 1}" for i in range(lower.size))
            )

    @property
    def dim(self) -> int:
        return self.lower.size

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def inside(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(theta)
        return np.all((theta >= self.lower) & (theta <= self.upper), axis=1)

    def log_prob(self, theta: np.ndarray) -> np.ndarray:
        """Log density: constant inside the box, -inf outside."""
        theta = np.atleast_2d(theta)
        inside = self.inside(theta)
        const = -np.sum(np.log(self.upper - self.lower))
        out = np.where(inside, const, -np.inf)
        return out

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def range(self) -> np.ndarray:
        return self.upper - self.lower

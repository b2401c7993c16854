"""Level-of-sophistication priors, truncated beliefs and posteriors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True, eq=False)
class LevelPrior:
    """Distribution over levels ``0..k_max``.

    ``tau`` is ``None`` for explicit (non-Poisson) priors.
    """

    probs: np.ndarray
    tau: float | None = None

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("level prior must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("level prior must be finite and nonnegative")
        s = p.sum()
        if s <= 0:
            raise ValueError("level prior has no mass")
        p = p / s
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def k_max(self) -> int:
        return self.probs.size - 1

    def to_dict(self) -> dict:
        return {"tau": self.tau, "k_max": self.k_max, "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LevelPrior":
        return cls(np.asarray(d["probs"], dtype=float), d.get("tau"))


def poisson_prior(tau: float, k_max: int = 50) -> LevelPrior:
    """Poisson(tau) over levels 0..k_max, renormalized after truncation."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    k = np.arange(k_max + 1)
    logp = -tau + k * np.log(tau) - gammaln(k + 1)
    p = np.exp(logp - logp.max())
    return LevelPrior(p, float(tau))


def degenerate_prior(level: int, k_max: int | None = None) -> LevelPrior:
    k_max = level if k_max is None else k_max
    p = np.zeros(k_max + 1)
    p[level] = 1.0
    return LevelPrior(p)


def truncated_belief(prior: LevelPrior, k: int) -> np.ndarray:
    """Belief of a level-k player over opponent levels 0..k-1."""
    if not 1 <= k <= prior.k_max:
        raise ValueError(f"level {k} holds no truncated belief (valid: 1..{prior.k_max})")
    w = np.zeros(prior.k_max + 1)
    w[:k] = prior.probs[:k]
    s = w.sum()
    if s <= 0:
        raise ValueError(f"prior puts no mass below level {k}")
    return w / s


def posterior_levels(prior: LevelPrior, reach: np.ndarray) -> np.ndarray:
    """Posterior over levels given per-level probabilities of the observed event."""
    reach = np.asarray(reach, dtype=float)
    if reach.shape != prior.probs.shape:
        raise ValueError("reach vector must have one entry per level")
    if np.any(reach < 0) or np.any(reach > 1 + 1e-12):
        raise ValueError("reach probabilities must lie in [0, 1]")
    w = prior.probs * reach
    s = w.sum()
    if s <= 0:
        raise ValueError("conditioning event has zero probability under every level")
    return w / s

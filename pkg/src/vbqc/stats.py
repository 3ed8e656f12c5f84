"""Seed splitting, Wilson intervals and frequency estimates."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from scipy.stats import norm


def split_seed(root: int, index: int) -> int:
    """Counter-based child seed: independent of how many siblings were drawn."""
    h = hashlib.blake2b(f"{int(root)}:{int(index)}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = norm.ppf(0.5 + level / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the edges are exact at zero and full success counts
    lo = 0.0 if successes == 0 else max(0.0, float(centre - half))
    hi = 1.0 if successes == trials else min(1.0, float(centre + half))
    return lo, hi


@dataclass
class Estimate:
    successes: int
    trials: int
    frequency: float
    ci: tuple[float, float]
    reference: float | None = None

    @property
    def stderr(self) -> float:
        p = self.frequency
        return math.sqrt(p * (1 - p) / self.trials)

    def to_dict(self) -> dict:
        return {"successes": self.successes, "trials": self.trials, "frequency": self.frequency,
                "ci": list(self.ci), "reference": self.reference}


def estimate(successes: int, trials: int, reference: float | None = None, level: float = 0.95) -> Estimate:
    return Estimate(int(successes), int(trials), successes / trials, wilson_ci(successes, trials, level), reference)

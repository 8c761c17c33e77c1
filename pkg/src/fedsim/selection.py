"""Poisson-model client selection.

Dataset sizes are modelled as Poisson(lambda); lambda is fitted by maximum
likelihood (the sample mean). Clients whose size exceeds the threshold are
treated as outliers and left out of the round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

RULES = ("all", "poisson_2lambda", "poisson_lambda_floor50")


def fit_lambda(sizes: Sequence[int]) -> float:
    if len(sizes) == 0:
        raise ConfigError("cannot fit lambda to an empty list of sizes")
    lam = float(np.mean(np.asarray(sizes, dtype=np.float64)))
    if not lam > 0:
        raise ConfigError("fitted lambda must be positive")
    return lam


def poisson_pmf(x: int, lam: float) -> float:
    """``exp(-lam) * lam**x / x!`` evaluated in log space."""
    if x < 0:
        return 0.0
    return math.exp(-lam + x * math.log(lam) - math.lgamma(x + 1))


@dataclass(frozen=True)
class SelectionPolicy:
    rule: str = "all"
    lambda_estimate: float = 1.0
    # 0 disables the periodic full-inclusion round
    include_outliers_every: int = 0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigError(f"unknown selection rule {self.rule!r}; expected one of {RULES}")
        if not self.lambda_estimate > 0:
            raise ConfigError("lambda_estimate must be positive")
        if int(self.include_outliers_every) < 0:
            raise ConfigError("include_outliers_every must be non-negative")

    @classmethod
    def fitted(cls, rule: str, sizes: Sequence[int], include_outliers_every: int = 0) -> "SelectionPolicy":
        return cls(rule, fit_lambda(sizes), include_outliers_every)

    @property
    def threshold(self) -> float:
        return 2.0 * self.lambda_estimate if self.rule == "poisson_2lambda" else self.lambda_estimate


def select(
    policy: SelectionPolicy,
    clients: Sequence[tuple[int, int]],
    round_index: int,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Ids of the clients taking part in ``round_index``, in ascending order.

    ``clients`` holds ``(id, size)`` pairs. ``rng`` is accepted for API
    symmetry with stochastic policies; the shipped rules are deterministic.
    """
    if len(clients) == 0:
        raise ConfigError("select needs at least one client")
    ids = sorted(int(cid) for cid, _ in clients)
    every = int(policy.include_outliers_every)
    if policy.rule == "all" or (every > 0 and round_index % every == 0):
        return ids

    chosen = {int(cid) for cid, size in clients if size <= policy.threshold}
    if policy.rule == "poisson_lambda_floor50":
        floor = math.ceil(len(clients) / 2)
        outliers = sorted((size, int(cid)) for cid, size in clients if int(cid) not in chosen)
        for _, cid in outliers:
            if len(chosen) >= floor:
                break
            chosen.add(cid)
    return sorted(chosen)

"""Lower bounds on the packet error rate.

A user that never transmits can never be resolved, so the probability of
that event bounds the PER from below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .degree_model import ProtocolConfig, SingleStage

# recorded with every result; no combinatorial prefactor is applied
BOUND_FORM = "prod_j (1 - p_j): probability a user transmits in no slot"


@dataclass(frozen=True)
class BoundResult:
    n: int
    m: int
    exact_bound: float
    exponential_bound: float
    extension: bool = False

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "exact_bound": self.exact_bound,
            "exp_bound": self.exponential_bound,
            "extension": self.extension,
            "form": BOUND_FORM,
        }


def per_lower_bound(n: int, m: int, beta: float) -> BoundResult:
    """``(1 - beta/n)^m`` and its large-``m`` form ``exp(-beta m / n)``."""
    if not 0 <= beta <= n:
        raise ValueError(f"beta must lie in [0, n], got {beta}")
    return BoundResult(
        n=n,
        m=m,
        exact_bound=(1.0 - beta / n) ** m,
        exponential_bound=math.exp(-beta * m / n),
    )


def two_stage_lower_bound(n: int, m: int, beta1: float, beta2: float, m_star: int) -> BoundResult:
    """Silent-user probability when slots after ``m_star`` use ``beta2``."""
    first = min(m, m_star)
    rest = m - first
    return BoundResult(
        n=n,
        m=m,
        exact_bound=(1.0 - beta1 / n) ** first * (1.0 - beta2 / n) ** rest,
        exponential_bound=math.exp(-(beta1 * first + beta2 * rest) / n),
        extension=True,
    )


def bound_for(config: ProtocolConfig) -> BoundResult:
    s = config.schedule
    if isinstance(s, SingleStage):
        return per_lower_bound(config.n, config.m, s.beta)
    return two_stage_lower_bound(config.n, config.m, s.beta1, s.beta2, s.m_star)

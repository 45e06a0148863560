"""Slot-degree distributions for single-stage and two-stage frameless ALOHA.

Every user transmits in every slot independently with probability
``p = beta / n``, so the number of users heard in one slot is binomial.
The two-stage schedule uses ``beta1`` for slots ``1..m_star`` and ``beta2``
afterwards; seen from a uniformly chosen slot the degree is then a mixture
of two binomials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from scipy.special import gammaln

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SingleStage:
    beta: float


@dataclass(frozen=True)
class TwoStage:
    beta1: float
    beta2: float
    m_star: int


Schedule = Union[SingleStage, TwoStage]


@dataclass(frozen=True)
class ProtocolConfig:
    """Population size, access schedule and number of slots of one contention period."""

    n: int
    schedule: Schedule
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        for beta in self.betas:
            _check_beta(beta, self.n)
        if isinstance(self.schedule, TwoStage):
            m_star = self.schedule.m_star
            if int(m_star) != m_star or m_star < 1:
                raise ValueError(f"m_star must be a positive integer, got {m_star!r}")
        elif not isinstance(self.schedule, SingleStage):
            raise TypeError(f"unknown schedule {self.schedule!r}")

    @classmethod
    def single(cls, n: int, beta: float, m: int) -> "ProtocolConfig":
        return cls(n=n, schedule=SingleStage(float(beta)), m=m)

    @classmethod
    def two_stage(cls, n: int, beta1: float, beta2: float, m_star: int, m: int) -> "ProtocolConfig":
        return cls(n=n, schedule=TwoStage(float(beta1), float(beta2), int(m_star)), m=m)

    @property
    def is_two_stage(self) -> bool:
        return isinstance(self.schedule, TwoStage)

    @property
    def betas(self) -> tuple[float, ...]:
        if isinstance(self.schedule, TwoStage):
            return (self.schedule.beta1, self.schedule.beta2)
        return (self.schedule.beta,)

    def with_m(self, m: int) -> "ProtocolConfig":
        return replace(self, m=m)

    def slot_probabilities(self) -> np.ndarray:
        """Per-slot access probability for slots ``1..m``."""
        s = self.schedule
        if isinstance(s, SingleStage):
            return np.full(self.m, s.beta / self.n)
        probs = np.full(self.m, s.beta2 / self.n)
        probs[: min(s.m_star, self.m)] = s.beta1 / self.n
        return probs

    def to_dict(self) -> dict:
        out = {"n": self.n, "m": self.m}
        s = self.schedule
        if isinstance(s, SingleStage):
            out["beta"] = s.beta
        else:
            out.update(beta1=s.beta1, beta2=s.beta2, m_star=s.m_star)
        return out


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability ``omega[d]`` that a slot is hit by exactly ``d`` of the ``n`` users."""

    omega: np.ndarray = field(repr=False)
    n: int

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.shape != (self.n + 1,):
            raise ValueError(f"omega must have length n+1={self.n + 1}, got {omega.shape}")
        if np.any(omega < 0) or np.any(omega > 1):
            raise ValueError("omega entries must lie in [0, 1]")
        total = math.fsum(omega)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"omega must sum to 1, sums to {total!r}")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    def __getitem__(self, d: int) -> float:
        return float(self.omega[d])

    def __len__(self) -> int:
        return len(self.omega)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.n + 1), self.omega))

    def total_variation(self, other: "DegreeDistribution") -> float:
        return 0.5 * float(np.abs(self.omega - other.omega).sum())


def _check_beta(beta: float, n: int | None = None) -> None:
    if not (beta >= 0):  # also rejects NaN
        raise ValueError(f"beta must be non-negative, got {beta!r}")
    if n is not None and beta > n:
        raise ValueError(f"beta must not exceed n={n}, got {beta!r}")


def _binomial_pmf(n: int, p: float) -> np.ndarray:
    pmf = np.zeros(n + 1)
    if p == 0.0:
        pmf[0] = 1.0
        return pmf
    if p == 1.0:
        pmf[n] = 1.0
        return pmf
    # Anchor at the mode in the log domain, then walk outward with the
    # multiplicative recurrence; the tails underflow to 0 instead of overflowing.
    mode = min(int((n + 1) * p), n)
    log_mode = (
        math.lgamma(n + 1) - math.lgamma(mode + 1) - math.lgamma(n - mode + 1)
        + mode * math.log(p) + (n - mode) * math.log1p(-p)
    )
    pmf[mode] = math.exp(log_mode)
    odds = p / (1.0 - p)
    for i in range(mode, n):
        pmf[i + 1] = pmf[i] * (n - i) / (i + 1) * odds
    for i in range(mode, 0, -1):
        pmf[i - 1] = pmf[i] * i / (n - i + 1) / odds
    # lgamma of large arguments loses ~1e-11 relative in the anchor; the shape is exact
    return pmf / math.fsum(pmf)


def binomial_omega(n: int, beta: float) -> DegreeDistribution:
    """Exact slot-degree pmf ``Binom(n, beta/n)``."""
    _check_beta(beta, n)
    return DegreeDistribution(_binomial_pmf(n, beta / n), n)


def poisson_omega(n: int, beta: float) -> DegreeDistribution:
    """Poisson(beta) degree pmf truncated to ``d <= n`` and renormalized."""
    _check_beta(beta)
    pmf = np.zeros(n + 1)
    if beta == 0:
        pmf[0] = 1.0
    else:
        d = np.arange(n + 1)
        pmf = np.exp(d * math.log(beta) - beta - gammaln(d + 1))
        pmf /= math.fsum(pmf)
    return DegreeDistribution(pmf, n)


def two_stage_omega(config: ProtocolConfig, m: int | None = None) -> DegreeDistribution:
    """Degree pmf of a uniformly chosen slot among the first ``m`` slots of a two-stage schedule.

    For ``m <= m_star`` only the first stage is active. Beyond it the pmf is
    the mixture ``(m_star/m) Binom(n, p1) + ((m - m_star)/m) Binom(n, p2)``.
    """
    if not isinstance(config.schedule, TwoStage):
        raise ValueError("two_stage_omega needs a two-stage schedule")
    m = config.m if m is None else m
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    s = config.schedule
    first = _binomial_pmf(config.n, s.beta1 / config.n)
    if m <= s.m_star:
        return DegreeDistribution(first, config.n)
    second = _binomial_pmf(config.n, s.beta2 / config.n)
    w1 = s.m_star / m
    return DegreeDistribution(w1 * first + (1.0 - w1) * second, config.n)


def omega_for(config: ProtocolConfig, mode: str | None = None) -> DegreeDistribution:
    """Pick the degree pmf that drives the analysis of ``config``.

    ``mode`` is one of ``"exact-binomial"``, ``"poisson"`` or ``"two-stage"``;
    ``None`` selects exact-binomial for single-stage and two-stage otherwise.
    """
    if mode is None:
        mode = "two-stage" if config.is_two_stage else "exact-binomial"
    if config.is_two_stage:
        if mode != "two-stage":
            raise ValueError(f"omega mode {mode!r} is not available for a two-stage schedule")
        return two_stage_omega(config)
    beta = config.schedule.beta
    if mode in ("exact-binomial", "two-stage"):
        return binomial_omega(config.n, beta)
    if mode == "poisson":
        return poisson_omega(config.n, beta)
    raise ValueError(f"unknown omega mode {mode!r}")

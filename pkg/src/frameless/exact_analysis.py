"""Exact finite-length analysis of the SIC peeling decoder.

The decoder is tracked as a Markov chain over ``(c, r)``: the number of
cloud slots (reduced degree >= 2) and ripple slots (reduced degree 1) while
``u`` users are still unresolved. One user is resolved per step; the chain
is absorbed as a failure as soon as the ripple empties.

The state distribution of one stage is stored densely on the bounding box of
its support (``mass[i, j]`` is the probability of ``(c_lo + i, r_lo + j)``).
A step is applied as two binomial thinnings that commute:

* ripple pass: besides the slot being consumed, each of the other ``r - 1``
  ripple slots is hit by the resolved user with probability ``1/u``;
* cloud pass: each of the ``c`` cloud slots drops into the ripple with
  probability ``q_u``, which is a thinning along ``c`` at fixed ``c + r``.

Both passes are matrix products against binomial kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import gammaln, xlogy
from scipy.stats import hypergeom

from .degree_model import DegreeDistribution, ProtocolConfig, omega_for

DEFAULT_PRUNE_THRESHOLD = 1e-15
DENOMINATOR_FLOOR = 1e-300
CONSERVATION_TOLERANCE = 1e-9


class DegenerateDistributionError(ArithmeticError):
    """The cloud-membership probability vanished, so ``q_u`` is undefined."""


class ConservationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoderState:
    c: int
    r: int


@dataclass(frozen=True)
class TransitionCounts:
    a: int
    b: int
    q: float


@dataclass
class StateDistribution:
    """Distribution of ``(c, r)`` at the stage with ``u`` unresolved users."""

    u: int
    n: int
    m: int
    mass: np.ndarray = field(repr=False)
    c_lo: int = 0
    r_lo: int = 0
    failure_mass_by_u: np.ndarray = field(default=None, repr=False)
    pruned_mass: float = 0.0
    success_mass: float = 0.0

    def __post_init__(self):
        if self.failure_mass_by_u is None:
            self.failure_mass_by_u = np.zeros(self.n + 1)

    def probability(self, c: int, r: int) -> float:
        i, j = c - self.c_lo, r - self.r_lo
        if 0 <= i < self.mass.shape[0] and 0 <= j < self.mass.shape[1]:
            return float(self.mass[i, j])
        return 0.0

    def items(self) -> Iterator[tuple[DecoderState, float]]:
        for i, j in zip(*np.nonzero(self.mass)):
            yield DecoderState(int(self.c_lo + i), int(self.r_lo + j)), float(self.mass[i, j])

    def as_dict(self) -> dict[DecoderState, float]:
        return dict(self.items())

    @property
    def live_mass(self) -> float:
        return float(self.mass.sum())

    @property
    def conservation_defect(self) -> float:
        total = math.fsum(
            [self.live_mass, math.fsum(self.failure_mass_by_u), self.pruned_mass, self.success_mass]
        )
        return abs(1.0 - total)


@dataclass(frozen=True)
class AnalysisResult:
    config: ProtocolConfig
    per: float
    throughput: float
    failure_profile: np.ndarray = field(repr=False)
    conservation_defect: float
    pruned_mass: float
    omega_mode: str
    approximate: bool

    def to_dict(self) -> dict:
        out = self.config.to_dict()
        out.update(
            omega_mode=self.omega_mode,
            per=self.per,
            throughput=self.throughput,
            failure_profile=[float(x) for x in self.failure_profile],
            conservation_defect=self.conservation_defect,
            pruned_mass=self.pruned_mass,
            approximate=self.approximate,
        )
        return out


# --- binomial kernels ---------------------------------------------------

_LOG_FACTORIAL = gammaln(np.arange(1025) + 1.0)


def _log_factorial(upto: int) -> np.ndarray:
    global _LOG_FACTORIAL
    if upto >= len(_LOG_FACTORIAL):
        _LOG_FACTORIAL = gammaln(np.arange(2 * upto + 1) + 1.0)
    return _LOG_FACTORIAL


def _binom_kernel(trials: np.ndarray, k_lo: int, k_hi: int, p: float) -> np.ndarray:
    """``K[i, k - k_lo] = Pr{Binom(trials[i], p) = k}`` for ``k = k_lo..k_hi``."""
    t = np.asarray(trials)[:, None]
    k = np.arange(k_lo, k_hi + 1)[None, :]
    if p <= 0.0 or p >= 1.0:
        return (k == (np.zeros_like(t) if p <= 0.0 else t)).astype(float)
    lf = _log_factorial(max(int(t.max(initial=0)), k_hi))
    rest = t - k
    valid = (rest >= 0) & (k >= 0)
    log_pmf = (lf[t] + k * math.log(p)) - lf[np.maximum(k, 0)] + (
        rest * math.log1p(-p) - lf[np.maximum(rest, 0)]
    )
    log_pmf[~valid] = -np.inf
    return np.exp(log_pmf)


def _diagonal_view(a: np.ndarray, width: int) -> np.ndarray:
    """View ``v`` of a C-contiguous 2-D array with ``v[i, j] = a[i, i + j]``."""
    step = a.strides[1]
    return as_strided(a, shape=(a.shape[0], width), strides=(a.strides[0] + step, step), writeable=True)


def _loss_window(trials: int, p_loss: float) -> int:
    """How far below ``trials`` the survivor count of a thinning can land with non-negligible mass.

    Covers the loss count's mean plus 15 standard deviations plus 25; the
    binomial mass beyond this is below 1e-30, far under the pruning level.
    """
    mean = trials * p_loss
    return int(math.ceil(mean + 15.0 * math.sqrt(mean) + 25.0))


# --- q_u ----------------------------------------------------------------


def _q_terms(omega: np.ndarray, n: int, u) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator of the cloud-to-ripple probability.

    With ``K ~ Hypergeom(n, u, d)`` the number of unresolved neighbours of a
    degree-``d`` slot, the denominator is ``Pr{K >= 2}`` (the slot is in the
    cloud) and the numerator is ``Pr{K = 2} * 2/u`` (one of its two
    unresolved neighbours is the user resolved next). The tail is summed
    directly rather than as ``1 - Pr{K=0} - Pr{K=1}`` to avoid cancellation
    when the cloud is small.
    """
    u = np.atleast_1d(np.asarray(u))[:, None]
    d = np.arange(n + 1)[None, :]
    two = hypergeom.pmf(2, n, u, d)
    num = (two * (2.0 / u)) @ omega
    # split as Pr{K = 2} + Pr{K > 2} so that q is exactly 1 at u = 2
    den = (two + hypergeom.sf(2, n, u, d)) @ omega
    return num, den


def q_u(omega: DegreeDistribution, n: int, u: int) -> float:
    """Probability that a cloud slot enters the ripple when going from ``u`` to ``u - 1`` unresolved users."""
    if not 1 <= u <= n:
        raise ValueError(f"u must lie in [1, {n}], got {u}")
    num, den = _q_terms(np.asarray(omega.omega), n, u)
    if not den[0] > DENOMINATOR_FLOOR:
        raise DegenerateDistributionError(
            f"cloud-membership probability {den[0]!r} at u={u} is below {DENOMINATOR_FLOOR}"
        )
    return float(min(max(num[0] / den[0], 0.0), 1.0))


@lru_cache(maxsize=512)
def _q_sequence_cached(key: bytes, n: int) -> np.ndarray:
    omega = np.frombuffer(key, dtype=float)
    u = np.arange(1, n + 1)
    num, den = _q_terms(omega, n, u)
    q = np.full(n + 1, np.nan)
    ok = den > DENOMINATOR_FLOOR
    q[1:][ok] = np.clip(num[ok] / den[ok], 0.0, 1.0)
    q.setflags(write=False)
    return q


def q_sequence(omega: DegreeDistribution) -> np.ndarray:
    """``q[u]`` for ``u = 1..n`` (index 0 unused); NaN where the cloud is degenerate."""
    return _q_sequence_cached(np.ascontiguousarray(omega.omega).tobytes(), omega.n)


def transition_probability(state: DecoderState, counts: TransitionCounts, u: int) -> float:
    """Probability of ``(c, r) -> (c - b, r - a + b)`` in one decoding step.

    Direct evaluation of the product formula, one transition at a time; the
    DP uses the factorized kernels instead.
    """
    c, r = state.c, state.r
    a, b, q = counts.a, counts.b, counts.q
    if r < 1 or a < 1 or a > r or not 0 <= b <= c:
        return 0.0
    cloud = math.comb(c, b) * q**b * (1.0 - q) ** (c - b)
    ripple = math.comb(r - 1, a - 1) * (1.0 / u) ** (a - 1) * (1.0 - 1.0 / u) ** (r - a)
    return cloud * ripple


# --- DP -----------------------------------------------------------------


def _trim(mass: np.ndarray, c_lo: int, r_lo: int, threshold: float):
    """Zero entries below ``threshold`` and shrink to the support's bounding box."""
    pruned = 0.0
    if threshold > 0 and mass.size:
        small = (mass < threshold) & (mass != 0.0)
        if small.any():
            pruned = float(mass[small].sum())
            mass = np.where(small, 0.0, mass)
    rows = np.flatnonzero(mass.any(axis=1))
    if rows.size == 0:
        return np.zeros((0, 0)), 0, 0, pruned
    cols = np.flatnonzero(mass.any(axis=0))
    mass = mass[rows[0]: rows[-1] + 1, cols[0]: cols[-1] + 1]
    return mass, c_lo + int(rows[0]), r_lo + int(cols[0]), pruned


def initial_state(
    omega: DegreeDistribution, m: int, prune_threshold: float = 0.0
) -> StateDistribution:
    """Multinomial split of ``m`` slots into cloud / ripple / silent before any decoding."""
    n = omega.n
    p_cloud = max(1.0 - omega[0] - omega[1], 0.0)
    p_ripple, p_zero = omega[1], omega[0]
    c = np.arange(m + 1)[:, None]
    r = np.arange(m + 1)[None, :]
    z = m - c - r
    valid = z >= 0
    z = np.where(valid, z, 0)
    lf = _log_factorial(m)
    log_pmf = (
        lf[m] - lf[c] - lf[r] - lf[z]
        + xlogy(c, p_cloud) + xlogy(r, p_ripple) + xlogy(z, p_zero)
    )
    mass = np.where(valid, np.exp(log_pmf), 0.0)
    mass, c_lo, r_lo, pruned = _trim(mass, 0, 0, prune_threshold)
    return StateDistribution(u=n, n=n, m=m, mass=mass, c_lo=c_lo, r_lo=r_lo, pruned_mass=pruned)


def transition(
    dist: StateDistribution, q: Optional[float], prune_threshold: float = 0.0
) -> StateDistribution:
    """Advance the state distribution from ``u`` to ``u - 1`` unresolved users.

    States with an empty ripple are absorbed into ``failure_mass_by_u[u]``.
    ``q`` may be None only when no live state has a non-empty cloud.
    """
    u = dist.u
    if u < 1:
        raise ValueError("no transition out of u = 0")
    failures = dist.failure_mass_by_u.copy()
    mass, c_lo, r_lo = dist.mass, dist.c_lo, dist.r_lo

    if mass.size and r_lo == 0:
        failures[u] += float(mass[:, 0].sum())
        mass = mass[:, 1:]
        r_lo = 1
    mass, c_lo, r_lo, _ = _trim(mass, c_lo, r_lo, 0.0)

    if mass.size:
        before = float(mass.sum())
        n_c, n_r = mass.shape
        c_hi, r_hi = c_lo + n_c - 1, r_lo + n_r - 1

        # ripple pass: survivors among the other r - 1 ripple slots
        k_lo = max(0, r_lo - 1 - _loss_window(r_hi - 1, 1.0 / u))
        ka = _binom_kernel(np.arange(r_lo, r_hi + 1) - 1, k_lo, r_hi - 1, 1.0 - 1.0 / u)
        mass = mass @ ka
        r_lo = k_lo

        if c_hi > 0:
            if q is None or not np.isfinite(q):
                raise DegenerateDistributionError(f"cloud mass present at u={u} but q_u is undefined")
            # cloud pass on skewed coordinates (c, s = c + r); s is invariant
            n_r = mass.shape[1]
            skew = np.zeros((n_c, n_c + n_r - 1))
            _diagonal_view(skew, n_r)[:] = mass
            k_lo = max(0, c_lo - _loss_window(c_hi, q))
            kb = _binom_kernel(np.arange(c_lo, c_hi + 1), k_lo, c_hi, 1.0 - q)
            thinned = kb.T @ skew  # rows c' - k_lo, cols s - c_lo - r_lo
            n_rows, shift = thinned.shape[0], c_lo - k_lo
            padded = np.zeros((n_rows, shift + thinned.shape[1] + n_rows))
            padded[:, shift: shift + thinned.shape[1]] = thinned
            out = _diagonal_view(padded, shift + thinned.shape[1]).copy()
            mass, c_lo = out, k_lo

        after = float(mass.sum())
        if abs(after - before) > CONSERVATION_TOLERANCE:
            raise ConservationError(f"transition at u={u} changed total mass by {after - before:.3e}")

    mass, c_lo, r_lo, pruned = _trim(mass, c_lo, r_lo, prune_threshold)
    nxt = StateDistribution(
        u=u - 1,
        n=dist.n,
        m=dist.m,
        mass=mass,
        c_lo=c_lo,
        r_lo=r_lo,
        failure_mass_by_u=failures,
        pruned_mass=dist.pruned_mass + pruned,
        success_mass=dist.success_mass,
    )
    if nxt.u == 0:
        nxt.success_mass += nxt.live_mass
        nxt.mass, nxt.c_lo, nxt.r_lo = np.zeros((0, 0)), 0, 0
    return nxt


def run_dp(
    omega: DegreeDistribution, m: int, prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
) -> StateDistribution:
    """Run the decoder chain from ``u = n`` down to ``u = 0``."""
    q = q_sequence(omega)
    dist = initial_state(omega, m, prune_threshold)
    while dist.u > 0:
        u = dist.u
        if dist.mass.size == 0:
            dist = StateDistribution(
                u=0, n=dist.n, m=m, mass=dist.mass,
                failure_mass_by_u=dist.failure_mass_by_u,
                pruned_mass=dist.pruned_mass, success_mass=dist.success_mass,
            )
            break
        has_cloud = dist.c_lo + dist.mass.shape[0] - 1 > 0
        q_now = float(q[u]) if has_cloud else None
        if has_cloud and not np.isfinite(q_now):
            raise DegenerateDistributionError(
                f"cloud-membership probability at u={u} is below {DENOMINATOR_FLOOR}"
            )
        dist = transition(dist, q_now, prune_threshold)
    return dist


def analyze(
    config: ProtocolConfig,
    omega_mode: Optional[str] = None,
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
) -> AnalysisResult:
    """Packet error rate and throughput of ``config`` from the exact decoder chain.

    Pruned probability is charged to the PER in full, so the returned PER is
    an upper estimate by at most ``pruned_mass``.
    """
    omega = omega_for(config, omega_mode)
    mode = omega_mode or ("two-stage" if config.is_two_stage else "exact-binomial")
    final = run_dp(omega, config.m, prune_threshold)
    n = config.n
    fail = final.failure_mass_by_u
    per = math.fsum(u / n * fail[u] for u in range(1, n + 1)) + final.pruned_mass
    per = min(max(per, 0.0), 1.0)
    return AnalysisResult(
        config=config,
        per=per,
        throughput=n * (1.0 - per) / config.m,
        failure_profile=fail,
        conservation_defect=final.conservation_defect,
        pruned_mass=final.pruned_mass,
        omega_mode=mode,
        approximate=config.is_two_stage and config.m > config.schedule.m_star,
    )

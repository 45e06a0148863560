"""Grid searches over the access parameter using the exact analysis.

Two studies are supported: the ``beta`` that maximizes peak throughput over
the number of slots, and the second-stage ``beta2`` of a two-stage schedule
that minimizes the PER at a target ``m / n``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .degree_model import ProtocolConfig
from .exact_analysis import DEFAULT_PRUNE_THRESHOLD, analyze
from .monte_carlo import simulate

log = logging.getLogger(__name__)

PEAK_BETA_RANGE = (1.5, 3.5)
PEAK_M_RATIO_RANGE = (1.0, 1.8)
FLOOR_BETA2_RANGE = (2.0, 8.0)
COARSE_BETA_STEP = 0.05
FINE_BETA_STEP = 0.01
COARSE_M_STEP = 2


@dataclass(frozen=True)
class TracePoint:
    beta: float
    m: int
    throughput: float
    per: float
    pruned_mass: float
    conservation_defect: float


@dataclass(frozen=True)
class PeakResult:
    n: int
    beta_max: float
    t_max: float
    m_max: int
    search_trace: tuple[TracePoint, ...]

    def to_dict(self) -> dict:
        return {"n": self.n, "beta_max": self.beta_max, "t_max": self.t_max, "m_max": self.m_max}


@dataclass(frozen=True)
class TwoStageResult:
    n: int
    beta1: float
    beta2: float
    m_star: int
    target_m: int
    per_at_target: float
    single_stage_per: float
    search_trace: tuple[TracePoint, ...]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "m_star": self.m_star,
            "target_m": self.target_m,
            "per_at_target": self.per_at_target,
            "single_stage_per": self.single_stage_per,
        }


def grid(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive arithmetic grid, rounded so equal points compare equal."""
    count = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 10) for i in range(count + 1)]


def _point(config: ProtocolConfig, beta: float, prune_threshold: float) -> TracePoint:
    res = analyze(config, prune_threshold=prune_threshold)
    return TracePoint(beta, config.m, res.throughput, res.per, res.pruned_mass, res.conservation_defect)


def _best_peak(points: Iterable[TracePoint]) -> TracePoint:
    return min(points, key=lambda p: (-p.throughput, p.beta, p.m))


def _evaluate_peak(n, betas, ms, prune_threshold, seen: dict) -> None:
    for beta in sorted(betas):
        for m in sorted(ms):
            if (beta, m) not in seen:
                seen[beta, m] = _point(ProtocolConfig.single(n, beta, m), beta, prune_threshold)


def optimize_peak(
    n: int,
    beta_grid: Optional[Sequence[float]] = None,
    m_range: Optional[Sequence[int]] = None,
    refine: Optional[bool] = None,
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
) -> PeakResult:
    """Maximize throughput jointly over ``beta`` and ``m``.

    Without explicit grids a coarse pass (``beta`` step 0.05 on [1.5, 3.5],
    ``m`` step 2 on ``[n, 1.8 n]``) is followed by a refinement with ``beta``
    step 0.01 and ``m`` step 1 around the coarse winner. Ties go to the
    smaller ``beta``, then the smaller ``m``.
    """
    if refine is None:
        refine = beta_grid is None and m_range is None
    if beta_grid is None:
        beta_grid = grid(*PEAK_BETA_RANGE, COARSE_BETA_STEP)
    if m_range is None:
        lo, hi = PEAK_M_RATIO_RANGE
        m_range = range(max(1, math.ceil(lo * n)), math.floor(hi * n) + 1, COARSE_M_STEP)
    beta_grid = [round(float(b), 10) for b in beta_grid]
    m_range = [int(m) for m in m_range]
    if not beta_grid or not m_range:
        raise ValueError("empty search grid")

    seen: dict[tuple[float, int], TracePoint] = {}
    _evaluate_peak(n, beta_grid, m_range, prune_threshold, seen)
    best = _best_peak(seen.values())
    log.info("n=%d coarse peak beta=%.2f m=%d T=%.6f", n, best.beta, best.m, best.throughput)

    if refine:
        half = COARSE_BETA_STEP
        betas = [b for b in grid(best.beta - half, best.beta + half, FINE_BETA_STEP) if 0 <= b <= n]
        span = 2 * COARSE_M_STEP
        ms = range(max(1, best.m - span), best.m + span + 1)
        _evaluate_peak(n, betas, ms, prune_threshold, seen)
        best = _best_peak(seen.values())
        log.info("n=%d refined peak beta=%.2f m=%d T=%.6f", n, best.beta, best.m, best.throughput)

    trace = tuple(seen[k] for k in sorted(seen))
    return PeakResult(n=n, beta_max=best.beta, t_max=best.throughput, m_max=best.m, search_trace=trace)


def optimize_floor(
    n: int,
    beta1: float,
    m_star: int,
    beta2_grid: Optional[Sequence[float]] = None,
    target_ratio: float = 2.0,
    refine: Optional[bool] = None,
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
) -> TwoStageResult:
    """Choose ``beta2`` minimizing the PER at ``m = round(target_ratio * n)``.

    The default grid is [2, 8] with step 0.05, refined to step 0.01 around
    the coarse minimizer. Ties go to the smaller ``beta2``.
    """
    if refine is None:
        refine = beta2_grid is None
    if beta2_grid is None:
        beta2_grid = grid(*FLOOR_BETA2_RANGE, COARSE_BETA_STEP)
    beta2_grid = [round(float(b), 10) for b in beta2_grid if 0 <= b <= n]
    if not beta2_grid:
        raise ValueError("empty search grid")
    target_m = int(round(target_ratio * n))

    seen: dict[float, TracePoint] = {}

    def evaluate(betas):
        for b in sorted(betas):
            if b not in seen:
                cfg = ProtocolConfig.two_stage(n, beta1, b, m_star, target_m)
                seen[b] = _point(cfg, b, prune_threshold)

    def best():
        return min(seen.values(), key=lambda p: (p.per, p.beta))

    evaluate(beta2_grid)
    if refine:
        b0 = best().beta
        evaluate([b for b in grid(b0 - COARSE_BETA_STEP, b0 + COARSE_BETA_STEP, FINE_BETA_STEP) if 0 <= b <= n])
    winner = best()
    single = analyze(ProtocolConfig.single(n, beta1, target_m), prune_threshold=prune_threshold)
    log.info("n=%d beta2=%.2f PER=%.3e (single-stage %.3e)", n, winner.beta, winner.per, single.per)
    return TwoStageResult(
        n=n,
        beta1=beta1,
        beta2=winner.beta,
        m_star=m_star,
        target_m=target_m,
        per_at_target=winner.per,
        single_stage_per=single.per,
        search_trace=tuple(seen[k] for k in sorted(seen)),
    )


def sweep(
    config: ProtocolConfig,
    m_values: Iterable[int],
    trials: int = 0,
    seed: int = 0,
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
) -> list[dict]:
    """One row per ``m`` with the exact PER/throughput, plus simulation columns when ``trials > 0``."""
    rows = []
    for m in m_values:
        cfg = config.with_m(int(m))
        res = analyze(cfg, prune_threshold=prune_threshold)
        row = cfg.to_dict()
        row = {"n": row.pop("n"), "m": row.pop("m"), "m_over_n": cfg.m / cfg.n, **row}
        row.update(per=res.per, throughput=res.throughput)
        if trials > 0:
            sim = simulate(cfg, trials, seed)
            row.update(
                sim_per=sim.mean_per,
                sim_throughput=sim.mean_throughput,
                trials=trials,
                stderr_per=sim.stderr_per,
                stderr_throughput=sim.stderr_throughput,
                seed=seed,
            )
        rows.append(row)
    return rows


def m_grid(n: int, ratio_lo: float, ratio_hi: float, step: int = 1) -> np.ndarray:
    return np.arange(max(1, math.ceil(ratio_lo * n)), math.floor(ratio_hi * n) + 1, step)

"""Monte Carlo simulation of contention periods and the SIC peeling decoder."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .degree_model import ProtocolConfig


@dataclass(frozen=True)
class ContentionGraph:
    """Bipartite user-slot graph; ``incidence[j]`` lists the users heard in slot ``j``."""

    n: int
    m: int
    incidence: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.incidence) != self.m:
            raise ValueError(f"expected {self.m} slots, got {len(self.incidence)}")
        for slot in self.incidence:
            if len(set(slot)) != len(slot):
                raise ValueError(f"user repeated within a slot: {slot}")
            if any(not 0 <= v < self.n for v in slot):
                raise ValueError(f"user index out of range in slot {slot}")

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "ContentionGraph":
        """Build from a boolean ``(m, n)`` slot-by-user matrix."""
        matrix = np.asarray(matrix, dtype=bool)
        m, n = matrix.shape
        return cls(n, m, tuple(tuple(int(v) for v in np.flatnonzero(row)) for row in matrix))

    @property
    def edges(self) -> int:
        return sum(len(slot) for slot in self.incidence)


@dataclass(frozen=True)
class SimulationResult:
    config: ProtocolConfig
    trials: int
    seed: int
    mean_per: float
    mean_throughput: float
    stderr_per: float
    stderr_throughput: float

    def to_dict(self) -> dict:
        out = self.config.to_dict()
        out.update(
            per=self.mean_per,
            throughput=self.mean_throughput,
            trials=self.trials,
            stderr_per=self.stderr_per,
            stderr_throughput=self.stderr_throughput,
            seed=self.seed,
        )
        return out


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, keyed only by ``(seed, trial)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def sample_matrix(config: ProtocolConfig, rng: np.random.Generator) -> np.ndarray:
    p = config.slot_probabilities()[:, None]
    return rng.random((config.m, config.n)) < p


def sample_graph(config: ProtocolConfig, rng: np.random.Generator) -> ContentionGraph:
    """Draw every (user, slot) edge independently with that slot's access probability."""
    return ContentionGraph.from_matrix(sample_matrix(config, rng))


def peel(
    graph: ContentionGraph,
    policy: str = "first",
    rng: Optional[np.random.Generator] = None,
) -> set[int]:
    """Resolve users by iterative interference cancellation.

    ``policy`` picks which pending singleton slot is decoded next: ``"first"``
    takes them in discovery order, ``"random"`` draws one uniformly with
    ``rng``. The resolved set does not depend on the choice.
    """
    if policy not in ("first", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    if policy == "random" and rng is None:
        rng = np.random.default_rng()
    slots = [set(s) for s in graph.incidence]
    slots_of_user: dict[int, list[int]] = {}
    for j, slot in enumerate(graph.incidence):
        for v in slot:
            slots_of_user.setdefault(v, []).append(j)

    pending = [j for j, s in enumerate(slots) if len(s) == 1]
    queue = deque(pending) if policy == "first" else pending
    resolved: set[int] = set()
    while queue:
        if policy == "first":
            j = queue.popleft()
        else:
            k = int(rng.integers(len(queue)))
            queue[k], queue[-1] = queue[-1], queue[k]
            j = queue.pop()
        if len(slots[j]) != 1:
            continue  # emptied by an earlier cancellation
        (v,) = slots[j]
        resolved.add(v)
        for jj in slots_of_user[v]:
            slot = slots[jj]
            slot.discard(v)
            if len(slot) == 1:
                queue.append(jj)
    return resolved


def _peel_matrix(matrix: np.ndarray) -> int:
    """Number of users resolved from a boolean ``(m, n)`` matrix."""
    slots_idx, users_idx = np.nonzero(matrix)
    m = matrix.shape[0]
    degree = np.bincount(slots_idx, minlength=m).tolist()
    members: list[list[int]] = [[] for _ in range(m)]
    slots_of_user: dict[int, list[int]] = {}
    for j, v in zip(slots_idx.tolist(), users_idx.tolist()):
        members[j].append(v)
        slots_of_user.setdefault(v, []).append(j)
    resolved = set()
    queue = [j for j in range(m) if degree[j] == 1]
    while queue:
        j = queue.pop()
        if degree[j] != 1:
            continue
        v = next(x for x in members[j] if x not in resolved)
        resolved.add(v)
        for jj in slots_of_user[v]:
            degree[jj] -= 1
            if degree[jj] == 1:
                queue.append(jj)
    return len(resolved)


def run_trials(config: ProtocolConfig, trials: int, seed: int, start: int = 0) -> np.ndarray:
    """Resolved-user counts for trials ``start .. start + trials - 1``."""
    return np.array(
        [_peel_matrix(sample_matrix(config, trial_rng(seed, t))) for t in range(start, start + trials)],
        dtype=np.int64,
    )


def summarize(config: ProtocolConfig, resolved: Sequence[int], seed: int) -> SimulationResult:
    resolved = np.asarray(resolved, dtype=np.int64)
    trials = len(resolved)
    n, m = config.n, config.m
    # integer sums keep the aggregate independent of trial ordering
    total = int(resolved.sum())
    total_sq = int((resolved * resolved).sum())
    mean = total / trials
    var = (total_sq - total * total / trials) / (trials - 1) if trials > 1 else 0.0
    sd = math.sqrt(max(var, 0.0))
    se = sd / math.sqrt(trials)
    return SimulationResult(
        config=config,
        trials=trials,
        seed=seed,
        mean_per=1.0 - mean / n,
        mean_throughput=mean / m,
        stderr_per=se / n,
        stderr_throughput=se / m,
    )


def simulate(config: ProtocolConfig, trials: int, seed: int = 0) -> SimulationResult:
    """Average PER and throughput over ``trials`` independent contention periods."""
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    return summarize(config, run_trials(config, trials, seed), seed)

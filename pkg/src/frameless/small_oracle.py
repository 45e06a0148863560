"""Exact PER by brute force over every user-slot incidence matrix of a tiny instance."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .degree_model import ProtocolConfig

MAX_EDGES = 24


@dataclass(frozen=True)
class OracleResult:
    config: ProtocolConfig
    exact_per: float
    exact_throughput: float
    enumerated_graphs: int
    total_probability: float

    def to_dict(self) -> dict:
        out = self.config.to_dict()
        out.update(
            per=self.exact_per,
            throughput=self.exact_throughput,
            enumerated_graphs=self.enumerated_graphs,
            total_probability=self.total_probability,
        )
        return out


def peel_masks(slot_masks) -> int:
    """Bitmask of users resolved by peeling; ``slot_masks[j]`` has bit ``v`` set if user ``v`` is in slot ``j``."""
    resolved = 0
    progress = True
    while progress:
        progress = False
        for mask in slot_masks:
            left = mask & ~resolved
            if left and not left & (left - 1):
                resolved |= left
                progress = True
    return resolved


def enumerate_exact(config: ProtocolConfig) -> OracleResult:
    n, m = config.n, config.m
    if n * m > MAX_EDGES:
        raise ValueError(f"n*m = {n * m} exceeds the enumeration bound {MAX_EDGES}")
    patterns = range(1 << n)
    # probability of each transmit pattern in each slot
    slot_pattern_prob = []
    for p in config.slot_probabilities():
        p = float(p)
        row = []
        for pattern in patterns:
            k = bin(pattern).count("1")
            row.append(p**k * (1.0 - p) ** (n - k))
        slot_pattern_prob.append(row)

    weighted_unresolved = []
    probs = []
    count = 0
    for graph in itertools.product(patterns, repeat=m):
        count += 1
        prob = math.prod(slot_pattern_prob[j][pat] for j, pat in enumerate(graph))
        if prob == 0.0:
            continue
        resolved = bin(peel_masks(graph)).count("1")
        probs.append(prob)
        weighted_unresolved.append(prob * (n - resolved))
    per = math.fsum(weighted_unresolved) / n
    return OracleResult(
        config=config,
        exact_per=per,
        exact_throughput=n * (1.0 - per) / m,
        enumerated_graphs=count,
        total_probability=math.fsum(probs),
    )

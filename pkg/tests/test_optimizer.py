import numpy as np
import pytest

from frameless.degree_model import ProtocolConfig
from frameless.exact_analysis import analyze
from frameless.optimizer import grid, m_grid, optimize_floor, optimize_peak, sweep
from frameless.small_oracle import enumerate_exact


def test_grid_is_inclusive_and_clean():
    assert grid(1.5, 1.7, 0.05) == [1.5, 1.55, 1.6, 1.65, 1.7]
    assert grid(2.0, 2.0, 0.01) == [2.0]


def test_m_grid():
    np.testing.assert_array_equal(m_grid(10, 1.0, 1.5), [10, 11, 12, 13, 14, 15])


@pytest.fixture(scope="module")
def small_peak():
    return optimize_peak(20, grid(1.5, 3.0, 0.1), range(18, 34))


def test_peak_is_max_of_trace(small_peak):
    best = max(small_peak.search_trace, key=lambda t: t.throughput)
    assert small_peak.t_max == best.throughput
    assert (small_peak.beta_max, small_peak.m_max) == (best.beta, best.m)
    assert len(small_peak.search_trace) == 16 * 16


def test_peak_matches_direct_analysis(small_peak):
    res = analyze(ProtocolConfig.single(20, small_peak.beta_max, small_peak.m_max))
    assert res.throughput == small_peak.t_max


def test_refinement_never_worse():
    coarse = optimize_peak(12, grid(1.5, 3.5, 0.05), range(12, 22, 2), refine=False)
    fine = optimize_peak(12, grid(1.5, 3.5, 0.05), range(12, 22, 2), refine=True)
    assert fine.t_max >= coarse.t_max
    assert {(t.beta, t.m) for t in coarse.search_trace} <= {(t.beta, t.m) for t in fine.search_trace}


def test_tie_breaking_prefers_smaller_beta():
    # beta = n makes every user transmit in every slot: nobody decodes for n >= 2
    res = optimize_peak(3, [3.0, 2.99], [4])
    assert res.beta_max == 2.99
    zero = optimize_peak(3, [0.0], [2, 3])
    assert zero.t_max == 0 and zero.m_max == 2


def test_floor_beats_or_ties_single_stage():
    res = optimize_floor(20, 2.5, 25, grid(2.0, 8.0, 0.5), target_ratio=2.0)
    assert res.target_m == 40
    assert res.per_at_target <= res.single_stage_per + 1e-15
    best = min(res.search_trace, key=lambda t: (t.per, t.beta))
    assert res.beta2 == best.beta
    assert res.single_stage_per == analyze(ProtocolConfig.single(20, 2.5, 40)).per


def test_floor_with_beta1_in_grid_contains_single_stage():
    res = optimize_floor(15, 2.0, 15, [2.0], target_ratio=2.0)
    assert res.per_at_target == pytest.approx(res.single_stage_per, abs=1e-15)


def test_floor_rejects_empty_grid():
    with pytest.raises(ValueError):
        optimize_floor(5, 2.0, 5, [9.0])


def test_sweep_silent_protocol():
    rows = sweep(ProtocolConfig.single(10, 0.0, 1), range(1, 21))
    assert [r["throughput"] for r in rows] == [0.0] * 20
    assert [r["per"] for r in rows] == [1.0] * 20


def test_sweep_matches_oracle():
    rows = sweep(ProtocolConfig.single(3, 1.5, 1), range(1, 6))
    for r in rows:
        exact = enumerate_exact(ProtocolConfig.single(3, 1.5, r["m"])).exact_per
        assert abs(r["per"] - exact) < 1e-12


def test_sweep_columns_and_simulation():
    rows = sweep(ProtocolConfig.single(10, 2.0, 1), [10, 15], trials=200, seed=5)
    assert list(rows[0])[:4] == ["n", "m", "m_over_n", "beta"]
    assert rows[1]["m_over_n"] == 1.5
    for r in rows:
        assert r["trials"] == 200 and r["seed"] == 5
        assert abs(r["sim_per"] - r["per"]) < 5 * r["stderr_per"] + 1e-9


def test_three_phase_shape_small_n():
    rows = sweep(ProtocolConfig.single(40, 2.5, 1), range(20, 161))
    t = np.array([r["throughput"] for r in rows])
    ratio = np.array([r["m_over_n"] for r in rows])
    peak = ratio[t.argmax()]
    assert 1.0 < peak < 1.8
    assert np.all(np.diff(t[ratio >= 2]) < 0)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from frameless.degree_model import ProtocolConfig, binomial_omega
from frameless.monte_carlo import (
    ContentionGraph,
    _peel_matrix,
    peel,
    run_trials,
    sample_graph,
    sample_matrix,
    simulate,
    summarize,
    trial_rng,
)
from frameless.small_oracle import enumerate_exact


def test_no_edges_when_silent():
    g = sample_graph(ProtocolConfig.single(5, 0.0, 4), np.random.default_rng(1))
    assert g.edges == 0


def test_complete_graph_when_p_is_one():
    g = sample_graph(ProtocolConfig.single(5, 5.0, 4), np.random.default_rng(1))
    assert all(slot == (0, 1, 2, 3, 4) for slot in g.incidence)


def test_slot_degree_histogram_is_binomial():
    cfg = ProtocolConfig.single(100, 2.5, 100)
    rng = np.random.default_rng(99)
    degrees = np.concatenate([sample_matrix(cfg, rng).sum(axis=1) for _ in range(1000)])
    om = binomial_omega(100, 2.5).omega
    # pool the tail so every expected count is comfortably large
    top = 8
    observed = np.bincount(np.minimum(degrees, top), minlength=top + 1)
    expected = np.append(om[:top], om[top:].sum()) * len(degrees)
    assert chisquare(observed, expected).pvalue > 0.01


def test_two_stage_slot_probabilities_used():
    cfg = ProtocolConfig.two_stage(50, 1.0, 25.0, 3, 6)
    rng = np.random.default_rng(0)
    mats = np.array([sample_matrix(cfg, rng) for _ in range(400)])
    per_slot = mats.mean(axis=(0, 2))
    assert np.all(np.abs(per_slot[:3] - 0.02) < 0.01)
    assert np.all(np.abs(per_slot[3:] - 0.5) < 0.03)


def test_small_chain_fully_resolved():
    # users 1..3 -> 0..2; user 0 in slots 0,1; user 1 in slots 0,2; user 2 in slot 1
    g = ContentionGraph(3, 3, ((0, 1), (0, 2), (1,)))
    assert peel(g) == {0, 1, 2}


def test_empty_graph():
    assert peel(ContentionGraph(0, 0, ())) == set()
    assert peel(ContentionGraph(3, 2, ((), ()))) == set()


def test_stuck_collision():
    assert peel(ContentionGraph(2, 1, ((0, 1),))) == set()


def test_graph_validation():
    with pytest.raises(ValueError):
        ContentionGraph(2, 1, ((0, 0),))
    with pytest.raises(ValueError):
        ContentionGraph(2, 1, ((2,),))
    with pytest.raises(ValueError):
        ContentionGraph(2, 2, ((0,),))


def test_unknown_policy():
    with pytest.raises(ValueError):
        peel(ContentionGraph(1, 1, ((0,),)), policy="last")


def test_order_independence_random_graphs():
    cfg = ProtocolConfig.single(30, 2.5, 40)
    for t in range(100):
        g = sample_graph(cfg, trial_rng(5, t))
        first = peel(g, "first")
        rand = peel(g, "random", np.random.default_rng(t))
        assert first == rand
        assert len(first) == _peel_matrix(sample_matrix(cfg, trial_rng(5, t)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
def test_resolved_users_are_connected(seed, n, m):
    cfg = ProtocolConfig.single(n, min(2.0, n), m)
    g = sample_graph(cfg, np.random.default_rng(seed))
    resolved = peel(g)
    connected = {v for slot in g.incidence for v in slot}
    assert resolved <= connected
    assert len(resolved) <= n


def test_trial_streams_are_deterministic():
    cfg = ProtocolConfig.single(40, 2.5, 50)
    a = run_trials(cfg, 50, seed=3)
    b = np.concatenate([run_trials(cfg, 20, seed=3), run_trials(cfg, 30, seed=3, start=20)])
    np.testing.assert_array_equal(a, b)
    assert simulate(cfg, 50, 3) == simulate(cfg, 50, 3)
    assert simulate(cfg, 50, 3) != simulate(cfg, 50, 4)


def test_summary_independent_of_trial_order():
    cfg = ProtocolConfig.single(40, 2.5, 50)
    counts = run_trials(cfg, 200, seed=11)
    assert summarize(cfg, counts, 11) == summarize(cfg, counts[::-1].copy(), 11)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        trial_rng(-1, 0)


def test_zero_trials_rejected():
    with pytest.raises(ValueError):
        simulate(ProtocolConfig.single(3, 1.0, 3), 0)


@pytest.mark.parametrize("beta", [0.5, 0.1])
def test_single_user_limit(beta):
    # one user is lost iff it never transmits
    res = simulate(ProtocolConfig.single(1, beta, 5), 20000, seed=1)
    assert abs(res.mean_per - (1 - beta) ** 5) < 3 * res.stderr_per


def test_agrees_with_exhaustive_oracle():
    cfg = ProtocolConfig.single(3, 1.5, 4)
    exact = enumerate_exact(cfg).exact_per
    res = simulate(cfg, 100_000, seed=2024)
    assert abs(res.mean_per - exact) < 3 * res.stderr_per


def test_to_dict_columns():
    d = simulate(ProtocolConfig.single(5, 1.0, 5), 10, 0).to_dict()
    assert {"trials", "stderr_per", "stderr_throughput", "seed", "per", "throughput"} <= set(d)

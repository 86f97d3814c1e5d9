"""Importance weighting identities and allocation conservation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from votesynth.errors import ConfigError, DegenerateHistogramError
from votesynth.weighting import (
    allocate,
    normalize_and_allocate,
    normalize_weights,
    round_half_up,
    score_generators,
    uniform_weights,
)


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2
    assert round_half_up(2.4) == 2
    assert round_half_up(1200.0) == 1200


def test_worked_example_exact():
    weights = score_generators(
        np.array([4.0, 2.0, 1.0, 1.0]), ["a", "a", "b", "b"], ["a", "b"]
    )
    assert weights == {"a": 1.5, "b": 0.5}


def test_uniform_histogram_gives_unit_weights():
    weights = score_generators(np.ones(6), ["a", "a", "b", "b", "c", "c"], ["a", "b", "c"])
    for value in weights.values():
        assert value == pytest.approx(1.0)


def test_single_owner_weight_is_one():
    weights = score_generators(np.array([3.0, 1.0, 2.0]), ["a", "a", "a"], ["a"])
    assert weights == {"a": 1.0}


def test_degenerate_histogram_signals():
    with pytest.raises(DegenerateHistogramError):
        score_generators(np.zeros(4), ["a", "a", "b", "b"], ["a", "b"])


def test_unowned_generator_rejected():
    with pytest.raises(ConfigError):
        score_generators(np.ones(2), ["a", "a"], ["a", "b"])


def test_unregistered_owner_rejected():
    with pytest.raises(ConfigError):
        score_generators(np.ones(2), ["a", "ghost"], ["a"])


def test_pre_normalization_identity():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(4, 40))
        owners = [f"g{int(rng.integers(3))}" for _ in range(n)]
        # make sure every generator owns something
        owners[:3] = ["g0", "g1", "g2"]
        histogram = rng.exponential(size=n) + 1e-9
        weights = score_generators(histogram, owners, ["g0", "g1", "g2"])
        identity = sum(
            weights[g] * owners.count(g) / n for g in ("g0", "g1", "g2")
        )
        assert identity == pytest.approx(1.0, abs=1e-9)


def test_scale_invariance():
    histogram = np.array([4.0, 2.0, 1.0, 1.0])
    owners = ["a", "a", "b", "b"]
    base = score_generators(histogram, owners, ["a", "b"])
    scaled = score_generators(histogram * 37.5, owners, ["a", "b"])
    for generator_id in base:
        assert scaled[generator_id] == pytest.approx(base[generator_id], rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    votes=st.lists(st.floats(0.0, 10.0), min_size=4, max_size=4),
    bump=st.floats(0.1, 20.0),
)
def test_monotone_response(votes, bump):
    owners = ["a", "a", "b", "b"]
    histogram = np.asarray(votes)
    if histogram.sum() == 0.0:
        histogram = histogram + 0.25
    bumped = histogram.copy()
    bumped[0] += bump
    before = normalize_weights(score_generators(histogram, owners, ["a", "b"]))
    after = normalize_weights(score_generators(bumped, owners, ["a", "b"]))
    assert after["a"] >= before["a"] - 1e-12


def test_normalize_and_allocate_worked_example():
    normalized, counts = normalize_and_allocate({"a": 1.5, "b": 0.5}, 6000, 5)
    assert normalized == {"a": 0.75, "b": 0.25}
    assert counts == {"a": 900, "b": 300}


def test_uniform_six_generators():
    raw = {f"g{i}": 1.0 for i in range(6)}
    _, counts = normalize_and_allocate(raw, 6000, 5)
    assert all(count == 200 for count in counts.values())


def test_clamp_negative_weight_keeps_generator_alive():
    normalized, counts = normalize_and_allocate({"a": 1.0, "b": -0.2}, 6000, 5, floor=0.005)
    assert normalized["b"] == pytest.approx(0.005 / 1.005)
    assert counts["a"] + counts["b"] == 1200
    assert counts["b"] > 0


def test_default_floor_is_percent_of_uniform():
    normalized = normalize_weights({"a": 5.0, "b": -3.0})
    assert normalized["b"] == pytest.approx((0.01 / 2) / (5.0 + 0.01 / 2))


def test_budget_smaller_than_roster_rejected():
    with pytest.raises(ConfigError):
        normalize_and_allocate({"a": 1.0, "b": 1.0, "c": 1.0}, 10, 5)


def test_uniform_weights_sum_to_one():
    weights = uniform_weights(["x", "y", "z", "w"])
    assert sum(weights.values()) == pytest.approx(1.0)


@settings(max_examples=120, deadline=None)
@given(
    raws=st.lists(st.floats(-2.0, 5.0), min_size=1, max_size=8),
    total=st.integers(40, 9000),
    iterations=st.integers(2, 9),
)
def test_allocation_conservation(raws, total, iterations):
    raw = {f"g{i}": value for i, value in enumerate(raws)}
    per_iteration = round_half_up(total / iterations)
    if per_iteration < len(raw):
        return
    _, counts = normalize_and_allocate(raw, total, iterations)
    assert sum(counts.values()) == per_iteration
    assert all(count >= 0 for count in counts.values())


def test_remainder_goes_to_heaviest_first():
    # three equal thirds of 100: rounding gives 33 each, remainder 1 goes to
    # the heaviest (ties broken by id, so "a")
    counts = allocate({"a": 1 / 3, "b": 1 / 3, "c": 1 / 3}, 100)
    assert counts == {"a": 34, "b": 33, "c": 33}


def test_overallocation_taken_from_lightest():
    # 0.5/0.5 rounding of odd budget over-allocates by one
    counts = allocate({"a": 0.5, "b": 0.5}, 101)
    assert sum(counts.values()) == 101
    assert counts["a"] >= counts["b"]

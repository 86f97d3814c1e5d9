"""Partitioning, per-party voting, and the secure-sum visibility boundary."""

import numpy as np
import pytest

from _helpers import embedded, random_voting_instance
from votesynth.core import EmbeddedSet, VoteHistograms
from votesynth.errors import ConfigError, VotingError
from votesynth.federated import (
    AggregationEnvelope,
    build_parties,
    partition_dirichlet,
    party_vote,
    secure_sum,
    write_partition_manifest,
)
from votesynth.privacy import vote_mass_per_sample
from votesynth.streams import stream
from votesynth.voting import add_gaussian_noise, top_q_vote


def balanced_labels(total, categories=("negative", "positive")):
    return [categories[i % len(categories)] for i in range(total)]


def test_single_party_owns_everything():
    partition = partition_dirichlet(balanced_labels(17), 1, 1.0, np.random.default_rng(0))
    assert partition == [list(range(17))]


def test_partition_is_disjoint_cover():
    rng = np.random.default_rng(4)
    labels = balanced_labels(300)
    partition = partition_dirichlet(labels, 10, 1.0, rng)
    flat = sorted(i for part in partition for i in part)
    assert flat == list(range(300))
    assert all(part for part in partition)


def test_large_alpha_concentrates_at_uniform():
    rng = np.random.default_rng(8)
    partition = partition_dirichlet(balanced_labels(300), 10, 1e6, rng)
    sizes = [len(part) for part in partition]
    assert all(abs(size - 30) <= 6 for size in sizes)  # within 20% of 30


def test_small_alpha_skews_sizes():
    rng = np.random.default_rng(15)
    partition = partition_dirichlet(balanced_labels(300), 10, 0.1, rng)
    sizes = sorted(len(part) for part in partition)
    assert sizes[-1] - sizes[0] > 20  # strongly non-uniform


def test_partition_retries_exhausted():
    rng = np.random.default_rng(3)
    labels = ["only"] * 6
    with pytest.raises(ConfigError, match="alpha"):
        partition_dirichlet(labels, 6, 1e-4, rng, max_retries=3)


def test_partition_more_parties_than_samples():
    with pytest.raises(ConfigError):
        partition_dirichlet(balanced_labels(3), 4, 1.0, np.random.default_rng(0))


def test_build_parties_validates_cover():
    private = embedded(balanced_labels(4), np.zeros((4, 2)))
    with pytest.raises(ConfigError):
        build_parties(private, [[0, 1], [1, 2, 3]])  # overlap
    with pytest.raises(ConfigError):
        build_parties(private, [[0, 1], [2]])  # missing 3
    parties = build_parties(private, [[0, 3], [1, 2]])
    assert parties[0].members.labels == ("negative", "positive")
    assert parties[0].size == 2


def test_single_party_vote_matches_centralized_bitwise():
    rng = np.random.default_rng(12)
    pl, pv, sl, sv, q = random_voting_instance(rng, max_private=8, max_synth=12)
    private = embedded(pl, pv)
    synthetic = embedded(sl, sv)
    sigma = 2.5

    centralized = add_gaussian_noise(
        top_q_vote(private, synthetic, q), sigma, stream(9, "noise", 0)
    )
    party = build_parties(private, [list(range(len(pl)))])[0]
    envelope = party_vote(party, synthetic, q, sigma, stream(9, "noise", 0))
    aggregated = secure_sum([envelope])
    assert np.array_equal(aggregated.nearest, centralized.nearest)
    assert np.array_equal(aggregated.furthest, centralized.furthest)


def test_single_sample_party_mass():
    private = embedded(["positive"], [[0.0, 0.0]])
    synthetic = embedded(["positive"] * 5, np.arange(10.0).reshape(5, 2))
    party = build_parties(private, [[0]])[0]
    aggregated = secure_sum([party_vote(party, synthetic, 2, 0.0, np.random.default_rng(0))])
    assert aggregated.nearest.sum() == vote_mass_per_sample(2) == 1.5
    assert aggregated.furthest.sum() == 1.5


def test_two_party_prenoise_sum_equals_centralized():
    rng = np.random.default_rng(40)
    for _ in range(20):
        pl, pv, sl, sv, q = random_voting_instance(rng, max_private=8, max_synth=12)
        private = embedded(pl, pv)
        synthetic = embedded(sl, sv)
        split = len(pl) // 2
        if split == 0 or split == len(pl):
            continue
        parties = build_parties(private, [list(range(split)), list(range(split, len(pl)))])
        envelopes = [
            party_vote(party, synthetic, q, 0.0, np.random.default_rng(party.party_id))
            for party in parties
        ]
        aggregated = secure_sum(envelopes)
        centralized = top_q_vote(private, synthetic, q)
        assert np.array_equal(aggregated.nearest, centralized.nearest)
        assert np.array_equal(aggregated.furthest, centralized.furthest)


def test_secure_sum_deterministic_entries():
    a = AggregationEnvelope(
        VoteHistograms(nearest=np.array([1.0, 2.0]), furthest=np.array([0.5, 0.0]), noised=True)
    )
    b = AggregationEnvelope(
        VoteHistograms(nearest=np.array([3.0, -1.0]), furthest=np.array([0.5, 4.0]), noised=True)
    )
    total = secure_sum([a, b])
    assert total.nearest.tolist() == [4.0, 1.0]
    assert total.furthest.tolist() == [1.0, 4.0]


def test_secure_sum_single_envelope_identity():
    histograms = VoteHistograms(
        nearest=np.array([1.0, 2.0]), furthest=np.array([3.0, 4.0]), noised=True
    )
    total = secure_sum([AggregationEnvelope(histograms)])
    assert np.array_equal(total.nearest, histograms.nearest)
    assert np.array_equal(total.furthest, histograms.furthest)


def test_secure_sum_length_mismatch():
    a = AggregationEnvelope(VoteHistograms(np.zeros(2), np.zeros(2), noised=True))
    b = AggregationEnvelope(VoteHistograms(np.zeros(3), np.zeros(3), noised=True))
    with pytest.raises(VotingError):
        secure_sum([a, b])


def test_envelope_rejects_unnoised_histograms():
    with pytest.raises(ConfigError):
        AggregationEnvelope(VoteHistograms(np.zeros(2), np.zeros(2), noised=False))


def test_envelope_public_surface_hides_contributions():
    envelope = AggregationEnvelope(
        VoteHistograms(nearest=np.ones(3), furthest=np.ones(3), noised=True)
    )
    public = [name for name in dir(envelope) if not name.startswith("_")]
    assert set(public) == {"length", "noised"}
    assert envelope.length == 3
    assert envelope.noised is True
    for name in public:
        assert not isinstance(getattr(envelope, name), np.ndarray)


def test_noise_aggregation_variance():
    parties = 4
    size = 50_000
    sigma_local = 1.5
    # direct envelope construction keeps this a pure noise-additivity check
    rng = np.random.default_rng(77)
    envelopes = [
        AggregationEnvelope(
            add_gaussian_noise(
                VoteHistograms(np.zeros(size), np.zeros(size)), sigma_local, rng
            )
        )
        for _ in range(parties)
    ]
    aggregated = secure_sum(envelopes)
    expected = sigma_local * np.sqrt(parties)
    assert abs(aggregated.nearest.std() - expected) / expected < 0.02
    assert abs(aggregated.furthest.std() - expected) / expected < 0.02


def test_partition_manifest_round_trip(tmp_path):
    import json

    partition = [[0, 2], [1, 3]]
    path = tmp_path / "partition.json"
    write_partition_manifest(partition, path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["parties"] == 2
    assert payload["assignment"]["0"] == [0, 2]

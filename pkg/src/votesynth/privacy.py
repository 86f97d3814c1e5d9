"""Gaussian-mechanism calibration for the vote-histogram releases.

One run performs exactly T-1 noised releases (the final iteration generates
but never votes, since nothing would consume that feedback). Each release
publishes the nearest/furthest histogram pair, whose joint L2 sensitivity
under one-sample change is 4: a single private sample contributes decaying
vote weights summing to 2 - 2^{-(Q-1)} < 2 per histogram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, PrivacyDisciplineError

SAMPLE_SENSITIVITY = 4.0
PER_HISTOGRAM_SENSITIVITY = 2.0

SAMPLE_LEVEL = "sample"
USER_LEVEL = "user"


@dataclass(frozen=True)
class PrivacyBudget:
    """(epsilon, delta) budget plus the run shape that noise is calibrated to."""

    epsilon: float
    delta: float
    iterations: int
    parties: int = 1
    level: str = SAMPLE_LEVEL
    max_party_size: int | None = None
    infinite_epsilon: bool = False

    def __post_init__(self):
        if self.level not in (SAMPLE_LEVEL, USER_LEVEL):
            raise ConfigError(f"unknown privacy level {self.level!r}")
        if not self.infinite_epsilon and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive (or set infinite_epsilon)")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError("delta must lie in (0, 1)")
        if self.iterations < 2:
            raise ConfigError("need at least 2 iterations: no feedback round exists to protect")
        if self.parties < 1:
            raise ConfigError("party count must be >= 1")
        if self.level == USER_LEVEL and (self.max_party_size is None or self.max_party_size < 1):
            raise ConfigError("user-level privacy requires max_party_size >= 1")


def vote_mass_per_sample(q: int) -> float:
    """Total decaying vote weight one private sample adds per histogram."""
    if q < 1:
        raise ConfigError("Q must be >= 1")
    return 2.0 - 2.0 ** (-(q - 1))


def sensitivity(level: str, max_party_size: int | None = None) -> float:
    """L2 sensitivity of one histogram-pair release.

    Sample level: 4. User level: one party owns up to max_party_size samples,
    so removing a party moves the pair by at most 4 * max_party_size.
    """
    if level == SAMPLE_LEVEL:
        return SAMPLE_SENSITIVITY
    if level == USER_LEVEL:
        if max_party_size is None or max_party_size < 1:
            raise ConfigError("user-level sensitivity requires max_party_size >= 1")
        return SAMPLE_SENSITIVITY * max_party_size
    raise ConfigError(f"unknown privacy level {level!r}")


def calibrate_sigma(budget: PrivacyBudget) -> float:
    """Per-party Gaussian noise scale for each of the T-1 releases.

    sigma = Delta * sqrt(2 ln(1.25/delta)) * sqrt(T-1) / (epsilon * sqrt(L)).
    Natural log, per the analytic Gaussian mechanism. Returns 0 in the
    no-noise (epsilon = infinity) mode, which keeps a single code path.
    """
    if budget.iterations < 2:
        raise ConfigError("need at least 2 iterations: no feedback round exists to protect")
    if budget.infinite_epsilon:
        return 0.0
    delta_sens = sensitivity(budget.level, budget.max_party_size)
    return (
        delta_sens
        * math.sqrt(2.0 * math.log(1.25 / budget.delta))
        * math.sqrt(budget.iterations - 1)
        / (budget.epsilon * math.sqrt(budget.parties))
    )


def aggregate_noise_scale(sigma_local: float, parties: int) -> float:
    """Scale of the sum of ``parties`` independent N(0, sigma_local^2) draws."""
    if sigma_local < 0:
        raise ConfigError("sigma must be non-negative")
    if parties < 1:
        raise ConfigError("party count must be >= 1")
    return sigma_local * math.sqrt(parties)


@dataclass(frozen=True)
class CompositionReport:
    """Arithmetic behind the calibration, for audit output."""

    epsilon: float
    delta: float
    feedback_rounds: int
    per_round_epsilon: float
    sensitivity: float
    sigma_per_party: float
    aggregate_sigma: float
    single_party_sigma: float
    consistent: bool

    def lines(self) -> list[str]:
        return [
            f"epsilon={self.epsilon} delta={self.delta}",
            f"feedback rounds (noised releases): {self.feedback_rounds}",
            f"per-round epsilon share: {self.per_round_epsilon}",
            f"release sensitivity: {self.sensitivity}",
            f"per-party sigma: {self.sigma_per_party}",
            f"aggregate sigma (sum over parties): {self.aggregate_sigma}",
            f"single-party calibration: {self.single_party_sigma}",
            f"consistent: {self.consistent}",
        ]


def verify_composition(budget: PrivacyBudget) -> CompositionReport:
    """Check that per-party noise composes to the single-party calibration.

    Splitting the budget across T-1 rounds gives each round epsilon/sqrt(T-1);
    summing L independent per-party Gaussians of scale sigma yields scale
    sigma*sqrt(L), which must equal the L=1 calibration.
    """
    sigma_local = calibrate_sigma(budget)
    aggregate = aggregate_noise_scale(sigma_local, budget.parties)
    single_party = calibrate_sigma(
        PrivacyBudget(
            epsilon=budget.epsilon,
            delta=budget.delta,
            iterations=budget.iterations,
            parties=1,
            level=budget.level,
            max_party_size=budget.max_party_size,
            infinite_epsilon=budget.infinite_epsilon,
        )
    )
    per_round = (
        math.inf
        if budget.infinite_epsilon
        else budget.epsilon / math.sqrt(budget.iterations - 1)
    )
    return CompositionReport(
        epsilon=math.inf if budget.infinite_epsilon else budget.epsilon,
        delta=budget.delta,
        feedback_rounds=budget.iterations - 1,
        per_round_epsilon=per_round,
        sensitivity=sensitivity(budget.level, budget.max_party_size),
        sigma_per_party=sigma_local,
        aggregate_sigma=aggregate,
        single_party_sigma=single_party,
        consistent=math.isclose(aggregate, single_party, rel_tol=1e-12, abs_tol=1e-15),
    )


class ReleaseAccountant:
    """Tracks noised histogram releases and enforces the T-1 discipline."""

    def __init__(self, budget: PrivacyBudget):
        self._budget = budget
        self._released: set[int] = set()

    @property
    def released(self) -> tuple[int, ...]:
        return tuple(sorted(self._released))

    def register_release(self, iteration: int) -> None:
        if iteration in self._released:
            raise PrivacyDisciplineError(f"iteration {iteration} was already noised once")
        if iteration >= self._budget.iterations - 1:
            raise PrivacyDisciplineError(
                f"iteration {iteration} is past the last feedback round "
                f"{self._budget.iterations - 2}; its release would be unconsumed"
            )
        if len(self._released) >= self._budget.iterations - 1:
            raise PrivacyDisciplineError("all budgeted releases are already spent")
        self._released.add(iteration)

    def assert_complete(self) -> None:
        expected = self._budget.iterations - 1
        if len(self._released) != expected:
            raise PrivacyDisciplineError(
                f"run performed {len(self._released)} releases, expected {expected}"
            )

"""Seeded stochastic stand-in for the real generator/evaluator models.

Every draw comes from an independent substream derived from
(rng_seed, query_id, iteration, dimension), so outputs never depend on
scheduling order or worker count. Scores follow a clamped random walk:
iteration 1 draws from a per-risk-category initial distribution, later
iterations add a sampled delta.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..errors import RangeError
from ..model import (
    AMA_SCORE_MAX,
    AMA_SCORE_MIN,
    SRA_LEVEL_MAX,
    SRA_LEVEL_MIN,
    AmaPrinciple,
    EthicsAssessment,
    FeedbackPlan,
    Query,
    ResponseDraft,
    RiskAssessment,
    RiskCategory,
)
from .base import Assessment, EvaluatorRole

_PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Distribution:
    """Discrete distribution over integers, stored sorted for stable draws."""

    items: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        items = tuple(sorted((int(v), float(p)) for v, p in self.items))
        object.__setattr__(self, "items", items)
        if not items:
            raise RangeError("distribution must have at least one outcome")
        values = [v for v, _ in items]
        if len(set(values)) != len(values):
            raise RangeError("distribution outcomes must be distinct")
        if any(p < 0 for _, p in items):
            raise RangeError("distribution probabilities must be nonnegative")
        total = sum(p for _, p in items)
        if abs(total - 1.0) > _PROB_TOLERANCE:
            raise RangeError(f"distribution probabilities sum to {total!r}, not 1")

    def sample(self, rng: random.Random) -> int:
        """Inverse-CDF draw using a single uniform variate."""
        u = rng.random()
        acc = 0.0
        for value, prob in self.items:
            acc += prob
            if u < acc:
                return value
        return self.items[-1][0]

    def to_record(self) -> dict[str, float]:
        return {str(v): p for v, p in self.items}

    @classmethod
    def from_record(cls, rec: Mapping[str, float] | Mapping[int, float]) -> "Distribution":
        return cls(tuple((int(k), float(v)) for k, v in rec.items()))


def point_mass(value: int) -> Distribution:
    return Distribution(((value, 1.0),))


def two_point_mean(mean: float, lo_bound: int, hi_bound: int) -> Distribution:
    """Smallest-support distribution with the given mean over integers."""
    if not lo_bound <= mean <= hi_bound:
        raise RangeError(f"mean {mean} outside [{lo_bound}, {hi_bound}]")
    lo = int(mean)
    if lo == mean:
        return point_mass(lo)
    hi = lo + 1
    p_hi = mean - lo
    return Distribution(((lo, 1.0 - p_hi), (hi, p_hi)))


@dataclass(frozen=True)
class CategoryProfile:
    """Score dynamics for one risk category."""

    initial_ama: Distribution
    initial_sra: Distribution
    ama_delta: Distribution
    sra_delta: Distribution

    def to_record(self) -> dict[str, Any]:
        return {
            "initial_ama": self.initial_ama.to_record(),
            "initial_sra": self.initial_sra.to_record(),
            "ama_delta": self.ama_delta.to_record(),
            "sra_delta": self.sra_delta.to_record(),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "CategoryProfile":
        return cls(
            initial_ama=Distribution.from_record(rec["initial_ama"]),
            initial_sra=Distribution.from_record(rec["initial_sra"]),
            ama_delta=Distribution.from_record(rec["ama_delta"]),
            sra_delta=Distribution.from_record(rec["sra_delta"]),
        )


@dataclass(frozen=True)
class SimulatorParams:
    """Per-category profiles plus the seed all substreams derive from."""

    rng_seed: int
    profiles: Mapping[RiskCategory, CategoryProfile] = field(default_factory=dict)
    fallback: CategoryProfile | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "profiles",
            {RiskCategory(k): v for k, v in dict(self.profiles).items()},
        )
        if not self.profiles and self.fallback is None:
            raise RangeError("simulator params need at least one profile")

    def profile_for(self, category: RiskCategory) -> CategoryProfile:
        profile = self.profiles.get(category, self.fallback)
        if profile is None:
            raise RangeError(f"no simulator profile for category {category.value!r}")
        return profile

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "rng_seed": self.rng_seed,
            "profiles": {c.value: p.to_record() for c, p in self.profiles.items()},
        }
        if self.fallback is not None:
            rec["fallback"] = self.fallback.to_record()
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "SimulatorParams":
        return cls(
            rng_seed=int(rec["rng_seed"]),
            profiles={
                RiskCategory(c): CategoryProfile.from_record(p)
                for c, p in rec.get("profiles", {}).items()
            },
            fallback=(
                CategoryProfile.from_record(rec["fallback"]) if rec.get("fallback") else None
            ),
        )


def substream(seed: int, query_id: str, iteration: int, dimension: str) -> random.Random:
    """Independent deterministic RNG for one (query, iteration, dimension) draw."""
    tag = f"{seed}:{query_id}:{iteration}:{dimension}".encode("utf-8")
    derived = int.from_bytes(hashlib.sha256(tag).digest()[:8], "big")
    return random.Random(derived)


def _clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, value))


def _score_at(
    params: SimulatorParams, query: Query, iteration: int, dimension: str
) -> int:
    """Walk the clamped chain up to ``iteration``; O(iteration) and
    independent of evaluation order because each step has its own substream."""
    profile = params.profile_for(query.risk_category)
    if dimension == "ama":
        initial, delta, lo, hi = profile.initial_ama, profile.ama_delta, AMA_SCORE_MIN, AMA_SCORE_MAX
    else:
        initial, delta, lo, hi = profile.initial_sra, profile.sra_delta, SRA_LEVEL_MIN, SRA_LEVEL_MAX
    score = initial.sample(substream(params.rng_seed, query.id, 1, dimension))
    score = _clamp(score, lo, hi)
    for k in range(2, iteration + 1):
        step = delta.sample(substream(params.rng_seed, query.id, k, dimension))
        score = _clamp(score + step, lo, hi)
    return score


def simulate_assess(
    params: SimulatorParams, query: Query, iteration: int, role: EvaluatorRole
) -> Assessment:
    """Deterministic simulated verdict for (seed, query, iteration, role)."""
    if role is EvaluatorRole.ETHICS:
        ama = _score_at(params, query, iteration, "ama")
        reasons: tuple[str, ...] = ()
        principles: frozenset[AmaPrinciple] = frozenset()
        if ama >= 3:
            reasons = ("response conflicts with professional ethics guidance",)
            principles = frozenset((query.principle,))
        return EthicsAssessment(ama_score=ama, violated_principles=principles, reasons=reasons)
    sra = _score_at(params, query, iteration, "sra")
    reasons = ("response contains actionable clinical guidance",) if sra >= 3 else ()
    return RiskAssessment(sra_level=sra, reasons=reasons)


class SimulatedEvaluator:
    """Evaluator backed by the seeded score walk."""

    def __init__(self, params: SimulatorParams, role: EvaluatorRole):
        self.params = params
        self.role = EvaluatorRole(role)

    def assess(self, response: ResponseDraft, query: Query) -> Assessment:
        return simulate_assess(self.params, query, response.iteration, self.role)


class SimulatedGenerator:
    """Deterministic text producer; the simulated evaluators ignore the text."""

    def __init__(self, label: str = "simulated"):
        self.label = label

    def generate(self, query: Query) -> ResponseDraft:
        return ResponseDraft(
            query_id=query.id, iteration=1, text=f"[{self.label}] draft 1 for {query.id}"
        )

    def refine(self, previous: ResponseDraft, plan: FeedbackPlan, query: Query) -> ResponseDraft:
        iteration = previous.iteration + 1
        return ResponseDraft(
            query_id=query.id,
            iteration=iteration,
            text=f"[{self.label}] draft {iteration} for {query.id}",
        )


def _profile(
    initial_ama_mean: float,
    initial_sra: Iterable[tuple[int, float]],
    ama_delta: Iterable[tuple[int, float]],
    sra_delta: Iterable[tuple[int, float]],
) -> CategoryProfile:
    return CategoryProfile(
        initial_ama=two_point_mean(initial_ama_mean, AMA_SCORE_MIN, AMA_SCORE_MAX),
        initial_sra=Distribution(tuple(initial_sra)),
        ama_delta=Distribution(tuple(ama_delta)),
        sra_delta=Distribution(tuple(sra_delta)),
    )


# Two bundled calibration profiles. "profile_a" models a fast-converging
# generator, "profile_b" a slower one with slightly worse starting risk.
_PROFILE_A_SRA = ((1, 0.12), (2, 0.18), (3, 0.35), (4, 0.28), (5, 0.07))
_PROFILE_B_SRA = ((1, 0.10), (2, 0.20), (3, 0.38), (4, 0.25), (5, 0.07))

_PROFILE_A_AMA_DELTA = ((-3, 0.25), (-2, 0.45), (-1, 0.20), (0, 0.08), (1, 0.02))
_PROFILE_A_SRA_DELTA = ((-2, 0.40), (-1, 0.40), (0, 0.15), (1, 0.05))
_PROFILE_B_AMA_DELTA = ((-3, 0.15), (-2, 0.40), (-1, 0.30), (0, 0.12), (1, 0.03))
_PROFILE_B_SRA_DELTA = ((-2, 0.30), (-1, 0.45), (0, 0.20), (1, 0.05))

_INITIAL_AMA_MEANS = {
    "profile_a": {
        RiskCategory.EMERGENCY: 4.8,
        RiskCategory.DIAGNOSTIC: 3.2,
        RiskCategory.THERAPEUTIC: 2.9,
        RiskCategory.PREVENTIVE: 1.8,
        RiskCategory.UNLABELED: 3.2,
    },
    "profile_b": {
        RiskCategory.EMERGENCY: 5.1,
        RiskCategory.DIAGNOSTIC: 3.4,
        RiskCategory.THERAPEUTIC: 3.1,
        RiskCategory.PREVENTIVE: 1.6,
        RiskCategory.UNLABELED: 3.3,
    },
}

SIMULATOR_PROFILES = ("profile_a", "profile_b")


def default_simulator_params(profile: str = "profile_a", rng_seed: int = 0) -> SimulatorParams:
    """Bundled parameter sets approximately calibrated to plausible score
    dynamics; profile_a converges faster than profile_b."""
    if profile not in SIMULATOR_PROFILES:
        raise RangeError(f"unknown simulator profile {profile!r}; choose from {SIMULATOR_PROFILES}")
    if profile == "profile_a":
        sra_initial, ama_delta, sra_delta = (
            _PROFILE_A_SRA,
            _PROFILE_A_AMA_DELTA,
            _PROFILE_A_SRA_DELTA,
        )
    else:
        sra_initial, ama_delta, sra_delta = (
            _PROFILE_B_SRA,
            _PROFILE_B_AMA_DELTA,
            _PROFILE_B_SRA_DELTA,
        )
    means = _INITIAL_AMA_MEANS[profile]
    profiles = {
        category: _profile(means[category], sra_initial, ama_delta, sra_delta)
        for category in RiskCategory
    }
    fallback = profiles[RiskCategory.UNLABELED]
    return SimulatorParams(rng_seed=rng_seed, profiles=profiles, fallback=fallback)

"""Simulator backend: determinism, clamping, forced distributions."""

from __future__ import annotations

import random

import pytest

from saferefine.agents import EvaluatorRole, SimulatedEvaluator, SimulatedGenerator, simulate_assess
from saferefine.agents.simulator import (
    CategoryProfile,
    Distribution,
    SimulatorParams,
    default_simulator_params,
    point_mass,
    two_point_mean,
)
from saferefine.engine import LoopConfig, run_dataset
from saferefine.errors import RangeError
from saferefine.model import ResponseDraft, RiskCategory, RunStatus

from conftest import make_query


def _uniform_profile(ama_values, sra_values, ama_deltas, sra_deltas) -> CategoryProfile:
    def dist(values):
        p = 1.0 / len(values)
        return Distribution(tuple((v, p) for v in values))

    return CategoryProfile(
        initial_ama=dist(ama_values),
        initial_sra=dist(sra_values),
        ama_delta=dist(ama_deltas),
        sra_delta=dist(sra_deltas),
    )


def _params(profile: CategoryProfile, seed: int = 7) -> SimulatorParams:
    return SimulatorParams(rng_seed=seed, profiles={}, fallback=profile)


def _degenerate(ama: int, sra: int, ama_delta: int = 0, sra_delta: int = 0) -> SimulatorParams:
    return _params(
        CategoryProfile(
            initial_ama=point_mass(ama),
            initial_sra=point_mass(sra),
            ama_delta=point_mass(ama_delta),
            sra_delta=point_mass(sra_delta),
        )
    )


def _loop(params: SimulatorParams) -> LoopConfig:
    return LoopConfig(
        generator=SimulatedGenerator("sim"),
        ethics_evaluator=SimulatedEvaluator(params, EvaluatorRole.ETHICS),
        risk_evaluator=SimulatedEvaluator(params, EvaluatorRole.RISK),
    )


def test_distribution_must_sum_to_one():
    with pytest.raises(RangeError):
        Distribution(((0, 0.5), (1, 0.6)))
    with pytest.raises(RangeError):
        Distribution(((0, -0.1), (1, 1.1)))
    Distribution(((0, 0.5), (1, 0.5)))


def test_two_point_mean_hits_target():
    dist = two_point_mean(4.8, 0, 9)
    mean = sum(v * p for v, p in dist.items)
    assert mean == pytest.approx(4.8, abs=1e-12)
    assert two_point_mean(3.0, 0, 9).items == ((3, 1.0),)


def test_degenerate_best_scores_converge_immediately():
    queries = [make_query(f"q{i}") for i in range(20)]
    outcomes = run_dataset(queries, _loop(_degenerate(0, 1)))
    assert all(o.status is RunStatus.CONVERGED and o.iterations_used == 1 for o in outcomes)


def test_degenerate_worst_scores_never_converge():
    queries = [make_query(f"q{i}") for i in range(20)]
    outcomes = run_dataset(queries, _loop(_degenerate(9, 5)))
    assert all(o.status is RunStatus.NON_CONVERGENT and o.iterations_used == 5 for o in outcomes)


def test_same_seed_reproduces_exact_sequences():
    params = default_simulator_params("profile_a", rng_seed=123)
    query = make_query("q7", risk=RiskCategory.EMERGENCY)
    first = [
        (
            simulate_assess(params, query, i, EvaluatorRole.ETHICS).ama_score,
            simulate_assess(params, query, i, EvaluatorRole.RISK).sra_level,
        )
        for i in range(1, 6)
    ]
    second = [
        (
            simulate_assess(params, query, i, EvaluatorRole.ETHICS).ama_score,
            simulate_assess(params, query, i, EvaluatorRole.RISK).sra_level,
        )
        for i in range(1, 6)
    ]
    assert first == second


def test_evaluation_order_cannot_change_outputs():
    """Scores depend only on (seed, query_id, iteration), so querying
    iterations out of order or interleaved across queries changes nothing."""
    params = default_simulator_params("profile_b", rng_seed=99)
    queries = [make_query(f"q{i}", risk=RiskCategory.DIAGNOSTIC) for i in range(5)]
    in_order = {
        (q.id, i): simulate_assess(params, q, i, EvaluatorRole.ETHICS).ama_score
        for q in queries
        for i in range(1, 6)
    }
    shuffled_keys = list(in_order)
    random.Random(0).shuffle(shuffled_keys)
    by_query = {q.id: q for q in queries}
    for qid, i in shuffled_keys:
        assert (
            simulate_assess(params, by_query[qid], i, EvaluatorRole.ETHICS).ama_score
            == in_order[(qid, i)]
        )


def test_extreme_deltas_stay_clamped():
    params = _params(
        CategoryProfile(
            initial_ama=point_mass(9),
            initial_sra=point_mass(5),
            ama_delta=Distribution(((-9, 0.5), (9, 0.5))),
            sra_delta=Distribution(((-6, 0.5), (6, 0.5))),
        )
    )
    query = make_query("q1")
    for i in range(1, 6):
        ethics = simulate_assess(params, query, i, EvaluatorRole.ETHICS)
        risk = simulate_assess(params, query, i, EvaluatorRole.RISK)
        assert 0 <= ethics.ama_score <= 9
        assert 1 <= risk.sra_level <= 5


def test_seeded_dataset_run_is_reproducible():
    params = default_simulator_params("profile_a", rng_seed=42)
    queries = [make_query(f"q{i}", risk=RiskCategory.THERAPEUTIC) for i in range(50)]
    a = run_dataset(queries, _loop(params))
    b = run_dataset(queries, _loop(params))
    assert [(o.query.id, o.to_record()) for o in a] == [(o.query.id, o.to_record()) for o in b]


def test_worker_count_cannot_change_results():
    params = default_simulator_params("profile_b", rng_seed=5)
    queries = [make_query(f"q{i}", risk=RiskCategory.EMERGENCY) for i in range(40)]
    serial = run_dataset(queries, _loop(params), worker_limit=1)
    parallel = run_dataset(queries, _loop(params), worker_limit=8)
    assert [o.to_record() for o in serial] == [o.to_record() for o in parallel]


def test_default_profiles_cover_all_categories():
    for profile in ("profile_a", "profile_b"):
        params = default_simulator_params(profile, rng_seed=1)
        for category in RiskCategory:
            assert params.profile_for(category) is not None
    with pytest.raises(RangeError):
        default_simulator_params("nope")


def test_simulator_params_round_trip():
    params = default_simulator_params("profile_a", rng_seed=31)
    restored = SimulatorParams.from_record(params.to_record())
    query = make_query("qx", risk=RiskCategory.PREVENTIVE)
    for i in range(1, 6):
        assert (
            simulate_assess(params, query, i, EvaluatorRole.ETHICS).ama_score
            == simulate_assess(restored, query, i, EvaluatorRole.ETHICS).ama_score
        )


def test_evaluator_objects_wrap_simulate_assess():
    params = _degenerate(4, 3)
    ethics = SimulatedEvaluator(params, EvaluatorRole.ETHICS)
    risk = SimulatedEvaluator(params, EvaluatorRole.RISK)
    query = make_query("q1")
    draft = ResponseDraft(query_id="q1", iteration=1, text="t")
    assert ethics.assess(draft, query).ama_score == 4
    assert risk.assess(draft, query).sra_level == 3
    # failing scores carry deterministic reasons and the query's principle
    assert ethics.assess(draft, query).violated_principles == frozenset({query.principle})
    assert risk.assess(draft, query).reasons

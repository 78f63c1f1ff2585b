import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgbs import (
    ClickPattern,
    Execution,
    ImpossibleOutcomeError,
    MeasurementPlan,
    PostselectedStream,
    enumerate_distribution,
    forced_chain,
    inclusion_exclusion_prob,
    init_mixture,
    measure_mode,
    no_click_probability,
    pattern_probability,
    sample,
    squeezed_vacuum,
    StateMixture,
    vacuum_state,
)
from tgbs.streams import DRAW, stream

from helpers import LOSS_LEVELS_DB, prob_tol, random_instance


def test_click_pattern_basics():
    p = ClickPattern((1, 0, 1))
    assert p.n_clicks == 2
    assert p.bitstring() == "101"
    assert p.clicked_modes() == (1, 3)
    with pytest.raises(ValueError):
        ClickPattern((1, 2, 0))


def test_measurement_plan_order():
    plan = MeasurementPlan()
    assert plan.resolve_order(4) == (4, 3, 2, 1)
    plan = MeasurementPlan(order=(2, 1, 3))
    assert plan.resolve_order(3) == (2, 1, 3)
    with pytest.raises(ValueError):
        MeasurementPlan(order=(1, 1, 2)).resolve_order(3)
    with pytest.raises(ValueError):
        MeasurementPlan(order=(1, 2)).resolve_order(3)


def test_init_mixture_labels():
    mix = init_mixture(vacuum_state(3))
    assert mix.labels == (1, 2, 3)
    assert mix.n_branches == 1
    assert mix.remaining_modes == 3
    assert mix.clicks_so_far == 0
    assert mix.coefficient_sum() == 1.0


def test_measure_mode_branch_algebra():
    mix = init_mixture(squeezed_vacuum(np.array([0.5, 0.7])))
    bit, after, prob = measure_mode(mix, 1, outcome=0)
    assert bit == 0
    assert after.n_branches == 1
    assert after.labels == (2,)
    assert prob == pytest.approx(1.0 / math.cosh(0.5), rel=1e-12)
    bit, after, prob = measure_mode(mix, 1, outcome=1)
    assert bit == 1
    assert after.n_branches == 2
    assert after.clicks_so_far == 1
    assert after.coefficient_sum() == pytest.approx(1.0, abs=1e-12)
    assert prob == pytest.approx(1.0 - 1.0 / math.cosh(0.5), rel=1e-12)


def test_measure_middle_mode_keeps_remaining_labels():
    rng = stream(3, 0xA1)
    mix = init_mixture(random_instance(rng, 4))
    _, after, _ = measure_mode(mix, 2, outcome=1)
    assert after.labels == (1, 3, 4)
    _, final, _ = measure_mode(after, 3, outcome=0)
    assert final.labels == (1, 4)
    assert final.coefficient_sum() == pytest.approx(1.0, abs=1e-10)


def test_outcome_probabilities_sum_to_one():
    rng = stream(5, 0xA2)
    mix = init_mixture(random_instance(rng, 3, displaced=True))
    p0 = no_click_probability(mix, 3)
    _, _, prob0 = measure_mode(mix, 3, outcome=0)
    _, _, prob1 = measure_mode(mix, 3, outcome=1)
    assert prob0 == pytest.approx(p0, rel=1e-14)
    assert prob0 + prob1 == pytest.approx(1.0, abs=1e-14)


def test_chain_matches_inclusion_exclusion():
    # the central correctness property; the acceptance suite runs it at
    # 50 instances, this is the fast cross-section
    rng = stream(17, 0xA3)
    for trial in range(8):
        n = int(rng.integers(2, 6))
        state = random_instance(
            rng,
            n,
            loss_db=LOSS_LEVELS_DB[trial % 4],
            displaced=bool(trial % 3 == 0),
        )
        for bits in itertools.product((0, 1), repeat=n):
            pat = ClickPattern(bits)
            a = pattern_probability(state, pat)
            b = inclusion_exclusion_prob(state, pat)
            assert abs(a - b) <= prob_tol(a, b)


def test_distribution_sums_to_one():
    rng = stream(23, 0xA4)
    state = random_instance(rng, 5, loss_db=3.0)
    table = enumerate_distribution(state)
    assert table.total() == pytest.approx(1.0, abs=1e-9)
    assert np.all(table.probs >= -1e-12)


def test_measurement_order_invariance():
    rng = stream(29, 0xA5)
    state = random_instance(rng, 4, displaced=True)
    pat = ClickPattern((1, 0, 1, 0))
    ref = pattern_probability(state, pat)
    for order in ((1, 2, 3, 4), (3, 1, 4, 2), (2, 4, 1, 3)):
        alt = pattern_probability(state, pat, order=order)
        assert alt == pytest.approx(ref, rel=1e-10)


def test_forced_chain_reports_feasibility():
    res = forced_chain(vacuum_state(3), ClickPattern((0, 0, 0)))
    assert res.feasible and res.probability == 1.0
    assert res.steps_completed == 3 and res.clicks == 0
    res = forced_chain(vacuum_state(3), ClickPattern((0, 1, 0)))
    assert not res.feasible
    assert res.probability == 0.0


def test_sample_raises_on_impossible_forced_pattern():
    plan = MeasurementPlan(forced=ClickPattern((1, 0)))
    with pytest.raises(ImpossibleOutcomeError):
        sample(vacuum_state(2), plan)


def test_forced_pattern_reproduces_chain_probability():
    rng = stream(31, 0xA6)
    state = random_instance(rng, 4)
    pat = ClickPattern((0, 1, 1, 0))
    plan = MeasurementPlan(forced=pat)
    got_pat, joint = sample(state, plan)
    assert got_pat.bits == pat.bits
    assert joint == pytest.approx(pattern_probability(state, pat), rel=1e-12)


def test_sample_is_seed_deterministic():
    rng = stream(37, 0xA7)
    state = random_instance(rng, 4)
    plan = MeasurementPlan(rng_seed=99)
    first = [sample(state, plan, draw_index=i)[0].bits for i in range(20)]
    second = [sample(state, plan, draw_index=i)[0].bits for i in range(20)]
    assert first == second
    shifted = [sample(state, plan, draw_index=i + 1)[0].bits for i in range(20)]
    assert first != shifted


def test_sample_check_invariants_path():
    rng = stream(41, 0xA8)
    state = random_instance(rng, 6, loss_db=1.2)
    plan = MeasurementPlan(rng_seed=5)
    for i in range(10):
        pat, joint = sample(state, plan, draw_index=i, check_invariants=True)
        assert 0.0 <= joint <= 1.0
        assert len(pat.bits) == 6


def test_branch_count_observer():
    rows = []

    def observer(step, mode, outcome, clicks, branches, remaining):
        rows.append((step, clicks, branches, remaining))

    rng = stream(43, 0xA9)
    state = random_instance(rng, 5)
    pat, _ = sample(state, MeasurementPlan(rng_seed=1), observer=observer)
    assert len(rows) == 5
    for step, clicks, branches, remaining in rows:
        assert branches == 2 ** clicks
        assert remaining == 5 - step
    assert rows[-1][1] == pat.n_clicks


def test_single_mode_click_frequency():
    # P(click) = 1 - sech(r); empirical check on the real sampling path
    r = 0.9210340371976183
    state = squeezed_vacuum(np.array([r]))
    p_click = 1.0 - 1.0 / math.cosh(r)
    plan = MeasurementPlan(rng_seed=123)
    n_draws = 20_000
    clicks = sum(
        sample(state, plan, draw_index=i, validate=False)[0].bits[0]
        for i in range(n_draws)
    )
    assert clicks / n_draws == pytest.approx(p_click, abs=0.015)


def test_rng_stream_is_the_documented_one():
    # the draw consumes uniforms from stream(seed, DRAW, index), one per step
    rng = stream(47, 0xAA)
    state = random_instance(rng, 3)
    plan = MeasurementPlan(rng_seed=7)
    pat, _ = sample(state, plan, draw_index=4)
    u = stream(7, DRAW, 4).random(3)
    replayed = []
    mix = init_mixture(state)
    for step, mode in enumerate((3, 2, 1)):
        p = no_click_probability(mix, mode)
        bit = 1 if u[step] >= p else 0
        replayed.append(bit)
        _, mix, _ = measure_mode(mix, mode, outcome=bit)
    assert tuple(replayed) == tuple(pat.bits[m - 1] for m in (3, 2, 1))


def test_postselected_stream_accepts_target_only():
    rng = stream(53, 0xAB)
    state = random_instance(rng, 4)
    streamed = PostselectedStream(state, MeasurementPlan(rng_seed=2), target_clicks=2, max_draws=5000)
    got = [next(streamed) for _ in range(10)]
    assert all(p.n_clicks == 2 for p in got)
    assert streamed.accepted_count == 10
    assert streamed.draws_attempted >= 10
    assert 0.0 < streamed.acceptance_fraction <= 1.0


def test_postselected_stream_vacuum_zero_clicks():
    streamed = PostselectedStream(vacuum_state(3), target_clicks=0, max_draws=50)
    pats = [next(streamed) for _ in range(20)]
    assert all(p.n_clicks == 0 for p in pats)
    assert streamed.acceptance_fraction == 1.0


def test_postselected_stream_exhausts_gracefully():
    # vacuum never clicks, so a click target exhausts the budget
    streamed = PostselectedStream(vacuum_state(2), target_clicks=2, max_draws=25)
    with pytest.raises(StopIteration):
        next(streamed)
    assert streamed.exhausted
    assert streamed.draws_attempted == 25
    assert streamed.accepted_count == 0


def test_postselection_rejects_bad_target():
    with pytest.raises(ValueError):
        PostselectedStream(vacuum_state(2), target_clicks=3)
    with pytest.raises(ValueError):
        PostselectedStream(vacuum_state(2), target_clicks=-1)


@given(st.integers(0, 2 ** 31 - 1))
@settings(deadline=None, max_examples=25)
def test_joint_probability_in_range(seed):
    rng = stream(seed, 0xAC)
    state = random_instance(rng, 3, loss_db=float(rng.choice([0.0, 3.0])))
    pat, joint = sample(state, MeasurementPlan(rng_seed=seed))
    assert 0.0 <= joint <= 1.0
    assert pattern_probability(state, pat) == pytest.approx(joint, rel=1e-10)


def test_execution_does_not_change_results():
    rng = stream(59, 0xAD)
    state = random_instance(rng, 4, loss_db=1.2)
    pat = ClickPattern((1, 1, 0, 1))
    ref = pattern_probability(state, pat)
    for ex in (
        Execution(workers=4, chunk_size=4096),
        Execution(workers=2, chunk_size=3),
        Execution(precision="dd"),
    ):
        got = pattern_probability(state, pat, execution=ex)
        assert got == pytest.approx(ref, rel=1e-12)
    # same worker variation, identical chunking: bit identical
    a = pattern_probability(state, pat, execution=Execution(workers=1, chunk_size=2))
    b = pattern_probability(state, pat, execution=Execution(workers=4, chunk_size=2))
    assert a == b


def test_no_click_probability_is_linear_in_coefficients():
    # synthetic signed mixture: thermal covariance (2n+1)I has no-click
    # probability 1/(1+n), so 3I gives 0.5 and 17/3 I gives 0.3; the
    # aggregate must be the signed combination 2*0.5 - 1*0.3 = 0.7
    mixture = StateMixture(
        coeffs=np.array([2.0, -1.0]),
        covs=np.stack([3.0 * np.eye(2), (17.0 / 3.0) * np.eye(2)]),
        means=np.zeros((2, 2)),
        labels=(1,),
        clicks_so_far=1,
    )
    assert no_click_probability(mixture, 1) == pytest.approx(0.7, rel=1e-12)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import random_spd, trilaterate
from swarm_refine.core import Cov3, RefinedState, StateSummary, cov_trace, make_cov_diag
from swarm_refine.link import LinkObservables, LinkParams, NeighborMessage
from swarm_refine.recovery import (
    CONFIDENT,
    LOSS,
    LOW_CONFIDENCE,
    NoPriorError,
    PipelineParams,
    RecoveryParams,
    UavPipelineState,
    prepare_prior,
    prior_case,
    refine_epoch,
)
from swarm_refine.trust import RangeObservation, TrustLedger

seeds = st.integers(min_value=0, max_value=2**32 - 1)
GOOD = LinkObservables(0.9, 0.9)


def neighbor(sender, pos, epoch=0, link=GOOD):
    return NeighborMessage(sender, StateSummary(sender, epoch, pos, make_cov_diag(1, 1, 1)), epoch, link)


def honest_scene(rng, n=4, epoch=0):
    truth = rng.uniform(15, 35, size=3)
    anchors = rng.uniform(0, 50, size=(n, 3))
    msgs = [neighbor(j + 1, a, epoch=epoch) for j, a in enumerate(anchors)]
    ranges = {j + 1: RangeObservation(float(np.linalg.norm(a - truth)), 0.5) for j, a in enumerate(anchors)}
    return truth, anchors, msgs, ranges


def test_prepare_prior_examples():
    p = np.array([1.0, 2.0, 3.0])
    params = RecoveryParams(sigma_max=100.0, gamma_boot=10.0, gamma_loss=25.0)
    cov = make_cov_diag(1, 1, 1)
    pos, c = prepare_prior(StateSummary(0, 0, p, cov), UavPipelineState(), params)
    assert np.array_equal(pos, p) and c == cov

    pos, c = prepare_prior(StateSummary(0, 0, p, make_cov_diag(50, 50, 50)), UavPipelineState(), params)
    assert np.array_equal(pos, p) and c == make_cov_diag(500, 500, 500)

    last = RefinedState(np.array([4.0, 5.0, 6.0]), make_cov_diag(1, 1, 1), epoch=3)
    pos, c = prepare_prior(StateSummary(0, 4), UavPipelineState(last_refined=last), params)
    assert np.array_equal(pos, last.position) and c == make_cov_diag(25, 25, 25)


def test_no_history_signals_no_prior():
    with pytest.raises(NoPriorError):
        prepare_prior(StateSummary(0, 0), UavPipelineState(), RecoveryParams())


def test_params_validation():
    with pytest.raises(ValueError):
        RecoveryParams(sigma_max=0.0)
    with pytest.raises(ValueError):
        RecoveryParams(gamma_boot=0.5)
    with pytest.raises(ValueError):
        RecoveryParams(gamma_loss=0.9)


@given(seeds, st.booleans(), st.floats(1.0, 200.0))
def test_case_exclusivity(seed, missing, sigma_max):
    rng = np.random.default_rng(seed)
    params = RecoveryParams(sigma_max=sigma_max)
    local = StateSummary(0, 1) if missing else StateSummary(0, 1, rng.normal(size=3), Cov3(random_spd(rng, 5.0)))
    case = prior_case(local, params)
    conditions = {
        LOSS: local.position is None,
        LOW_CONFIDENCE: local.position is not None and cov_trace(local.covariance) > sigma_max,
        CONFIDENT: local.position is not None and cov_trace(local.covariance) <= sigma_max,
    }
    assert sum(conditions.values()) == 1
    assert conditions[case]


def test_healthy_fix_without_neighbors_passes_through():
    local = StateSummary(0, 5, [10.0, 20.0, 30.0], make_cov_diag(2, 2, 8))
    refined, state = refine_epoch(local, [], {}, UavPipelineState(), PipelineParams())
    assert np.array_equal(refined.position, local.position)
    assert state.last_refined is refined
    assert not refined.low_confidence


def test_loss_with_four_honest_neighbors_matches_oracle():
    rng = np.random.default_rng(11)
    truth = rng.uniform(15, 35, size=3)
    anchors = np.array([[5.0, 5.0, 5.0], [45.0, 8.0, 12.0], [10.0, 44.0, 20.0], [30.0, 30.0, 48.0]])
    msgs = [neighbor(j + 1, a, epoch=1) for j, a in enumerate(anchors)]
    ranges = {j + 1: RangeObservation(float(np.linalg.norm(a - truth)), 0.5) for j, a in enumerate(anchors)}
    last = RefinedState(truth + [1.5, -1.0, 0.5], make_cov_diag(4, 4, 4), epoch=0)
    params = PipelineParams(recovery=RecoveryParams(gamma_loss=100.0), link=LinkParams(budget=5))
    refined, _ = refine_epoch(StateSummary(0, 1), msgs, ranges, UavPipelineState(last_refined=last), params)
    oracle = trilaterate(anchors, np.array([ranges[j + 1].d_hat for j in range(4)]))
    assert np.linalg.norm(refined.position - oracle) < 1e-2


def test_flagged_neighbor_exclusion_is_bitwise():
    rng = np.random.default_rng(12)
    truth, anchors, msgs, ranges = honest_scene(rng)
    local = StateSummary(0, 0, truth + rng.normal(0, 1, size=3), make_cov_diag(1, 1, 4))
    bad_pos = np.array([0.0, 0.0, 0.0])
    spoof = neighbor(9, bad_pos + 25.0)
    ranges_bad = dict(ranges)
    ranges_bad[9] = RangeObservation(float(np.linalg.norm(bad_pos - truth)), 0.5)
    ledger = TrustLedger(smoothed={9: 0.01}, flagged=frozenset({9}))
    state = UavPipelineState(trust_ledger=ledger)
    params = PipelineParams(link=LinkParams(budget=10))

    with_bad, st_bad = refine_epoch(local, msgs + [spoof], ranges_bad, state, params)
    assert 9 in st_bad.trust_ledger.flagged
    without, _ = refine_epoch(local, msgs, ranges, state, params)
    assert np.array_equal(with_bad.position, without.position)
    assert with_bad.covariance == without.covariance


def test_message_filtering():
    rng = np.random.default_rng(13)
    truth, anchors, msgs, ranges = honest_scene(rng)
    local = StateSummary(0, 5, truth, make_cov_diag(1, 1, 1))
    params = PipelineParams()
    ref, _ = refine_epoch(local, [], {}, UavPipelineState(), params)
    # stale, range-less, position-less and self messages are all ignored
    junk = [
        neighbor(1, anchors[0], epoch=2),
        neighbor(7, anchors[1], epoch=5),
        NeighborMessage(3, StateSummary(3, 5), 5, GOOD),
        neighbor(0, anchors[2], epoch=5),
    ]
    rngs = {1: ranges[1], 3: ranges[3], 0: RangeObservation(1.0, 1.0)}
    out, _ = refine_epoch(local, junk, rngs, UavPipelineState(), params)
    assert np.array_equal(out.position, ref.position)


def test_no_prior_uses_broad_prior_and_marks_low_confidence():
    params = PipelineParams(recovery=RecoveryParams(broad_center=(25.0, 25.0, 25.0), broad_var=625.0))
    refined, state = refine_epoch(StateSummary(0, 0), [], {}, UavPipelineState(), params)
    assert refined.low_confidence
    assert np.array_equal(refined.position, [25.0, 25.0, 25.0])
    eps = params.solver.damping
    np.testing.assert_allclose(refined.covariance.matrix, np.eye(3) / (1 / 625.0 + eps), rtol=1e-12)
    assert state.last_refined is refined


def test_no_prior_with_neighbors_still_refines():
    rng = np.random.default_rng(14)
    truth, anchors, msgs, ranges = honest_scene(rng, n=5)
    params = PipelineParams(recovery=RecoveryParams(broad_center=tuple(truth + 2.0), broad_var=625.0))
    refined, state = refine_epoch(StateSummary(0, 0), msgs, ranges, UavPipelineState(), params)
    assert refined.low_confidence
    assert np.linalg.norm(refined.position - truth) < 0.5
    # no reference position: trust untouched
    assert state.trust_ledger == TrustLedger()


def test_outage_keeps_position_and_compounds_covariance():
    params = PipelineParams(recovery=RecoveryParams(gamma_loss=4.0))
    local = StateSummary(0, 0, [10.0, 10.0, 10.0], make_cov_diag(1, 1, 1))
    refined, state = refine_epoch(local, [], {}, UavPipelineState(), params)
    pos0, var = refined.position, refined.covariance.matrix[0, 0]
    eps = params.solver.damping
    for k in range(1, 6):
        refined, state = refine_epoch(StateSummary(0, k), [], {}, state, params)
        # inflate by gamma_loss, then the damped inverse
        var = 1.0 / (1.0 / (4.0 * var) + eps)
        assert np.array_equal(refined.position, pos0)
        assert cov_trace(refined.covariance) == pytest.approx(3 * var, rel=1e-12)
        assert cov_trace(refined.covariance) == pytest.approx(3 * 4.0**k, rel=1e-2)
        assert not refined.low_confidence


@given(seeds, st.integers(0, 5))
def test_deleting_zero_weight_neighbors_is_invariant(seed, n_bad):
    rng = np.random.default_rng(seed)
    truth, anchors, msgs, ranges = honest_scene(rng, n=int(rng.integers(0, 5)), epoch=2)
    local = StateSummary(0, 2, truth + rng.normal(0, 1, size=3), make_cov_diag(1, 1, 2))
    flagged = set()
    smoothed = {}
    bad_msgs, bad_ranges = [], dict(ranges)
    for k in range(n_bad):
        sid = 100 + k
        true_pos = rng.uniform(0, 50, size=3)
        bad_msgs.append(neighbor(sid, true_pos + rng.normal(0, 30, size=3), epoch=2))
        bad_ranges[sid] = RangeObservation(float(np.linalg.norm(true_pos - truth)), 0.5)
        smoothed[sid] = 0.0
        flagged.add(sid)
    state = UavPipelineState(trust_ledger=TrustLedger(smoothed=smoothed, flagged=frozenset(flagged)))
    params = PipelineParams(link=LinkParams(budget=20))
    order = list(msgs + bad_msgs)
    rng.shuffle(order)
    full, st_full = refine_epoch(local, order, bad_ranges, state, params)
    kept = [m for m in order if m.sender not in st_full.trust_ledger.flagged]
    lean, _ = refine_epoch(local, kept, bad_ranges, state, params)
    assert np.array_equal(full.position, lean.position)
    assert full.covariance == lean.covariance

import dataclasses
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarm_refine.sim import (
    ConfigError,
    SwarmConfig,
    init_world,
    link_observables_from_distance,
    measure_range,
    run_epoch,
    run_simulation,
    sense_local,
    simulate,
    spoof_report,
    step_motion,
)
from swarm_refine.sim.config import (
    config_keys,
    dump_config,
    flat_items,
    load_config,
    parse_config_text,
    with_overrides,
)
from swarm_refine.sim.metrics import metrics_to_jsonl
from swarm_refine.sim.world import make_rng, reflect_into

DATA = Path(__file__).parent / "data"
GOLDEN_SEED = 7
BOX = (np.zeros(3), np.full(3, 50.0))


def cfg(**kw):
    return with_overrides(SwarmConfig(), kw)


# motion


def test_step_motion_examples():
    c = np.full(3, 25.0)
    assert np.array_equal(step_motion(c, 1.0, BOX, step=np.zeros(3)), c)
    np.testing.assert_array_equal(step_motion([49, 25, 25], 1.0, BOX, step=[3, 0, 0]), [48, 25, 25])
    np.testing.assert_array_equal(step_motion([1, 25, 25], 1.0, BOX, step=[-4, 0, 0]), [3, 25, 25])


@given(
    st.tuples(*[st.floats(0, 50)] * 3),
    st.tuples(*[st.floats(-500, 500, allow_nan=False)] * 3),
)
def test_reflection_contains(p, step):
    out = step_motion(p, 1.0, BOX, step=step)
    assert np.all(out >= 0.0) and np.all(out <= 50.0)


def test_reflection_multiple_folds():
    # 50 + 120 = 170 -> 70 past the far wall twice
    np.testing.assert_allclose(reflect_into(np.array([170.0]), np.zeros(1), np.full(1, 50.0)), [30.0])


# sensing, ranging, links, spoofing


def test_sense_local_covariance_and_noise():
    c = cfg(vertical_factor=2.0, cold_start_epochs=0)
    s = sense_local([10, 10, 10], 0, c, epoch=3, noise_scale=2.0, cohort=False, z=np.array([1.0, -1.0, 0.5]), loss_draw=0.9)
    np.testing.assert_array_equal(s.covariance.matrix, np.diag([4.0, 4.0, 16.0]))
    np.testing.assert_allclose(s.position, [12.0, 8.0, 12.0])


def test_sense_local_loss_and_cohort():
    c = cfg(loss_prob=0.05, cold_start_epochs=10)
    assert sense_local([0, 0, 0], 0, c, 12, 1.0, False, np.zeros(3), loss_draw=0.01).missing
    assert not sense_local([0, 0, 0], 0, c, 12, 1.0, False, np.zeros(3), loss_draw=0.5).missing
    assert sense_local([0, 0, 0], 0, c, 3, 1.0, True, np.zeros(3), loss_draw=0.5).missing
    # no loss draws during cold start
    assert not sense_local([0, 0, 0], 0, c, 3, 1.0, False, np.zeros(3), loss_draw=0.0).missing


def test_sense_local_cold_start_inflation_and_floor():
    c = cfg(cold_start_epochs=10, cold_start_inflation=3.0, vertical_factor=2.0)
    s = sense_local([0, 0, 0], 0, c, 0, 1.0, False, np.zeros(3), 0.5)
    np.testing.assert_array_equal(s.covariance.matrix, np.diag([9.0, 9.0, 36.0]))
    s = sense_local([0, 0, 0], 0, c, 11, 0.0, False, np.ones(3), 0.5)
    np.testing.assert_allclose(np.diag(s.covariance.matrix), [1e-4, 1e-4, 4e-4])


def test_measure_range_examples():
    c = cfg(range_noise_base=0.1, range_noise_slope=0.02)
    obs = measure_range([0, 0, 0], [6, 8, 0], c, z=0.0)
    assert obs.sigma_d == pytest.approx(0.3)
    assert obs.d_hat == 10.0
    assert measure_range([0, 0, 0], [1, 0, 0], c, z=-100.0).d_hat == 0.0


def test_link_observables_examples():
    lo = link_observables_from_distance(0.0, 30.0)
    assert (lo.rssi_score, lo.prr) == (1.0, 1.0)
    lo = link_observables_from_distance(30.0, 30.0)
    assert (lo.rssi_score, lo.prr) == (0.0, 0.0)
    lo = link_observables_from_distance(15.0, 30.0)
    assert (lo.rssi_score, lo.prr) == (0.5, 0.5)


def test_spoof_offset_magnitude():
    c = cfg(spoof_min=20.0, spoof_max=20.0)
    rng = make_rng(1, 8)
    truth = np.array([10.0, 20.0, 30.0])
    for _ in range(20):
        assert np.linalg.norm(spoof_report(truth, c, rng) - truth) == pytest.approx(20.0)
    c0 = cfg(spoof_min=0.0, spoof_max=0.0)
    assert np.array_equal(spoof_report(truth, c0, rng), truth)


# full runs


def test_run_is_deterministic_and_seed_sensitive():
    c = cfg(n_epochs=12, seed=3, malicious_fraction=0.3)
    a, b = run_simulation(c), run_simulation(c)
    assert metrics_to_jsonl(a) == metrics_to_jsonl(b)
    other = run_simulation(dataclasses.replace(c, seed=4))
    assert metrics_to_jsonl(other) != metrics_to_jsonl(a)


def test_zero_epochs():
    assert run_simulation(cfg(n_epochs=0, cold_start_epochs=0)) == []


def test_run_epoch_past_end_raises():
    world = init_world(cfg(n_epochs=1, cold_start_epochs=0))
    run_epoch(world)
    with pytest.raises(ValueError):
        run_epoch(world)


def test_invalid_config_lists_fields():
    with pytest.raises(ConfigError) as err:
        run_simulation(dataclasses.replace(SwarmConfig(), n_uavs=0, comm_radius=-1.0, malicious_fraction=0.9))
    assert {"n_uavs", "comm_radius", "malicious_fraction"} <= set(err.value.fields)


def test_positions_stay_in_bounds():
    world = init_world(cfg(n_epochs=30, step_scale=8.0, seed=5))
    for _ in range(30):
        world, _, snap = run_epoch(world)
        assert np.all(snap.truth >= 0.0) and np.all(snap.truth <= 50.0)


def test_honest_means_exclude_malicious():
    for m in run_simulation(cfg(n_epochs=15, malicious_fraction=0.4, seed=2)):
        honest = [i for i, bad in enumerate(m.malicious) if not bad]
        assert sum(m.malicious) == 4
        assert m.mean_local_error_honest == pytest.approx(np.mean([m.local_errors[i] for i in honest]), rel=1e-12)
        assert m.mean_refined_error_honest == pytest.approx(np.mean([m.refined_errors[i] for i in honest]), rel=1e-12)
        assert all(e >= 0 for e in m.local_errors + m.refined_errors)


def test_trust_on_off_share_world_draws():
    on = simulate(cfg(n_epochs=15, malicious_fraction=0.3, seed=9), snapshot_epoch=14)
    off = simulate(cfg(n_epochs=15, malicious_fraction=0.3, seed=9, trust=False), snapshot_epoch=14)
    for a, b in zip(on.metrics, off.metrics):
        assert a.local_errors == b.local_errors
        assert a.loss_flags == b.loss_flags and a.malicious == b.malicious
    assert np.array_equal(on.snapshot.truth, off.snapshot.truth)
    assert any(a.refined_errors != b.refined_errors for a, b in zip(on.metrics, off.metrics))


def test_isolated_uav_passes_local_through():
    # radius smaller than any pairwise distance: nobody has a neighbor
    c = cfg(n_epochs=12, comm_radius=1e-3, cohort_size=0, loss_prob=0.0, seed=1)
    for m in run_simulation(c):
        assert m.refined_errors == m.local_errors
        assert m.flagged_count == 0


def test_near_noiseless_world_refines_to_floor():
    # sensing std sits at its 0.01 m floor and ranging std matches it
    c = cfg(
        noise_scales=(0.0,) * 10, range_noise_base=0.01, range_noise_slope=0.0,
        cohort_size=0, loss_prob=0.0, cold_start_inflation=1.0,
    )
    for seed in range(3):
        ms = run_simulation(dataclasses.replace(c, seed=seed))
        assert max(m.mean_refined_error_honest for m in ms) < 0.05
        assert sum(m.flagged_count for m in ms) == 0


def test_cohort_missing_during_cold_start_only():
    ms = run_simulation(cfg(n_epochs=14, cohort_size=4, loss_prob=0.0, seed=6))
    for m in ms[:10]:
        assert sum(m.loss_flags) == 4
    for m in ms[10:]:
        assert sum(m.loss_flags) == 0
    assert sum(ms[0].low_confidence) == 4
    assert not any(ms[1].low_confidence)


def test_record_trust_exports_ledgers():
    res = simulate(cfg(n_epochs=3, malicious_fraction=0.2, seed=1), record_trust=True)
    trust = res.metrics[-1].trust
    assert set(trust) == set(range(10))
    assert all(0.0 <= v <= 1.0 for row in trust.values() for v in row.values())


def test_golden_metrics():
    got = metrics_to_jsonl(run_simulation(dataclasses.replace(SwarmConfig(), seed=GOLDEN_SEED)))
    assert got == (DATA / "golden_metrics_seed7.jsonl").read_text(encoding="utf-8")


# config file format


def test_config_text_roundtrip():
    c = cfg(n_uavs=6, noise_scales=(1.0, 2.0, 0.5, 0.5, 1.5, 3.0), cohort_size=2, trust=False, bounds_hi=(40.0, 40.0, 20.0))
    assert load_config(None, parse_config_text(dump_config(c))) == c
    assert set(flat_items(c)) == set(config_keys())


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "swarm.cfg"
    p.write_text("# test\ncomm_radius = 40\nlambda = 2.5\ntrust = off\nbounds_hi = 60, 60, 30\n", encoding="utf-8")
    c = load_config(p, {"comm_radius": 20.0})
    assert c.comm_radius == 20.0
    assert c.trust.lam == 2.5 and c.trust.enabled is False
    assert c.bounds_hi == (60.0, 60.0, 30.0)


def test_config_errors_name_fields(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config_text("bogus = 1\nn_uavs = ten\n")
    assert err.value.fields == ["bogus", "n_uavs"]
    with pytest.raises(ConfigError) as err:
        with_overrides(SwarmConfig(), {"eta": 2.0})
    assert err.value.fields == ["eta"]
    with pytest.raises(ConfigError) as err:
        with_overrides(SwarmConfig(), {"noise_scales": (1.0, 2.0)})
    assert err.value.fields == ["noise_scales"]

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from blescope.core import Brand, Location, Split
from blescope.simulate import (
    DatasetPlan,
    Environment,
    PhoneProfile,
    SimConfig,
    failure_mask,
    load_phone_catalog,
    path_loss_rssi,
    random_walk,
    simulate_dataset,
    synth_run,
)
from blescope.stats import receiver_stats


class TestPathLoss:
    def test_one_metre_gives_measured_power(self):
        env = Environment(((0.0, 0.0),), (0, 0, 10, 10))
        assert path_loss_rssi(env, 0, Location(1.0, 0.0)) == pytest.approx(-77.0)

    def test_ten_metres(self):
        env = Environment(((0.0, 0.0),), (0, 0, 10, 10), path_loss_exponent=2.0)
        assert path_loss_rssi(env, 0, Location(10.0, 0.0)) == pytest.approx(-97.0)

    def test_distance_clamped(self):
        env = Environment(((0.0, 0.0),), (0, 0, 10, 10))
        assert path_loss_rssi(env, 0, Location(0.0, 0.0)) == path_loss_rssi(env, 0, Location(0.05, 0.0))

    def test_monotone_in_distance(self):
        env = Environment(((0.0, 0.0),), (0, 0, 50, 50))
        vals = [path_loss_rssi(env, 0, Location(d, 0.0)) for d in (0.5, 1, 2, 5, 20)]
        assert np.all(np.diff(vals) < 0)

    def test_invalid_environment(self):
        with pytest.raises(ValueError):
            Environment((), (0, 0, 1, 1))
        with pytest.raises(ValueError):
            Environment(((0, 0),), (0, 0, 1, 1), path_loss_exponent=5.0)


class TestRandomWalk:
    def test_stays_in_bounds_and_speed(self, small_env):
        traj = random_walk(small_env, 500, (1.0, 1.2), seed=4)
        xmin, ymin, xmax, ymax = small_env.bounds
        assert np.all((traj.xy[:, 0] >= xmin) & (traj.xy[:, 0] <= xmax))
        assert np.all((traj.xy[:, 1] >= ymin) & (traj.xy[:, 1] <= ymax))
        steps = np.linalg.norm(np.diff(traj.xy, axis=0), axis=1)
        assert steps.max() <= 1.2 + 1e-12

    def test_deterministic(self, small_env):
        a = random_walk(small_env, 50, seed=1)
        b = random_walk(small_env, 50, seed=1)
        assert_array_equal(a.xy, b.xy)

    def test_empty_bounds(self):
        env = Environment(((0, 0),), (0, 0, 0, 5))
        with pytest.raises(ValueError):
            random_walk(env, 10)


class TestProfiles:
    def test_hazard_inverts_failure_fraction(self):
        p = PhoneProfile.from_receiver_stats(15.18, 3.20)
        assert p.expected_failure_pct == pytest.approx(15.18)
        assert p.failure_rate == pytest.approx(0.1518 / (3.2 * 0.8482))

    def test_no_failure(self):
        p = PhoneProfile.from_receiver_stats(0.0, 0.0)
        assert p.failure_rate == 0.0
        assert not failure_mask(p, 100, 0).any()

    def test_validation(self):
        with pytest.raises(ValueError):
            PhoneProfile(failure_rate=1.5)
        with pytest.raises(ValueError):
            PhoneProfile(noise_var=-1)

    def test_reference_catalog(self):
        cat = load_phone_catalog()
        assert len(cat) == 15
        assert {e.phone.brand for e in cat} == set(Brand)
        assert sorted(e.phone.index for e in cat) == list(range(15))


class TestSynthRun:
    def test_clean_phone_hears_close_beacons(self, small_env):
        traj = random_walk(small_env, 100, seed=0)
        run = synth_run(small_env, PhoneProfile(), traj, seed=0)
        assert run.rssi.shape == (100, small_env.n_beacons)
        assert np.all(run.rssi >= 0)
        assert receiver_stats(run).failure_pct == 0.0

    def test_gain_offset_shifts_rssi(self, small_env):
        traj = random_walk(small_env, 50, seed=0)
        a = synth_run(small_env, PhoneProfile(), traj, seed=2)
        b = synth_run(small_env, PhoneProfile(gain_offset_db=-3.0), traj, seed=2)
        both = (a.rssi > 3) & (b.rssi > 0)
        assert_allclose(a.rssi[both] - b.rssi[both], 3.0)

    def test_unlabeled(self, small_env):
        traj = random_walk(small_env, 10, seed=0)
        assert not synth_run(small_env, PhoneProfile(), traj, seed=0, labeled=False).labeled


class TestDataset:
    def test_splits_and_unlabeled(self, tiny_runs):
        splits = {(r.phone.name, r.split, r.labeled) for r in tiny_runs}
        assert ("X1", Split.TRAIN, False) in splits
        assert ("A1", Split.TRAIN, False) not in splits
        for r in tiny_runs:
            assert r.split in (Split.TRAIN, Split.VAL, Split.TEST)

    def test_no_shared_seconds(self, tiny_runs):
        from blescope.core import check_disjoint_splits

        check_disjoint_splits(tiny_runs)

    def test_deterministic(self, tiny_sim_config, tiny_runs):
        again = simulate_dataset(tiny_sim_config, seed=3)
        assert all(np.array_equal(a.rssi, b.rssi) for a, b in zip(tiny_runs, again))

    def test_config_roundtrip(self, tiny_sim_config):
        back = SimConfig.from_dict(tiny_sim_config.to_dict())
        assert back.environment == tiny_sim_config.environment
        assert back.plan == tiny_sim_config.plan
        assert [e.profile for e in back.phones] == [e.profile for e in tiny_sim_config.phones]

    def test_packaged_benchmark(self):
        cfg = SimConfig.load()
        assert cfg.environment.n_beacons == 12
        assert cfg.environment.bounds == (0.0, 0.0, 30.0, 20.0)
        assert len({e.phone.brand for e in cfg.phones}) == 5
        assert cfg.plan.unlabeled_seconds == 1000
        assert isinstance(cfg.plan, DatasetPlan)

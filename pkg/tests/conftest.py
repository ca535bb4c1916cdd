import numpy as np
import pytest

from blescope.core import Brand, PhoneModelId, Run, Split
from blescope.simulate import DatasetPlan, Environment, PhoneEntry, PhoneProfile, SimConfig, simulate_dataset

APPLE = PhoneModelId("A1", Brand.APPLE, 0)
SAMSUNG = PhoneModelId("S1", Brand.SAMSUNG, 1)
XIAOMI = PhoneModelId("X1", Brand.XIAOMI, 2)


def make_run(phone=APPLE, length=8, n_beacons=3, split=Split.TRAIN, seed=0, labeled=True, start=0, run_id=""):
    rng = np.random.default_rng(seed)
    rssi = rng.uniform(1, 40, size=(length, n_beacons)) * (rng.random((length, n_beacons)) < 0.7)
    locs = rng.uniform(0, 10, size=(length, 2)) if labeled else None
    return Run(phone, np.arange(start, start + length), rssi, locs, split, run_id or f"{phone.name}_{split.value}_{seed}")


@pytest.fixture
def small_env():
    return Environment.grid(3, 2, 12.0, 8.0, measured_power_dbm=-70.0)


@pytest.fixture(scope="session")
def tiny_sim_config():
    env = Environment.grid(3, 2, 12.0, 8.0, measured_power_dbm=-70.0)
    phones = [
        PhoneEntry(APPLE, PhoneProfile(0.0, 1.0, per_beacon_drop_rate=0.05)),
        PhoneEntry(SAMSUNG, PhoneProfile(2.0, 2.0, per_beacon_drop_rate=0.05)),
        PhoneEntry(XIAOMI, PhoneProfile.from_receiver_stats(15.0, 3.0, gain_offset_db=-6.0, noise_var=8.0,
                                                            per_beacon_drop_rate=0.3)),
    ]
    plan = DatasetPlan(train_seconds=120, val_seconds=40, test_seconds=40, unlabeled_seconds=60, run_length=40,
                       unlabeled_brands=("Xiaomi",))
    return SimConfig(env, phones, plan)


@pytest.fixture(scope="session")
def tiny_runs(tiny_sim_config):
    return simulate_dataset(tiny_sim_config, seed=3)

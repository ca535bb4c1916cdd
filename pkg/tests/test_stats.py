import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from blescope.core import Brand, Run
from blescope.stats import (
    StatMatrix,
    compute_stat_matrix,
    format_receiver_table,
    receiver_stats,
    receiver_stats_by_phone,
)
from conftest import APPLE, make_run
from oracles import stat_matrix_bruteforce

WORKED = np.array([[5.0, 0.0], [5.0, 10.0], [0.0, 8.0]])

rows = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)),
              elements=st.one_of(st.just(0.0), st.floats(0.5, 60.0)))


class TestStatMatrix:
    def test_worked_example(self):
        sm = compute_stat_matrix(WORKED)
        assert_array_equal(sm.m, [[5.0, 5.0], [2.5, 9.0]])
        assert_array_equal(sm.support, [[2, 2], [2, 2]])

    def test_single_sample(self):
        assert_array_equal(compute_stat_matrix(np.array([[4.0, 4.0]])).m, 4.0)

    def test_never_heard_beacon_is_masked(self):
        sm = compute_stat_matrix(np.array([[5.0, 0.0], [3.0, 0.0]]))
        assert_array_equal(sm.mask, [[True, True], [False, False]])
        assert_array_equal(sm.m[1], 0.0)

    @given(rows)
    @settings(max_examples=80, deadline=None)
    def test_matches_bruteforce(self, data):
        sm = compute_stat_matrix(data)
        m, support = stat_matrix_bruteforce(data)
        assert_allclose(sm.m, m, rtol=1e-9, atol=0)
        assert_array_equal(sm.support, support)

    @given(rows)
    @settings(max_examples=40, deadline=None)
    def test_diagonal_is_mean_when_heard(self, data):
        sm = compute_stat_matrix(data)
        for i in range(data.shape[1]):
            heard = data[:, i] > 0
            if heard.any():
                assert sm.m[i, i] == pytest.approx(data[heard, i].mean(), rel=1e-12)
                assert sm.m[i, i] > 0

    def test_from_runs_pools_seconds(self):
        a, b = make_run(seed=1), make_run(seed=2, start=40)
        sm = compute_stat_matrix([a, b], Brand.APPLE)
        ref = compute_stat_matrix(np.concatenate([a.rssi, b.rssi]))
        assert_array_equal(sm.m, ref.m)
        assert sm.brand is Brand.APPLE

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_stat_matrix([])

    def test_serialisation(self, tmp_path):
        sm = compute_stat_matrix(WORKED, Brand.APPLE)
        back = StatMatrix.from_dict(sm.to_dict())
        assert_array_equal(back.m, sm.m)
        assert back.brand is Brand.APPLE
        sm.save(tmp_path / "m.csv")
        assert_allclose(np.loadtxt(tmp_path / "m.csv", delimiter=","), sm.m)


class TestReceiverStats:
    def test_streaks(self):
        rssi = np.array([[1.0], [0.0], [0.0], [2.0], [0.0], [3.0]])
        st_ = receiver_stats(rssi)
        assert st_.failure_pct == pytest.approx(50.0)
        assert st_.mean_dead_time_s == pytest.approx(1.5)
        assert st_.mean_nonzero_rssi == pytest.approx(2.0)

    def test_examples(self):
        st_ = receiver_stats(np.array([[3.0], [0.0], [0.0], [0.0], [3.0]]))
        assert (st_.failure_pct, st_.mean_dead_time_s) == (60.0, 3.0)
        clean = receiver_stats(np.ones((5, 2)))
        assert (clean.failure_pct, clean.mean_dead_time_s) == (0.0, 0.0)
        assert receiver_stats(np.zeros((4, 2))).failure_pct == 100.0

    def test_by_phone_and_table(self):
        run = Run(APPLE, np.arange(4), np.array([[1.0], [0.0], [1.0], [1.0]]))
        out = receiver_stats_by_phone([run])
        assert out["A1"].failure_pct == 25.0
        assert "A1" in format_receiver_table(out)

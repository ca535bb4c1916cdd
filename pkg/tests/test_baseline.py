import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from blescope.baseline import FingerprintDb, KnnLocalizer, knn_predict, knn_predict_many
from blescope.core import DataHygieneError, Location, RssiWindow, Split, make_windows
from conftest import APPLE, make_run
from oracles import knn_bruteforce


def random_db(rng, n=None, b=3, h=2):
    n = n or int(rng.integers(10, 51))
    f = rng.integers(0, 6, size=(n, b * h)).astype(float)  # coarse values make distance ties likely
    return FingerprintDb(f, rng.uniform(0, 20, size=(n, 2)))


class TestKnn:
    def test_exact_match(self):
        db = FingerprintDb(np.array([[0.0, 1.0], [5.0, 5.0], [2.0, 2.0]]), np.array([[1, 1], [2, 2], [3, 3.0]]))
        assert knn_predict(db, np.array([5.0, 5.0]), k=3) == Location(2.0, 2.0)

    def test_symmetric_pair(self):
        db = FingerprintDb(np.array([[-1.0], [1.0]]), np.array([[0.0, 0.0], [2.0, 0.0]]))
        assert knn_predict(db, np.array([0.0]), k=2) == Location(1.0, 0.0)

    def test_k_larger_than_db(self):
        db = FingerprintDb(np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            knn_predict(db, np.zeros(2), k=4)
        with pytest.raises(ValueError):
            knn_predict(db, np.zeros(2), k=0)

    def test_tie_break_by_insertion_order(self):
        f = np.array([[1.0], [-1.0], [1.0]])
        db = FingerprintDb(f, np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]))
        # all three at distance 1; k=2 keeps entries 0 and 1
        assert knn_predict(db, np.array([0.0]), k=2) == Location(5.0, 0.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        db = random_db(rng)
        q = rng.integers(0, 6, size=db.dim).astype(float)
        got = knn_predict(db, q, k=10).as_array()
        assert_array_equal(got, knn_bruteforce(db.features, db.locations, q, 10))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_inside_neighbour_box(self, seed):
        rng = np.random.default_rng(seed)
        db = random_db(rng)
        q = rng.normal(2.5, 2, size=db.dim)
        p = knn_predict(db, q, k=10).as_array()
        assert np.all(p >= db.locations.min(axis=0) - 1e-9)
        assert np.all(p <= db.locations.max(axis=0) + 1e-9)

    def test_scale_invariance_without_guard(self):
        rng = np.random.default_rng(3)
        f = rng.normal(size=(30, 6))
        db = FingerprintDb(f, rng.uniform(0, 10, (30, 2)))
        q = rng.normal(size=6)
        a = knn_predict(db, q, k=5, eps=None).as_array()
        b = knn_predict(FingerprintDb(f * 3.7, db.locations), q * 3.7, k=5, eps=None).as_array()
        assert_allclose(a, b, rtol=1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        db = random_db(rng, n=40)
        qs = rng.integers(0, 6, size=(25, db.dim)).astype(float)
        batch = knn_predict_many(db, qs, k=7, chunk_bytes=2000)
        single = np.array([knn_predict(db, q, k=7).as_array() for q in qs])
        assert_array_equal(batch, single)

    def test_window_query(self):
        runs = [make_run(length=12)]
        samples = make_windows(runs[0], 5)
        db = FingerprintDb.from_samples(samples)
        w = samples[3].window
        assert knn_predict(db, w, k=3) == samples[3].location

    def test_from_runs_rejects_test_split(self):
        with pytest.raises(DataHygieneError):
            FingerprintDb.from_runs([make_run(split=Split.TEST)])

    def test_localizer_wrapper(self):
        run = make_run(length=15)
        db = FingerprintDb.from_runs([run])
        x = np.random.default_rng(0).uniform(0, 30, (3, 3, 5))
        assert KnnLocalizer(db, 4)(x).shape == (3, 2)

    def test_db_immutable(self):
        db = FingerprintDb(np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            db.features[0, 0] = 1.0

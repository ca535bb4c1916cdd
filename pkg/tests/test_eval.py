import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from blescope.core import DataHygieneError, Location, Split, windows_from_runs
from blescope.eval import REFERENCE_FIGURES, ErrorSummary, absolute_error, evaluate, export_cdf
from conftest import APPLE, SAMSUNG, make_run


def _test_runs():
    return [make_run(APPLE, length=12, split=Split.TEST, seed=1),
            make_run(SAMSUNG, length=9, split=Split.TEST, seed=2, start=40)]


def _oracle_model(runs, offset):
    ws = windows_from_runs(runs, 5)
    table = {x.tobytes(): y for x, y in zip(ws.x, ws.y)}
    return lambda x: np.array([table[row.tobytes()] for row in x]) + offset


class TestAbsoluteError:
    def test_examples(self):
        assert absolute_error(Location(1, 2), Location(1, 2)) == 0.0
        assert absolute_error(Location(3, 4), Location(0, 0)) == 5.0
        assert absolute_error([1, 1], [0, 0]) == pytest.approx(np.sqrt(2), abs=1e-12)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            absolute_error([np.nan, 0], [0, 0])


class TestSummary:
    def test_hand_stats(self):
        s = ErrorSummary.of(np.array([1.0, 2.0, 3.0]))
        assert (s.mean, s.median, s.max) == (2.0, 2.0, 3.0)
        assert s.std == pytest.approx(np.sqrt(2 / 3))
        assert s.p90 == pytest.approx(2.8)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=50))
    @settings(max_examples=60, deadline=None)
    def test_ordering(self, errs):
        s = ErrorSummary.of(np.array(errs))
        assert s.mean >= 0
        assert s.median <= s.p90 + 1e-12 and s.p90 <= s.max + 1e-12


class TestEvaluate:
    def test_perfect_predictor(self):
        runs = _test_runs()
        rep = evaluate(_oracle_model(runs, 0.0), runs, "oracle", "s2")
        assert rep.overall.mean == rep.overall.max == 0.0
        assert set(rep.per_phone) == {"A1", "S1"}
        assert rep.per_phone["A1"].n == 8 and rep.per_phone["S1"].n == 5

    def test_constant_offset(self):
        runs = _test_runs()
        rep = evaluate(_oracle_model(runs, np.array([3.0, 4.0])), runs)
        assert_allclose(rep.errors, 5.0)
        assert rep.mean_for(["A1", "S1"]) == pytest.approx(5.0)

    def test_deterministic(self):
        runs = _test_runs()
        model = _oracle_model(runs, np.array([0.3, -0.1]))
        assert evaluate(model, runs) == evaluate(model, runs)

    def test_only_test_split(self):
        runs = [make_run(split=Split.VAL, length=8)]
        with pytest.raises(DataHygieneError):
            evaluate(lambda x: np.zeros((len(x), 2)), runs)
        with pytest.raises(DataHygieneError):
            evaluate(lambda x: np.zeros((len(x), 2)), windows_from_runs(runs, 5))

    def test_shape_check(self):
        with pytest.raises(ValueError):
            evaluate(lambda x: np.zeros((1, 2)), _test_runs())

    def test_report_outputs(self):
        runs = _test_runs()
        rep = evaluate(_oracle_model(runs, np.array([1.0, 0.0])), runs, "m", "s")
        table = rep.format_table()
        assert "A1" in table and "1.37" in table
        assert rep.references == dict(REFERENCE_FIGURES)
        assert '"method": "m"' in rep.to_json()


class TestCdf:
    def _report(self, errs):
        runs = [make_run(APPLE, length=4 + len(errs), split=Split.TEST)]
        ws = windows_from_runs(runs, 5)
        offs = np.column_stack([errs, np.zeros(len(errs))])
        return evaluate(lambda x: ws.y + offs, runs)

    def _read(self, path):
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["error_m", "cumulative_fraction"]
        return [(float(a), float(b)) for a, b in rows[1:]]

    def test_single(self, tmp_path):
        assert self._read(export_cdf(self._report([2.0]), tmp_path / "c.csv")) == [(2.0, 1.0)]

    def test_two(self, tmp_path):
        rows = self._read(export_cdf(self._report([3.0, 1.0]), tmp_path / "c.csv"))
        assert np.array(rows) == pytest.approx(np.array([[1.0, 0.5], [3.0, 1.0]]), abs=1e-12)

    def test_monotone(self, tmp_path):
        rows = self._read(export_cdf(self._report(list(np.random.default_rng(0).uniform(0, 5, 30))), tmp_path / "c.csv"))
        fr = [b for _, b in rows]
        assert all(0 < f <= 1 for f in fr) and fr == sorted(fr) and fr[-1] == 1.0

    def test_write_failure(self, tmp_path):
        with pytest.raises(OSError):
            export_cdf(self._report([1.0]), tmp_path / "missing" / "c.csv")

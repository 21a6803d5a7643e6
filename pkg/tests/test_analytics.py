import numpy as np
import pytest

from instmine.analytics import (MiningStats, export_curves, mining_precision,
                                smooth_series)
from instmine.errors import InvalidConfig, InvalidInput, UnknownId
from instmine.fileio import read_csv
from instmine.trainer import StepRecord, TrainingHistory

LABELS = np.array([0, 0, 0, 1, 1, 2])


class TestMiningPrecision:
    def test_ratios(self):
        assert mining_precision([0, 1, 2], 0, LABELS) == 1.0
        assert mining_precision([3, 4], 0, LABELS) == 0.0
        assert mining_precision([0, 1, 2, 3, 4], 0, LABELS) == 0.6

    def test_empty_is_absent(self):
        assert mining_precision([], 0, LABELS) is None

    def test_unknown_id(self):
        with pytest.raises(UnknownId):
            mining_precision([0, 99], 0, LABELS)


class TestSmoothing:
    def test_window_one_is_identity(self):
        series = [1.0, None, 3.0, 4.0]
        assert smooth_series(series, 1) == series

    def test_trailing_mean_skips_absent(self):
        got = smooth_series([1.0, None, 3.0], 2)
        assert got[0] == 1.0
        assert got[1] == 1.0          # window {1.0, None}
        assert got[2] == 3.0          # window {None, 3.0}

    def test_all_absent_window_stays_absent(self):
        assert smooth_series([None, None, 2.0], 2) == [None, None, 2.0]

    def test_window_validated(self):
        with pytest.raises(InvalidInput):
            smooth_series([1.0], 0)


def record(step, rnd=1, n_b=2.0, bp=0.5, n_m=4.0, mp=0.75):
    return StepRecord(step=step, round=rnd, loss=-0.1, lr=1e-3,
                      n_batch_pos=n_b, n_mem_pos=n_m,
                      batch_precision=bp, mem_precision=mp)


class TestExportCurves:
    def test_single_step_single_row(self, tmp_path):
        path = tmp_path / "curves.csv"
        export_curves(TrainingHistory([record(0)]), path, window=1)
        rows = read_csv(path)
        assert len(rows) == 1
        assert rows[0]["n_batch_pos_raw"] == rows[0]["n_batch_pos_smooth"] \
            == 2.0

    def test_window_one_smooth_equals_raw(self, tmp_path):
        history = TrainingHistory([record(i, bp=0.1 * i) for i in range(6)])
        path = tmp_path / "curves.csv"
        export_curves(history, path, window=1)
        for row in read_csv(path):
            assert row["batch_prec_raw"] == row["batch_prec_smooth"]

    def test_roundtrip_and_schema(self, tmp_path):
        history = TrainingHistory(
            [record(i, rnd=1 + i // 2, n_m=float(i), mp=None if i == 1
                    else 0.5) for i in range(4)])
        path = tmp_path / "curves.csv"
        export_curves(history, path, window=2)
        rows = read_csv(path)
        assert [r["step"] for r in rows] == [0.0, 1.0, 2.0, 3.0]
        assert [r["round"] for r in rows] == [1.0, 1.0, 2.0, 2.0]
        assert [r["n_mem_pos_raw"] for r in rows] == [0.0, 1.0, 2.0, 3.0]
        assert rows[1]["mem_prec_raw"] is None
        # Window 2 at step 1 holds {0.5, None} -> 0.5.
        assert rows[1]["mem_prec_smooth"] == 0.5
        assert rows[3]["n_mem_pos_smooth"] == 2.5

    def test_empty_history_rejected(self, tmp_path):
        with pytest.raises(InvalidConfig):
            export_curves(TrainingHistory([]), tmp_path / "curves.csv")


class TestMiningStats:
    def test_projection_from_record(self):
        stats = MiningStats.from_record(record(7, n_b=1.5, bp=None))
        assert stats.step == 7
        assert stats.n_batch_selected == 1.5
        assert stats.batch_precision is None
        assert stats.memory_precision == 0.75

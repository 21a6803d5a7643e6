"""Label-aware mining instrumentation. Analysis only: nothing here may
influence training decisions, so the trainer only ever hands data in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, InvalidInput, UnknownId
from .fileio import write_csv

CURVE_COLUMNS = ("step", "round",
                 "n_batch_pos_raw", "n_batch_pos_smooth",
                 "batch_prec_raw", "batch_prec_smooth",
                 "n_mem_pos_raw", "n_mem_pos_smooth",
                 "mem_prec_raw", "mem_prec_smooth")


@dataclass(frozen=True)
class MiningStats:
    step: int
    n_batch_selected: float
    batch_precision: float | None
    n_memory_mined: float
    memory_precision: float | None

    @classmethod
    def from_record(cls, record):
        return cls(record.step, record.n_batch_pos, record.batch_precision,
                   record.n_mem_pos, record.mem_precision)


def mining_precision(selected_ids, anchor_class, labels):
    """Share of selections whose hidden class matches the anchor's.

    Returns None (undefined, not zero) when nothing was selected.
    """
    if len(selected_ids) == 0:
        return None
    labels = np.asarray(labels)
    n = len(labels)
    for i in selected_ids:
        if not 0 <= i < n:
            raise UnknownId(f"selected id {i} outside the labeled range")
    matches = sum(1 for i in selected_ids if labels[i] == anchor_class)
    return matches / len(selected_ids)


def smooth_series(values, window):
    """Trailing window mean, skipping absent entries.

    Positions whose window holds no present value stay absent. window=1
    reproduces the raw series.
    """
    if window < 1:
        raise InvalidInput(f"window must be >= 1, got {window}")
    out = []
    for t in range(len(values)):
        chunk = [v for v in values[max(0, t - window + 1):t + 1]
                 if v is not None]
        out.append(float(np.mean(chunk)) if chunk else None)
    return out


def export_curves(history, path, window=25):
    """Raw plus smoothed count/precision series, one CSV row per step."""
    records = list(history.records)
    if not records:
        raise InvalidConfig("history is empty; nothing to export")
    series = {
        "n_batch_pos": [r.n_batch_pos for r in records],
        "batch_prec": [r.batch_precision for r in records],
        "n_mem_pos": [r.n_mem_pos for r in records],
        "mem_prec": [r.mem_precision for r in records],
    }
    smooth = {k: smooth_series(v, window) for k, v in series.items()}
    rows = []
    for i, r in enumerate(records):
        row = {"step": r.step, "round": r.round}
        for key, col in (("n_batch_pos", "n_batch_pos"),
                         ("batch_prec", "batch_prec"),
                         ("n_mem_pos", "n_mem_pos"),
                         ("mem_prec", "mem_prec")):
            row[f"{col}_raw"] = series[key][i]
            row[f"{col}_smooth"] = smooth[key][i]
        rows.append(row)
    write_csv(path, CURVE_COLUMNS, rows)

"""Panel data containers, CSV ingestion (plain and FRED-MD), scaling and splits.

A :class:`Panel` stores an ``N x T`` matrix: units (cross-section) in rows,
time in columns.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from datetime import datetime
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "n/a", "null", ".", "#n/a"}
MISSING_POLICIES = ("drop-unit", "drop-time", "error")
STANDARDIZE_MODES = ("none", "demean", "zscore")


@dataclass(frozen=True)
class Scaling:
    """Per-unit location/scale used by :func:`standardize`, reusable on test data."""

    mode: str
    means: np.ndarray
    stds: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.means[:, None]) / self.stds[:, None]


@dataclass(frozen=True)
class Panel:
    values: np.ndarray
    unit_ids: tuple
    time_ids: tuple
    group_of_unit: dict | None = None
    report: tuple = ()
    scaling: Scaling | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise InputError(f"panel values must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit_ids", tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, "time_ids", tuple(str(t) for t in self.time_ids))
        object.__setattr__(self, "report", tuple(self.report))
        N, T = values.shape
        if N < 1 or T < 2:
            raise InputError(f"panel needs N >= 1 and T >= 2, got N={N}, T={T}")
        if len(self.unit_ids) != N or len(self.time_ids) != T:
            raise InputError(
                f"id lengths ({len(self.unit_ids)}, {len(self.time_ids)}) do not match shape {values.shape}"
            )
        if len(set(self.unit_ids)) != N:
            raise InputError("unit ids are not distinct")
        if len(set(self.time_ids)) != T:
            raise InputError("time ids are not distinct")
        if not np.all(np.isfinite(values)):
            raise InputError("panel contains non-finite entries")
        if not _chronological(self.time_ids):
            raise InputError("time ids are not in chronological order")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values, unit_ids=None, time_ids=None, **kwargs) -> "Panel":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        N, T = values.shape
        if unit_ids is None:
            unit_ids = [f"u{i}" for i in range(N)]
        if time_ids is None:
            time_ids = [str(t) for t in range(T)]
        return cls(values, tuple(unit_ids), tuple(time_ids), **kwargs)


def as_matrix(panel) -> np.ndarray:
    """Return the ``N x T`` matrix of a Panel or array-like."""
    if isinstance(panel, Panel):
        return panel.values
    X = np.asarray(panel, dtype=float)
    if X.ndim != 2:
        raise InputError(f"expected an N x T matrix, got shape {X.shape}")
    return X


class TransformCode(IntEnum):
    """FRED-MD transformation codes."""

    LEVEL = 1
    DIFF = 2
    DIFF2 = 3
    LOG = 4
    LOG_DIFF = 5
    LOG_DIFF2 = 6
    PCT_CHANGE_DIFF = 7

    @classmethod
    def parse(cls, raw) -> "TransformCode":
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise InputError(f"transform code {raw!r} is not a number") from None
        if not value.is_integer() or int(value) not in {c.value for c in cls}:
            raise InputError(f"unknown transform code {raw!r}; expected 1..7")
        return cls(int(value))

    @property
    def order(self) -> int:
        """Number of leading observations lost by the transform."""
        return {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}[self.value]


def apply_transform(series, code) -> np.ndarray:
    """Transform one series; lost leading observations become NaN."""
    x = np.asarray(series, dtype=float)
    code = TransformCode(code)
    out = np.full_like(x, np.nan)
    if code in (TransformCode.LOG, TransformCode.LOG_DIFF, TransformCode.LOG_DIFF2):
        finite = x[np.isfinite(x)]
        if np.any(finite <= 0):
            raise InputError(f"log transform (code {int(code)}) of a non-positive value")
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.log(x)
    if code in (TransformCode.LEVEL, TransformCode.LOG):
        out[:] = x
    elif code in (TransformCode.DIFF, TransformCode.LOG_DIFF):
        out[1:] = np.diff(x)
    elif code in (TransformCode.DIFF2, TransformCode.LOG_DIFF2):
        out[2:] = np.diff(x, n=2)
    else:
        growth = np.full_like(x, np.nan)
        growth[1:] = x[1:] / x[:-1] - 1.0
        out[2:] = np.diff(growth[1:])
    return out


# --------------------------------------------------------------------------- parsing


def _is_missing(token: str) -> bool:
    return token.strip().lower() in MISSING_TOKENS


def _parse_cell(token: str, row_label: str, col_label: str) -> float:
    if _is_missing(token):
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise InputError(f"unparseable cell {token!r} at row {row_label!r}, column {col_label!r}") from None
    if not math.isfinite(value):
        return math.nan
    return value


def _read_rows(path) -> list[list[str]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise InputError(f"{path}: empty table")
    return rows


def _looks_like_transform_row(label: str) -> bool:
    return label.strip().lower().rstrip(":") in {"transform", "tcode", "transformation"}


def _parse_time(token: str):
    token = token.strip()
    try:
        return float(token)
    except ValueError:
        pass
    for fmt in ("%Y-%m-%d", "%m/%d/%Y", "%Y-%m", "%Y/%m/%d", "%Y%m%d", "%YM%m", "%Y:%m"):
        try:
            return datetime.strptime(token, fmt).timestamp()
        except ValueError:
            continue
    return None


def _chronological(time_ids: Sequence[str]) -> bool:
    # only enforceable when every id parses as a number or a date
    keys = [_parse_time(t) for t in time_ids]
    if any(k is None for k in keys):
        return True
    return all(a < b for a, b in zip(keys, keys[1:]))


def _drop_missing(values, unit_ids, time_ids, policy, report):
    if policy not in MISSING_POLICIES:
        raise InputError(f"unknown missing-data policy {policy!r}; expected one of {MISSING_POLICIES}")
    bad = ~np.isfinite(values)
    if not bad.any():
        return values, unit_ids, time_ids
    if policy == "error":
        i, t = np.argwhere(bad)[0]
        raise InputError(f"missing value for unit {unit_ids[i]!r} at time {time_ids[t]!r}")
    if policy == "drop-unit":
        keep = ~bad.any(axis=1)
        for i in np.flatnonzero(~keep):
            msg = f"dropped unit {unit_ids[i]!r}: {int(bad[i].sum())} missing value(s)"
            report.append(msg)
            log.info(msg)
        values = values[keep]
        unit_ids = [u for u, k in zip(unit_ids, keep) if k]
    else:
        keep = ~bad.any(axis=0)
        for t in np.flatnonzero(~keep):
            msg = f"dropped time {time_ids[t]!r}: {int(bad[:, t].sum())} missing value(s)"
            report.append(msg)
            log.info(msg)
        values = values[:, keep]
        time_ids = [s for s, k in zip(time_ids, keep) if k]
    if values.size == 0:
        raise InputError(f"no data left after applying missing-data policy {policy!r}")
    return values, unit_ids, time_ids


def load_csv(path, orientation: str = "units-in-columns", missing: str = "drop-unit",
             groups: dict | None = None) -> Panel:
    """Load a delimited numeric table with one header row and one id column.

    ``orientation="units-in-columns"`` is the usual wide time-series layout
    (first column holds dates, header holds unit ids); ``"units-in-rows"`` is
    the transpose. Missing cells are handled per ``missing``; every dropped
    row/column is recorded in ``Panel.report``.
    """
    if orientation not in ("units-in-rows", "units-in-columns"):
        raise InputError(f"unknown orientation {orientation!r}")
    rows = _read_rows(path)
    header, body = rows[0], rows[1:]
    if body and _looks_like_transform_row(body[0][0]):
        raise InputError(
            f"{path}: second row looks like FRED-MD transform codes; use load_fred_md instead"
        )
    col_labels = [h.strip() for h in header[1:]]
    if not col_labels:
        raise InputError(f"{path}: no data columns")
    row_labels = []
    data = []
    for row in body:
        label = row[0].strip()
        cells = row[1:]
        if len(cells) != len(col_labels):
            raise InputError(f"{path}: row {label!r} has {len(cells)} cells, expected {len(col_labels)}")
        data.append([_parse_cell(c, label, col) for c, col in zip(cells, col_labels)])
        row_labels.append(label)
    values = np.array(data, dtype=float)
    if orientation == "units-in-columns":
        values = values.T
        unit_ids, time_ids = col_labels, row_labels
    else:
        unit_ids, time_ids = row_labels, col_labels
    report: list[str] = []
    values, unit_ids, time_ids = _drop_missing(values, unit_ids, time_ids, missing, report)
    return Panel(values, tuple(unit_ids), tuple(time_ids), group_of_unit=groups, report=tuple(report))


def write_csv(panel: Panel, path, orientation: str = "units-in-columns") -> None:
    """Write a panel so that :func:`load_csv` reads it back exactly."""
    X = panel.values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if orientation == "units-in-columns":
            w.writerow(["time", *panel.unit_ids])
            for t, tid in enumerate(panel.time_ids):
                w.writerow([tid, *(repr(float(v)) for v in X[:, t])])
        elif orientation == "units-in-rows":
            w.writerow(["unit", *panel.time_ids])
            for i, uid in enumerate(panel.unit_ids):
                w.writerow([uid, *(repr(float(v)) for v in X[i])])
        else:
            raise InputError(f"unknown orientation {orientation!r}")


def load_fred_md(path, missing: str = "drop-unit", standardize_mode: str = "zscore",
                 groups: dict | None = None) -> tuple[Panel, list[TransformCode]]:
    """Load a FRED-MD style file: header row, transform-code row, then dated rows.

    Each series is transformed per its code, the ``max(order)`` leading rows are
    dropped from every series so the panel stays rectangular, series with
    missing values or that are constant after transformation are dropped (and
    reported), and the result is standardized per unit.
    """
    rows = _read_rows(path)
    header, body = rows[0], rows[1:]
    if not body or not _looks_like_transform_row(body[0][0]):
        raise InputError(f"{path}: row 2 must hold transform codes (first cell 'Transform:')")
    names = [h.strip() for h in header[1:]]
    code_cells = body[0][1:]
    if len(code_cells) < len(names):
        raise InputError(f"{path}: transform row has {len(code_cells)} codes for {len(names)} series")
    codes = [TransformCode.parse(c) for c in code_cells[: len(names)]]
    dates, raw = [], []
    for row in body[1:]:
        label = row[0].strip()
        cells = row[1:] + [""] * max(0, len(names) - len(row) + 1)
        raw.append([_parse_cell(c, label, n) for c, n in zip(cells[: len(names)], names)])
        dates.append(label)
    raw = np.array(raw, dtype=float).T  # N x T_raw
    if raw.shape[1] < 3:
        raise InputError(f"{path}: too few dated rows")

    transformed = np.empty_like(raw)
    for i, (name, code) in enumerate(zip(names, codes)):
        try:
            transformed[i] = apply_transform(raw[i], code)
        except InputError as exc:
            raise InputError(f"series {name!r}: {exc}") from None
    lag = max(c.order for c in codes)
    transformed = transformed[:, lag:]
    dates = dates[lag:]

    report: list[str] = []
    if lag:
        report.append(f"dropped {lag} leading row(s) lost to differencing")
    values, unit_ids, time_ids = _drop_missing(transformed, names, dates, missing, report)
    code_of = dict(zip(names, codes))

    keep = np.std(values, axis=1) > 1e-12 * np.maximum(1.0, np.abs(values).max(axis=1))
    for i in np.flatnonzero(~keep):
        msg = f"dropped series {unit_ids[i]!r}: constant after transform code {int(code_of[unit_ids[i]])}"
        report.append(msg)
        log.info(msg)
    values = values[keep]
    unit_ids = [u for u, k in zip(unit_ids, keep) if k]
    if not unit_ids:
        raise InputError(f"{path}: no usable series")
    panel = Panel(values, tuple(unit_ids), tuple(time_ids), group_of_unit=groups, report=tuple(report))
    panel = standardize(panel, standardize_mode)
    return panel, [code_of[u] for u in unit_ids]


def load_groups(path) -> dict:
    """Read a two-column CSV ``unit,group`` into a dict."""
    rows = _read_rows(path)
    return {r[0].strip(): r[1].strip() for r in rows[1:] if len(r) >= 2}


# --------------------------------------------------------------------------- transforms


def fit_scaling(values: np.ndarray, mode: str, unit_ids: Sequence[str] | None = None) -> Scaling:
    if mode not in STANDARDIZE_MODES:
        raise InputError(f"unknown standardization mode {mode!r}; expected one of {STANDARDIZE_MODES}")
    N, T = values.shape
    if T < 2:
        raise InputError("standardization needs T >= 2")
    means = values.mean(axis=1) if mode in ("demean", "zscore") else np.zeros(N)
    if mode == "zscore":
        stds = values.std(axis=1, ddof=1)
        zero = np.flatnonzero(stds <= 1e-14 * np.maximum(1.0, np.abs(means)))
        if zero.size:
            name = unit_ids[zero[0]] if unit_ids is not None else str(zero[0])
            raise InputError(f"unit {name!r} has zero variance; cannot z-score")
    else:
        stds = np.ones(N)
    return Scaling(mode, means, stds)


def standardize(panel: Panel, mode: str = "zscore", scaling: Scaling | None = None) -> Panel:
    """Demean or z-score each unit over time (sample std, ``ddof=1``).

    Pass ``scaling`` to reuse parameters fitted elsewhere, e.g. on a training
    window.
    """
    if scaling is None:
        scaling = fit_scaling(panel.values, mode, panel.unit_ids)
    if scaling.mode == "none":
        return replace(panel, scaling=scaling)
    return replace(panel, values=scaling.apply(panel.values), scaling=scaling)


def subset_time(panel: Panel, index) -> Panel:
    idx = np.arange(panel.T)[index]
    return Panel(panel.values[:, idx], panel.unit_ids, tuple(panel.time_ids[i] for i in idx),
                 group_of_unit=panel.group_of_unit, report=panel.report)


def split_train_test(panel: Panel, fraction: float = 0.5, standardize_mode: str = "none") -> tuple[Panel, Panel]:
    """Chronological split; the training side gets ``floor(T * fraction)`` periods.

    With an active ``standardize_mode`` the scaling is fitted on the training
    window and applied unchanged to the test window.
    """
    if not 0.0 < fraction < 1.0:
        raise InputError(f"fraction must lie in (0, 1), got {fraction}")
    n_train = int(math.floor(panel.T * fraction))
    if n_train < 2 or panel.T - n_train < 2:
        raise InputError(f"fraction {fraction} leaves a side with fewer than 2 periods (T={panel.T})")
    train = subset_time(panel, slice(0, n_train))
    test = subset_time(panel, slice(n_train, None))
    if standardize_mode != "none":
        train = standardize(train, standardize_mode)
        test = standardize(test, scaling=train.scaling)
    return train, test


# --------------------------------------------------------------------------- tables


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a one-line header. Floats are written with ``repr`` (round-trippable)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_matrix(path, matrix, row_ids: Sequence[str], col_prefix: str = "f", index_name: str = "id") -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    header = [index_name, *(f"{col_prefix}{k + 1}" for k in range(matrix.shape[1]))]
    write_table(path, header, ([rid, *row] for rid, row in zip(row_ids, matrix)))


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    rows = _read_rows(path)
    ids = [r[0] for r in rows[1:]]
    return ids, np.array([[float(c) for c in r[1:]] for r in rows[1:]], dtype=float)

"""Hourly demand ingestion and the cleaning pipeline.

Loads the `Datetime,<ZONE>_MW` CSVs, canonicalizes them to a strictly
increasing hourly series, fills missing hours (linear interpolation for
short gaps, weekly-lag copy for long ones), clips IQR outliers, scales,
splits chronologically, and frames supervised lag windows.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateScaleError,
    EmptySeriesError,
    FormatError,
    SplitError,
    WindowError,
)

HOUR = np.timedelta64(1, "h")
WEEK_HOURS = 168
DEFAULT_MAX_GAP = 6
DEFAULT_IQR_K = 3.0
DEFAULT_SPLIT_RATIO = 0.8

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


@dataclass
class TimeSeries:
    """Ordered hourly demand observations for one utility zone.

    `values` are MW, float64; NaN marks a missing observation. Timestamps
    are UTC-naive wall-clock hours, strictly increasing.
    """

    zone: str
    timestamps: np.ndarray  # datetime64[s]
    values: np.ndarray  # float64, NaN = missing
    raw_rows: int = 0

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps.shape != self.values.shape:
            raise FormatError("timestamps and values must have equal length")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > np.timedelta64(0, "s")):
            raise FormatError("timestamps must be strictly increasing")
        observed = self.values[~np.isnan(self.values)]
        if observed.size and not np.all(np.isfinite(observed)):
            raise FormatError("non-missing values must be finite")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def observed(self) -> np.ndarray:
        return self.values[~np.isnan(self.values)]


def load_csv(path: str | Path, zone: str) -> TimeSeries:
    """Read one zone CSV into a sorted, deduplicated TimeSeries.

    Duplicate timestamps are averaged. Rows that fail to parse are
    skipped and counted; more than 1% bad rows fails the whole file.
    """
    path = Path(path)
    expected_header = ["Datetime", f"{zone}_MW"]
    stamps: list[int] = []  # epoch seconds
    values: list[float] = []
    bad_rows: list[int] = []
    raw_rows = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected header {expected_header}")
        if [h.strip() for h in header] != expected_header:
            raise FormatError(f"{path}: bad header {header!r}, expected {expected_header}")
        epoch = datetime(1970, 1, 1)
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            raw_rows += 1
            try:
                if len(row) != 2:
                    raise ValueError(f"expected 2 columns, got {len(row)}")
                ts = datetime.strptime(row[0].strip(), TIMESTAMP_FORMAT)
                raw = row[1].strip()
                value = float("nan") if raw == "" else float(raw)
                if not math.isnan(value) and not math.isfinite(value):
                    raise ValueError(f"non-finite value {raw!r}")
                if not math.isnan(value) and value < 0:
                    raise ValueError(f"negative demand {raw!r}")
            except ValueError:
                bad_rows.append(line_no)
                continue
            stamps.append(int((ts - epoch).total_seconds()))
            values.append(value)
    if raw_rows and len(bad_rows) / raw_rows > 0.01:
        raise FormatError(
            f"{path}: {len(bad_rows)} of {raw_rows} rows unparseable "
            f"(first bad line {bad_rows[0]})"
        )

    if not stamps:
        return TimeSeries(zone=zone, timestamps=np.array([], dtype="datetime64[s]"),
                          values=np.array([], dtype=np.float64), raw_rows=raw_rows)

    t = np.array(stamps, dtype=np.int64)
    v = np.array(values, dtype=np.float64)
    order = np.argsort(t, kind="stable")
    t, v = t[order], v[order]

    # collapse duplicate timestamps by averaging their observed values
    uniq, start_idx, counts = np.unique(t, return_index=True, return_counts=True)
    if len(uniq) != len(t):
        out = np.empty(len(uniq), dtype=np.float64)
        for i, (s, c) in enumerate(zip(start_idx, counts)):
            chunk = v[s:s + c]
            chunk = chunk[~np.isnan(chunk)]
            out[i] = chunk.mean() if chunk.size else float("nan")
        t, v = uniq, out

    return TimeSeries(zone=zone, timestamps=t.astype("datetime64[s]"), values=v,
                      raw_rows=raw_rows)


def handle_missing(ts: TimeSeries, max_gap: int = DEFAULT_MAX_GAP) -> TimeSeries:
    """Fill to one point per hour over the observed span.

    Interior gaps of at most `max_gap` hours are linearly interpolated.
    Longer gaps copy the value one week (168 h) earlier when that hour is
    known, falling back to the median of observed values.
    """
    if max_gap < 1:
        raise ConfigError(f"max_gap must be >= 1, got {max_gap}")
    obs_mask = ~np.isnan(ts.values)
    if not obs_mask.any():
        raise EmptySeriesError(f"{ts.zone}: no observed values")
    obs_t = ts.timestamps[obs_mask]
    obs_v = ts.values[obs_mask]

    start, end = obs_t[0], obs_t[-1]
    n = int((end - start) / HOUR) + 1
    grid = start + np.arange(n) * HOUR
    values = np.full(n, np.nan)
    idx = ((obs_t - start) / HOUR).astype(np.int64)
    on_grid = (obs_t - start) % HOUR == np.timedelta64(0, "s")
    values[idx[on_grid]] = obs_v[on_grid]
    # off-grid observations (non-hour-aligned) snap to the nearest floor hour
    if not on_grid.all():
        for i, keep in zip(idx[~on_grid], obs_v[~on_grid]):
            if np.isnan(values[i]):
                values[i] = keep

    if not np.isnan(values).any():
        return TimeSeries(zone=ts.zone, timestamps=grid, values=values, raw_rows=ts.raw_rows)

    median = float(np.median(obs_v))
    missing = np.isnan(values)
    run_start = None
    for i in range(n + 1):
        if i < n and missing[i]:
            if run_start is None:
                run_start = i
            continue
        if run_start is None:
            continue
        run_end = i  # exclusive; run_start > 0 and run_end < n by construction
        length = run_end - run_start
        if length <= max_gap:
            lo, hi = values[run_start - 1], values[run_end]
            frac = np.arange(1, length + 1) / (length + 1)
            values[run_start:run_end] = lo + frac * (hi - lo)
        else:
            for j in range(run_start, run_end):
                k = j - WEEK_HOURS
                if k >= 0 and not np.isnan(values[k]):
                    values[j] = values[k]
                else:
                    values[j] = median
        run_start = None

    return TimeSeries(zone=ts.zone, timestamps=grid, values=values, raw_rows=ts.raw_rows)


def handle_outliers(ts: TimeSeries, k: float = DEFAULT_IQR_K) -> TimeSeries:
    """Clip values outside [Q1 - k*IQR, Q3 + k*IQR] to the violated bound."""
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    if len(ts) == 0:
        return TimeSeries(zone=ts.zone, timestamps=ts.timestamps.copy(),
                          values=ts.values.copy(), raw_rows=ts.raw_rows)
    q1, q3 = np.nanpercentile(ts.values, [25.0, 75.0])
    iqr = q3 - q1
    lo, hi = q1 - k * iqr, q3 + k * iqr
    clipped = np.clip(ts.values, lo, hi)  # NaN passes through unchanged
    return TimeSeries(zone=ts.zone, timestamps=ts.timestamps.copy(), values=clipped,
                      raw_rows=ts.raw_rows)


ZSCORE = "zscore"
MINMAX = "minmax"


@dataclass(frozen=True)
class Scaler:
    """Affine normalization fit on the training split only.

    zscore: p1 = mean, p2 = population std.  minmax: p1 = min, p2 = max.
    """

    kind: str
    p1: float
    p2: float

    def apply(self, x: "TimeSeries | np.ndarray") -> np.ndarray:
        v = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
        if self.kind == ZSCORE:
            return (v - self.p1) / self.p2
        return (v - self.p1) / (self.p2 - self.p1)

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        s = np.asarray(scaled, dtype=np.float64)
        if self.kind == ZSCORE:
            return s * self.p2 + self.p1
        return s * (self.p2 - self.p1) + self.p1


def fit_scaler(train: "TimeSeries | np.ndarray", kind: str = ZSCORE) -> Scaler:
    v = train.values if isinstance(train, TimeSeries) else np.asarray(train, dtype=np.float64)
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise EmptySeriesError("cannot fit scaler on empty series")
    if kind == ZSCORE:
        mean = float(v.mean())
        std = float(v.std())  # population (divide-by-n) std
        if std <= 0.0:
            raise DegenerateScaleError("zscore scaler needs a non-constant series")
        return Scaler(kind=ZSCORE, p1=mean, p2=std)
    if kind == MINMAX:
        lo, hi = float(v.min()), float(v.max())
        if hi <= lo:
            raise DegenerateScaleError("minmax scaler needs max > min")
        return Scaler(kind=MINMAX, p1=lo, p2=hi)
    raise ConfigError(f"unknown scaler kind {kind!r}")


def split(ts: TimeSeries, ratio: float = DEFAULT_SPLIT_RATIO) -> tuple[TimeSeries, TimeSeries]:
    """Chronological split: first floor(ratio*n) points train, rest test."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ratio must be in (0,1), got {ratio}")
    n = len(ts)
    if n == 0:
        raise EmptySeriesError("cannot split empty series")
    cut = int(math.floor(ratio * n))
    if cut == 0 or cut == n:
        raise SplitError(f"ratio {ratio} leaves an empty side for n={n}")
    train = TimeSeries(zone=ts.zone, timestamps=ts.timestamps[:cut].copy(),
                       values=ts.values[:cut].copy(), raw_rows=ts.raw_rows)
    test = TimeSeries(zone=ts.zone, timestamps=ts.timestamps[cut:].copy(),
                      values=ts.values[cut:].copy(), raw_rows=ts.raw_rows)
    return train, test


@dataclass
class WindowedDataset:
    """Supervised pairs: a lag window of scaled values and the value
    `horizon` steps past the window's end."""

    inputs: np.ndarray  # (count, timesteps) float64
    targets: np.ndarray  # (count,) float64
    timesteps: int
    horizon: int

    def __len__(self) -> int:
        return len(self.targets)


def make_windows(scaled: np.ndarray, timesteps: int, horizon: int = 1) -> WindowedDataset:
    """Frame `scaled` into windows; window i covers [i, i+timesteps) and
    targets index i + timesteps + horizon - 1."""
    if timesteps < 1 or horizon < 1:
        raise ConfigError(f"timesteps and horizon must be >= 1, got {timesteps}, {horizon}")
    v = np.asarray(scaled, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigError("make_windows expects a 1-D value array")
    n = len(v)
    count = n - timesteps - horizon + 1
    if count < 1:
        raise WindowError(
            f"series of length {n} too short for timesteps={timesteps}, horizon={horizon}"
        )
    inputs = np.empty((count, timesteps), dtype=np.float64)
    for i in range(timesteps):
        inputs[:, i] = v[i:i + count]
    targets = v[timesteps + horizon - 1:timesteps + horizon - 1 + count].copy()
    return WindowedDataset(inputs=inputs, targets=targets, timesteps=timesteps, horizon=horizon)


@dataclass
class PreprocessStats:
    """Bookkeeping emitted by the cleaning pipeline for the cache sidecar."""

    zone: str
    raw_rows: int
    points: int
    gaps_filled: int
    outliers_clipped: int
    scaler: Scaler | None = None
    split_ratio: float = DEFAULT_SPLIT_RATIO
    train_points: int = 0
    test_points: int = 0


def preprocess(
    ts: TimeSeries,
    max_gap: int = DEFAULT_MAX_GAP,
    iqr_k: float = DEFAULT_IQR_K,
    scaler_kind: str = ZSCORE,
    split_ratio: float = DEFAULT_SPLIT_RATIO,
) -> tuple[TimeSeries, Scaler, PreprocessStats]:
    """Full cleaning pipeline: fill, clip, chronological split, and a
    scaler fit on the training portion only. Returns the cleaned (still
    MW-unit) series; callers apply the scaler where needed."""
    observed_before = int((~np.isnan(ts.values)).sum())
    filled = handle_missing(ts, max_gap=max_gap)
    gaps = len(filled) - observed_before
    clipped = handle_outliers(filled, k=iqr_k)
    outliers = int(np.sum(clipped.values != filled.values))
    train, test = split(clipped, ratio=split_ratio)
    scaler = fit_scaler(train, kind=scaler_kind)
    stats = PreprocessStats(
        zone=ts.zone,
        raw_rows=ts.raw_rows,
        points=len(clipped),
        gaps_filled=gaps,
        outliers_clipped=outliers,
        scaler=scaler,
        split_ratio=split_ratio,
        train_points=len(train),
        test_points=len(test),
    )
    return clipped, scaler, stats


def save_cache(ts: TimeSeries, stats: PreprocessStats, csv_path: str | Path,
               meta_path: str | Path) -> None:
    """Write the cleaned series in the input CSV schema plus a JSON sidecar."""
    csv_path, meta_path = Path(csv_path), Path(meta_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"Datetime,{ts.zone}_MW\n")
        for t, v in zip(ts.timestamps.astype("datetime64[s]"), ts.values):
            stamp = str(t).replace("T", " ")
            fh.write(f"{stamp},{v!r}\n")
    meta = {
        "zone": stats.zone,
        "raw_rows": stats.raw_rows,
        "points": stats.points,
        "gaps_filled": stats.gaps_filled,
        "outliers_clipped": stats.outliers_clipped,
        "split_ratio": stats.split_ratio,
        "train_points": stats.train_points,
        "test_points": stats.test_points,
        "scaler": None if stats.scaler is None else {
            "kind": stats.scaler.kind, "p1": stats.scaler.p1, "p2": stats.scaler.p2,
        },
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_cache(csv_path: str | Path, meta_path: str | Path) -> tuple[TimeSeries, Scaler | None, dict]:
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    ts = load_csv(csv_path, meta["zone"])
    scaler = None
    if meta.get("scaler"):
        s = meta["scaler"]
        scaler = Scaler(kind=s["kind"], p1=float(s["p1"]), p2=float(s["p2"]))
    return ts, scaler, meta

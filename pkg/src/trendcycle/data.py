"""Loading, transforming and standardising quarterly macro series."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import yaml

TRANSFORMATIONS = ("levels", "log_levels_x100", "yoy_pct")

# default transformation per mnemonic; quantities and oil prices in 100*log levels,
# rates and survey expectations in percent levels, price indices as YoY log rates
DEFAULT_TRANSFORMS = {
    "y": "log_levels_x100",
    "e": "log_levels_x100",
    "u": "levels",
    "oil": "log_levels_x100",
    "pi": "yoy_pct",
    "pi_c": "yoy_pct",
    "uom": "levels",
    "spf": "levels",
    "pi_exp": "levels",
    "baltic": "log_levels_x100",
    "gip": "log_levels_x100",
}
KNOWN_MNEMONICS = frozenset(DEFAULT_TRANSFORMS)

_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[-_ ]?[Qq]([1-4])\s*$")


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def parse_quarters(labels: Sequence) -> pd.PeriodIndex:
    """Parse date labels such as ``"1984Q1"`` or ISO dates into quarterly periods.

    Raises DataError if a label cannot be parsed or if the dates are not
    strictly increasing with a spacing of exactly one quarter.
    """
    periods = []
    for lab in labels:
        s = str(lab)
        m = _QUARTER_RE.match(s)
        if m:
            periods.append(pd.Period(year=int(m.group(1)), quarter=int(m.group(2)), freq="Q"))
            continue
        try:
            ts = pd.Timestamp(s)
        except (ValueError, TypeError) as exc:
            raise DataError(f"malformed date {s!r} in date column") from exc
        if ts is pd.NaT:
            raise DataError(f"malformed date {s!r} in date column")
        periods.append(ts.to_period("Q"))
    idx = pd.PeriodIndex(periods, freq="Q")
    if len(idx) > 1:
        steps = np.diff(idx.asi8)
        if np.any(steps != 1):
            raise DataError("non-quarterly spacing in date column")
    return idx


def quarter_range(start, end) -> pd.PeriodIndex:
    return pd.period_range(pd.Period(start, freq="Q"), pd.Period(end, freq="Q"), freq="Q")


@dataclass(frozen=True)
class RawSeries:
    """A single quarterly series with its declared transformation.

    ``values`` uses NaN as the missing marker. ``transformed`` records whether
    :func:`transform` has already been applied.
    """

    id: str
    dates: pd.PeriodIndex
    values: np.ndarray
    transformation: str = "levels"
    transformed: bool = False

    def __post_init__(self):
        if self.transformation not in TRANSFORMATIONS:
            raise DataError(f"unknown transformation {self.transformation!r} for {self.id}")
        dates = pd.PeriodIndex(self.dates, freq="Q")
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or len(values) != len(dates):
            raise DataError(f"series {self.id}: values and dates differ in length")
        if len(dates) > 1 and np.any(np.diff(dates.asi8) != 1):
            raise DataError(f"series {self.id}: non-quarterly spacing")
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def _coerce_schema(schema) -> dict[str, tuple[str, str]]:
    out = {}
    for col, spec in dict(schema).items():
        if isinstance(spec, str):
            mnem, tr = spec, None
        elif isinstance(spec, Mapping):
            mnem, tr = spec.get("mnemonic"), spec.get("transformation")
        else:
            mnem, tr = spec
        if mnem not in KNOWN_MNEMONICS:
            raise DataError(f"column {col!r}: unknown mnemonic {mnem!r}")
        tr = tr or DEFAULT_TRANSFORMS[mnem]
        if tr not in TRANSFORMATIONS:
            raise DataError(f"column {col!r}: unknown transformation {tr!r}")
        out[str(col)] = (mnem, tr)
    return out


def load_schema(path) -> dict:
    """Read a YAML schema file mapping columns to mnemonics and transformations."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    return doc.get("columns", doc)


def load_csv(path, schema: Mapping, date_column: str | None = None) -> list[RawSeries]:
    """Read a CSV with one date column and one column per mapped mnemonic.

    ``schema`` maps CSV column names to a mnemonic string, a
    ``(mnemonic, transformation)`` pair or a ``{"mnemonic": .., "transformation": ..}``
    mapping. Cells that do not parse as numbers become NaN.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    schema = _coerce_schema(schema)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if frame.shape[1] == 0:
        raise DataError(f"{path}: empty file")
    date_column = date_column or frame.columns[0]
    if date_column not in frame.columns:
        raise DataError(f"{path}: date column {date_column!r} not found")
    dates = parse_quarters(frame[date_column].tolist())
    out = []
    for col, (mnem, tr) in schema.items():
        if col not in frame.columns:
            raise DataError(f"{path}: column {col!r} listed in schema is missing")
        vals = np.array([_to_float(v) for v in frame[col]])
        out.append(RawSeries(mnem, dates, vals, tr))
    return out


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return math.nan


def transform(series: RawSeries) -> RawSeries:
    """Apply the declared transformation.

    ``levels`` is the identity, ``log_levels_x100`` gives ``100 ln x`` and
    ``yoy_pct`` gives the four-quarter log difference times 100, whose first
    four entries are missing.
    """
    if series.transformed:
        return series
    x = np.asarray(series.values, dtype=float)
    tr = series.transformation
    if tr == "levels":
        out = x.copy()
    else:
        bad = np.flatnonzero(np.isfinite(x) & (x <= 0))
        if bad.size:
            raise DataError(
                f"series {series.id}: non-positive value {x[bad[0]]} at {series.dates[bad[0]]} "
                f"under {tr} transform"
            )
        logx = np.log(x)
        if tr == "log_levels_x100":
            out = 100.0 * logx
        else:
            if len(x) < 5:
                raise DataError(f"series {series.id}: yoy_pct needs at least 5 observations")
            out = np.full_like(x, np.nan)
            out[4:] = 100.0 * (logx[4:] - logx[:-4])
    return replace(series, values=out, transformed=True)


def inverse_transform(series: RawSeries) -> RawSeries:
    """Undo ``levels`` or ``log_levels_x100``; YoY rates are not invertible."""
    if not series.transformed:
        return series
    x = np.asarray(series.values, dtype=float)
    if series.transformation == "levels":
        out = x.copy()
    elif series.transformation == "log_levels_x100":
        out = np.exp(x / 100.0)
    else:
        raise DataError("yoy_pct has no inverse without the initial price levels")
    return replace(series, values=out, transformed=False)


def diff_scale(x: np.ndarray) -> float:
    """Sample standard deviation (ddof=1) of first differences over adjacent non-missing pairs."""
    dx = np.diff(np.asarray(x, dtype=float))
    dx = dx[np.isfinite(dx)]
    if dx.size < 2:
        return float("nan")
    return float(np.std(dx, ddof=1))


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Estimation-ready panel on a common quarterly index.

    ``raw`` holds the transformed series in their natural units and ``values``
    the standardised data ``raw / scale_factors``. Missing entries are NaN.
    """

    ids: tuple
    dates: pd.PeriodIndex
    raw: np.ndarray
    scale_factors: np.ndarray
    transformations: tuple = ()
    synthetic: bool = False
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        raw = np.array(self.raw, dtype=float, ndmin=2)
        ids = tuple(self.ids)
        if raw.shape != (len(self.dates), len(ids)):
            raise DataError(f"panel shape {raw.shape} does not match dates/ids")
        scales = np.asarray(self.scale_factors, dtype=float).copy()
        if scales.shape != (len(ids),) or not np.all(np.isfinite(scales) & (scales > 0)):
            raise DataError(f"scale factors must be strictly positive, got {scales}")
        trs = tuple(self.transformations) or ("levels",) * len(ids)
        vals = raw / scales
        for a in (raw, scales, vals):
            a.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "dates", pd.PeriodIndex(self.dates, freq="Q"))
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "scale_factors", scales)
        object.__setattr__(self, "transformations", trs)
        object.__setattr__(self, "values", vals)

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def start(self) -> pd.Period:
        return self.dates[0]

    @property
    def end(self) -> pd.Period:
        return self.dates[-1]

    def scale(self, name: str) -> float:
        return float(self.scale_factors[self.ids.index(name)])

    @classmethod
    def from_raw(cls, ids, dates, raw, transformations=(), synthetic=False) -> "TimeSeriesPanel":
        """Build a panel computing scale factors from the data themselves."""
        raw = np.array(raw, dtype=float, ndmin=2)
        scales = np.empty(raw.shape[1])
        for j, name in enumerate(ids):
            col = raw[:, j]
            if not np.any(np.isfinite(col)):
                raise DataError(f"series {name} is entirely missing in the window")
            s = diff_scale(col)
            if not np.isfinite(s) or s <= 0:
                raise DataError(f"series {name}: first differences have zero or undefined spread")
            scales[j] = s
        return cls(tuple(ids), pd.PeriodIndex(dates, freq="Q"), raw, scales, tuple(transformations), synthetic)

    def window(self, start=None, end=None) -> "TimeSeriesPanel":
        """Sub-panel on ``[start, end]`` with scale factors recomputed on that window."""
        start = self.start if start is None else pd.Period(start, freq="Q")
        end = self.end if end is None else pd.Period(end, freq="Q")
        mask = (self.dates >= start) & (self.dates <= end)
        if not mask.any():
            raise DataError(f"empty window {start}..{end}")
        return TimeSeriesPanel.from_raw(
            self.ids, self.dates[mask], self.raw[mask], self.transformations, self.synthetic
        )

    def select(self, ids: Sequence[str]) -> "TimeSeriesPanel":
        """Reorder/select columns, keeping the existing scale factors."""
        idx = [self.ids.index(i) for i in ids]
        return TimeSeriesPanel(
            tuple(ids), self.dates, self.raw[:, idx], self.scale_factors[idx],
            tuple(self.transformations[i] for i in idx), self.synthetic,
        )

    def to_frame(self, standardized: bool = False) -> pd.DataFrame:
        data = self.values if standardized else self.raw
        return pd.DataFrame(data, index=self.dates, columns=list(self.ids))


def assemble_panel(series: Sequence[RawSeries], window=None) -> TimeSeriesPanel:
    """Transform, align and standardise a list of series over ``window``.

    ``window`` is a ``(start, end)`` pair of quarter labels; by default the span
    covering every series is used.
    """
    if not series:
        raise DataError("assemble_panel needs at least one series")
    ids = [s.id for s in series]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate series ids: {ids}")
    transformed = [transform(s) for s in series]
    if window is None:
        start = min(s.dates[0] for s in transformed)
        end = max(s.dates[-1] for s in transformed)
    else:
        start, end = (pd.Period(w, freq="Q") for w in window)
    if end < start:
        raise DataError(f"empty window {start}..{end}")
    index = quarter_range(start, end)
    raw = np.full((len(index), len(series)), np.nan)
    for j, s in enumerate(transformed):
        col = pd.Series(np.asarray(s.values), index=s.dates).reindex(index)
        raw[:, j] = col.to_numpy(dtype=float)
    return TimeSeriesPanel.from_raw(ids, index, raw, [s.transformation for s in series])


def write_panel_csv(panel: TimeSeriesPanel, path, standardized: bool = False) -> None:
    frame = panel.to_frame(standardized)
    frame.index = [str(p) for p in frame.index]
    frame.index.name = "date"
    frame.to_csv(path, na_rep="NA", float_format="%.17g")

"""Typical-meteorological-year (TMY) ambient temperature input.

Reads PVGIS-style TMY CSV exports: free-form header lines, a column header
row containing the time column and the dry-bulb temperature column
(``T2m`` by default), hourly data rows stamped ``YYYYMMDD:HHMM``, then an
optional footer. Typical years splice months from different calendar years,
so timestamps are coerced onto one reference year before the monotonicity
check.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from typing import Mapping

import numpy as np

from .errors import ParseError, RangeError

REFERENCE_YEAR = 2001  # non-leap
_TIME_COLUMNS = ("time(UTC)", "time", "timestamp", "Time")


@dataclass(frozen=True)
class AmbientSeries:
    """Hourly temperatures with step-hold interpolation.

    ``times`` are naive UTC ``datetime64[m]`` values. ``typical`` series are
    year-agnostic: lookups are mapped onto ``REFERENCE_YEAR``.
    """

    times: np.ndarray
    temperatures: np.ndarray
    typical: bool = True
    source: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype="datetime64[m]")
        v = np.asarray(self.temperatures, dtype=np.float64)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "temperatures", v)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and temperatures must be 1-D and equally long")
        if t.size > 1 and not (np.diff(t.astype(np.int64)) > 0).all():
            raise ValueError("timestamps must be strictly increasing")
        if not np.isfinite(v).all():
            raise ValueError("temperatures must be finite")

    def __len__(self):
        return int(self.times.shape[0])

    def at(self, when: datetime) -> float:
        return lookup_ambient(self, when)


def _parse_stamp(text: str) -> datetime:
    text = text.strip()
    for fmt in ("%Y%m%d:%H%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M",
                "%Y-%m-%dT%H:%M"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unrecognised timestamp {text!r}")


def _coerce(dt: datetime) -> datetime:
    if dt.month == 2 and dt.day == 29:
        dt = dt.replace(day=28)
    return dt.replace(year=REFERENCE_YEAR)


def parse_tmy_csv(path_or_buffer, temperature_column: str = "T2m",
                  coerce_year: bool = True) -> AmbientSeries:
    """Parse a TMY CSV file into an :class:`AmbientSeries`.

    Unknown columns are ignored. Raises :class:`ParseError` (with the 1-based
    file line) for a missing temperature column, malformed rows or
    non-increasing timestamps.
    """
    if hasattr(path_or_buffer, "read"):
        text = path_or_buffer.read()
        source = getattr(path_or_buffer, "name", "<buffer>")
    else:
        source = os.fspath(path_or_buffer)
        with open(source, newline="", encoding="utf-8-sig") as fh:
            text = fh.read()
    lines = text.splitlines()

    header_idx = None
    for i, line in enumerate(lines):
        cells = [c.strip() for c in next(csv.reader([line]), [])]
        if any(c in _TIME_COLUMNS for c in cells) and len(cells) > 1:
            header_idx = i
            header = cells
            break
    if header_idx is None:
        raise ParseError("no header row with a time column found")
    if temperature_column not in header:
        raise ParseError(f"temperature column {temperature_column!r} missing", header_idx + 1)
    t_col = next(i for i, c in enumerate(header) if c in _TIME_COLUMNS)
    v_col = header.index(temperature_column)

    times: list[datetime] = []
    temps: list[float] = []
    for i in range(header_idx + 1, len(lines)):
        line = lines[i]
        if not line.strip() or not line.lstrip()[:1].isdigit():
            break  # footer
        cells = next(csv.reader([line]))
        lineno = i + 1
        try:
            stamp = _parse_stamp(cells[t_col])
            value = float(cells[v_col])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed row: {exc}", lineno) from None
        if not math.isfinite(value):
            raise ParseError("non-finite temperature", lineno)
        if coerce_year:
            stamp = _coerce(stamp)
        if times and stamp <= times[-1]:
            raise ParseError(f"timestamp {stamp:%Y-%m-%d %H:%M} is not after the previous row",
                             lineno)
        times.append(stamp)
        temps.append(value)
    if not times:
        raise ParseError("no data rows", header_idx + 2)
    return AmbientSeries(np.array(times, dtype="datetime64[m]"), np.array(temps),
                         typical=coerce_year, source=source)


def _naive_utc(when: datetime) -> datetime:
    if when.tzinfo is not None:
        when = when.astimezone(timezone.utc).replace(tzinfo=None)
    return when


def lookup_ambient(series: AmbientSeries, when: datetime) -> float:
    """Step-hold value of the row at or immediately before ``when``."""
    when = _naive_utc(when)
    if series.typical:
        when = _coerce(when)
    t = np.datetime64(when, "m")
    if t < series.times[0]:
        raise RangeError(f"{when} precedes the series start {series.times[0]}")
    step = np.timedelta64(60, "m")
    if len(series) > 1:
        step = np.min(np.diff(series.times))
    if t >= series.times[-1] + step:
        raise RangeError(f"{when} is past the series end {series.times[-1]}")
    idx = int(np.searchsorted(series.times, t, side="right")) - 1
    return float(series.temperatures[idx])


@dataclass(frozen=True)
class SeriesAmbient:
    """Ambient source for the simulator: ``lookup(hour)`` reads the series at
    ``start + hour``."""

    series: AmbientSeries
    start: datetime

    def lookup(self, hour: float) -> float:
        return lookup_ambient(self.series, self.start + timedelta(hours=float(hour)))


def write_tmy_csv(path, series: AmbientSeries, latitude: float = 0.0, longitude: float = 0.0,
                  note: str = "") -> None:
    """Write ``series`` in the PVGIS-like layout ``parse_tmy_csv`` reads."""
    buf = io.StringIO()
    buf.write(f"Latitude (decimal degrees): {latitude}\n")
    buf.write(f"Longitude (decimal degrees): {longitude}\n")
    if note:
        buf.write(f"Note: {note}\n")
    buf.write("time(UTC),T2m\n")
    for t, v in zip(series.times.astype(datetime), series.temperatures):
        buf.write(f"{t:%Y%m%d:%H%M},{v:.2f}\n")
    buf.write("\nT2m: 2-m air temperature (degree Celsius)\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


@lru_cache(maxsize=16)
def load_tmy(path: str, temperature_column: str = "T2m") -> AmbientSeries:
    """Cached :func:`parse_tmy_csv` keyed by path and column."""
    return parse_tmy_csv(path, temperature_column)


@dataclass(frozen=True)
class TmyReference:
    """Ambient taken from a TMY file.

    With ``at`` set the value at that instant is held constant; otherwise the
    series follows the simulation clock.
    """

    path: str
    column: str = "T2m"
    at: datetime | None = None

    def bind(self, start: datetime | None):
        series = load_tmy(os.fspath(self.path), self.column)
        if self.at is not None:
            return lookup_ambient(series, self.at)
        if start is None:
            raise RangeError("a time-varying TMY ambient needs a simulation start time")
        return SeriesAmbient(series, start)


def bind_ambient(sources: Mapping, start: datetime | None) -> dict:
    """Resolve ``{ambient_id: float | TmyReference}`` for a run starting at
    ``start``."""
    return {k: (v.bind(start) if isinstance(v, TmyReference) else float(v))
            for k, v in sources.items()}

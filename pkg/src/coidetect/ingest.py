"""Loading and alignment of station metadata and fixed-cadence temperature series.

Input formats: one registry CSV (station_id, latitude, longitude, elevation,
municipality) and one long-format CSV per station (timestamp, value) with
ISO-8601 UTC timestamps. Values are degrees Celsius; an empty or "nan" value
field marks a missing reading.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError


class MissingColumn(DataError):
    pass


class DuplicateStationId(DataError):
    pass


class CoordinateOutOfRange(DataError):
    pass


class NonMonotonicTimestamps(DataError):
    pass


class CadenceViolation(DataError):
    pass


class UnparseableValue(DataError):
    pass


class UnknownStation(DataError):
    pass


class IncompatibleCadence(DataError):
    pass


REGISTRY_COLUMNS = ("station_id", "latitude", "longitude", "elevation")


@dataclass(frozen=True)
class Station:
    station_id: str
    latitude: float
    longitude: float
    elevation: float
    municipality: str = ""


@dataclass(frozen=True)
class StationRegistry:
    """Station identities with coordinates and elevation."""

    entries: tuple[Station, ...]

    def __post_init__(self):
        seen = set()
        for st in self.entries:
            if not st.station_id:
                raise DataError("registry entry with empty station_id")
            if st.station_id in seen:
                raise DuplicateStationId(f"duplicate station_id {st.station_id!r}")
            seen.add(st.station_id)
            if not -90.0 <= st.latitude <= 90.0 or not -180.0 <= st.longitude <= 180.0:
                raise CoordinateOutOfRange(
                    f"station {st.station_id!r}: ({st.latitude}, {st.longitude})"
                )
            if not np.isfinite(st.elevation):
                raise CoordinateOutOfRange(f"station {st.station_id!r}: non-finite elevation")

    @property
    def station_ids(self) -> tuple[str, ...]:
        return tuple(st.station_id for st in self.entries)

    def get(self, station_id: str) -> Station:
        for st in self.entries:
            if st.station_id == station_id:
                return st
        raise UnknownStation(f"station {station_id!r} not in registry")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ReadingSeries:
    """One station's readings on a complete regular time grid.

    `timestamps` are epoch seconds, strictly increasing with constant spacing
    equal to `cadence`. `values` holds one float per timestamp; NaN marks a
    missing reading.
    """

    station_id: str
    timestamps: np.ndarray
    values: np.ndarray
    cadence: int

    def __post_init__(self):
        ts, vals = np.asarray(self.timestamps), np.asarray(self.values)
        if len(ts) != len(vals):
            raise DataError(f"{self.station_id}: {len(ts)} timestamps vs {len(vals)} values")
        if len(ts) > 1:
            gaps = np.diff(ts)
            if np.any(gaps <= 0):
                raise NonMonotonicTimestamps(f"{self.station_id}: timestamps not increasing")
            if np.any(gaps != self.cadence):
                raise CadenceViolation(f"{self.station_id}: grid spacing != {self.cadence} s")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class GapPolicy:
    """How align() treats missing samples.

    mode "interpolate" linearly fills interior gaps of at most `max_gap`
    consecutive samples; longer gaps and leading/trailing gaps stay missing.
    mode "mark" leaves every gap missing. Stations whose final missing
    fraction exceeds `missing_cap` are dropped from the panel.
    """

    mode: str = "interpolate"
    max_gap: int = 6
    missing_cap: float = 0.2

    def __post_init__(self):
        if self.mode not in ("interpolate", "mark"):
            raise DataError(f"unknown gap policy mode {self.mode!r}")
        if self.max_gap < 0 or not 0.0 <= self.missing_cap <= 1.0:
            raise DataError("invalid gap policy parameters")


@dataclass(frozen=True)
class AlignedPanel:
    """Stations x timestamps matrix on one shared regular grid."""

    station_ids: tuple[str, ...]
    grid: np.ndarray
    matrix: np.ndarray
    cadence: int
    missing_fractions: tuple[float, ...]
    dropped: tuple[tuple[str, float], ...] = ()

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    @property
    def n_samples(self) -> int:
        return len(self.grid)

    def row(self, station_id: str) -> np.ndarray:
        return self.matrix[self.station_ids.index(station_id)]

    def series(self, station_id: str) -> ReadingSeries:
        return ReadingSeries(station_id, self.grid.copy(), self.row(station_id).copy(), self.cadence)


def parse_timestamp(text: str) -> int:
    """ISO-8601 text -> epoch seconds. Naive timestamps are taken as UTC."""
    dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_registry(path: str | Path) -> StationRegistry:
    """Read the station metadata CSV and validate every row."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REGISTRY_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path.name}: missing column(s) {', '.join(missing)}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            sid = (row["station_id"] or "").strip()
            if not sid:
                raise MissingColumn(f"{path.name}:{lineno}: empty station_id")
            if any(sid == e.station_id for e in entries):
                raise DuplicateStationId(f"{path.name}:{lineno}: duplicate station_id {sid!r}")
            try:
                lat = float(row["latitude"])
                lon = float(row["longitude"])
                elev = float(row["elevation"])
            except (TypeError, ValueError) as exc:
                raise UnparseableValue(f"{path.name}:{lineno}: {exc}") from None
            if not -90.0 <= lat <= 90.0:
                raise CoordinateOutOfRange(f"{path.name}:{lineno}: latitude {lat}")
            if not -180.0 <= lon <= 180.0:
                raise CoordinateOutOfRange(f"{path.name}:{lineno}: longitude {lon}")
            if not np.isfinite(elev):
                raise CoordinateOutOfRange(f"{path.name}:{lineno}: elevation {elev}")
            entries.append(Station(sid, lat, lon, elev, (row.get("municipality") or "").strip()))
    return StationRegistry(tuple(entries))


def _parse_value(text: str | None, where: str) -> float:
    text = (text or "").strip()
    if text == "" or text.lower() == "nan":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise UnparseableValue(f"{where}: bad value {text!r}") from None


def load_series(path: str | Path, station_id: str, cadence: int = 600) -> ReadingSeries:
    """Read one station's (timestamp, value) CSV onto a regular grid.

    Timestamps must be strictly increasing and lie on the grid implied by the
    first row and `cadence`; skipped grid slots become missing readings.
    """
    path = Path(path)
    stamps: list[int] = []
    vals: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "timestamp" not in header or "value" not in header:
            raise MissingColumn(f"{path.name}: need timestamp,value columns")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path.name}:{lineno}"
            try:
                ts = parse_timestamp(row["timestamp"])
            except (TypeError, ValueError):
                raise UnparseableValue(f"{where}: bad timestamp {row['timestamp']!r}") from None
            if stamps:
                if ts <= stamps[-1]:
                    raise NonMonotonicTimestamps(f"{where}: timestamp not increasing")
                if (ts - stamps[0]) % cadence != 0:
                    raise CadenceViolation(f"{where}: timestamp off the {cadence} s grid")
            stamps.append(ts)
            vals.append(_parse_value(row["value"], where))
    if not stamps:
        warnings.warn(f"{path.name}: no data rows, empty series", stacklevel=2)
        return ReadingSeries(station_id, np.empty(0, dtype=np.int64), np.empty(0), cadence)
    grid = np.arange(stamps[0], stamps[-1] + cadence, cadence, dtype=np.int64)
    values = np.full(len(grid), np.nan)
    values[(np.asarray(stamps, dtype=np.int64) - stamps[0]) // cadence] = vals
    return ReadingSeries(station_id, grid, values, cadence)


def _interpolate_row(values: np.ndarray, max_gap: int) -> np.ndarray:
    """Fill interior NaN runs of length <= max_gap with the line through the
    bracketing observations. Edge runs are never filled."""
    out = values.copy()
    isnan = np.isnan(out)
    if not isnan.any() or isnan.all():
        return out
    idx = np.flatnonzero(~isnan)
    run_start = None
    for pos in range(idx[0] + 1, idx[-1]):
        if isnan[pos] and run_start is None:
            run_start = pos
        if not isnan[pos] and run_start is not None:
            run_len = pos - run_start
            if run_len <= max_gap:
                lo, hi = run_start - 1, pos
                frac = (np.arange(run_start, pos) - lo) / (hi - lo)
                out[run_start:pos] = out[lo] + frac * (out[hi] - out[lo])
            run_start = None
    return out


def align(
    registry: StationRegistry,
    series: list[ReadingSeries] | tuple[ReadingSeries, ...],
    policy: GapPolicy = GapPolicy(),
) -> AlignedPanel:
    """Merge per-station series onto the union grid and apply the gap policy.

    Stations exceeding the missing-fraction cap are dropped and reported in
    the panel's `dropped` field; every retained row conforms to the shared
    grid. Station order follows the registry.
    """
    if not series:
        raise DataError("align: no series given")
    known = set(registry.station_ids)
    for s in series:
        if s.station_id not in known:
            raise UnknownStation(f"series for unknown station {s.station_id!r}")
    cadence = series[0].cadence
    if any(s.cadence != cadence for s in series):
        raise IncompatibleCadence("series cadences differ")
    nonempty = [s for s in series if len(s)]
    if not nonempty:
        raise DataError("align: all series empty")
    t0 = min(int(s.timestamps[0]) for s in nonempty)
    t1 = max(int(s.timestamps[-1]) for s in nonempty)
    for s in nonempty:
        if (int(s.timestamps[0]) - t0) % cadence != 0:
            raise IncompatibleCadence(f"{s.station_id}: grid phase differs")
    grid = np.arange(t0, t1 + cadence, cadence, dtype=np.int64)

    by_id = {s.station_id: s for s in series}
    order = [sid for sid in registry.station_ids if sid in by_id]
    rows, kept_ids, fractions, dropped = [], [], [], []
    for sid in order:
        s = by_id[sid]
        row = np.full(len(grid), np.nan)
        if len(s):
            offset = (int(s.timestamps[0]) - t0) // cadence
            row[offset : offset + len(s)] = s.values
        if policy.mode == "interpolate":
            row = _interpolate_row(row, policy.max_gap)
        frac = float(np.isnan(row).mean())
        if frac > policy.missing_cap:
            dropped.append((sid, frac))
            continue
        rows.append(row)
        kept_ids.append(sid)
        fractions.append(frac)
    if not rows:
        raise DataError("align: every station exceeded the missing-fraction cap")
    return AlignedPanel(
        station_ids=tuple(kept_ids),
        grid=grid,
        matrix=np.vstack(rows),
        cadence=cadence,
        missing_fractions=tuple(fractions),
        dropped=tuple(dropped),
    )

"""Temporal, spatial, and elevation similarity matrices and their fusion.

Temporal similarity is the rank correlation of two stations' readings
(Pearson correlation of average-ranked values over the pairwise-complete
overlap). Spatial and elevation similarity apply a Gaussian decay
exp(-d^2 / (2 sigma^2)) to pairwise distances, with sigma the population
standard deviation of the distinct pairwise distances. The fused matrix is
the entrywise convex combination of the three.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import AlignedPanel, StationRegistry


class InsufficientOverlap(DataError):
    pass


class ZeroSigma(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class WeightSumViolation(DataError):
    pass


class DegenerateSeries(UserWarning):
    """A station's readings are constant; its rank correlations are set to 0."""


EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class FusionWeights:
    w_temporal: float = 1.0 / 3.0
    w_spatial: float = 1.0 / 3.0
    w_elevation: float = 1.0 / 3.0

    def __post_init__(self):
        if min(self.w_temporal, self.w_spatial, self.w_elevation) < 0:
            raise WeightSumViolation("fusion weights must be non-negative")
        total = self.w_temporal + self.w_spatial + self.w_elevation
        if abs(total - 1.0) > 1e-12:
            raise WeightSumViolation(f"fusion weights sum to {total!r}, expected 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_temporal, self.w_spatial, self.w_elevation)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric station-by-station similarity with provenance metadata."""

    station_ids: tuple[str, ...]
    values: np.ndarray
    kind: str
    value_range: tuple[float, float]
    sigma: float | None = None
    weights: FusionWeights | None = None

    def __post_init__(self):
        v = self.values
        n = len(self.station_ids)
        if v.shape != (n, n):
            raise DimensionMismatch(f"{self.kind}: matrix shape {v.shape} for {n} stations")
        if not np.allclose(v, v.T, atol=0.0, rtol=0.0, equal_nan=False):
            raise DataError(f"{self.kind}: matrix not symmetric")
        if not np.all(np.diag(v) == 1.0):
            raise DataError(f"{self.kind}: diagonal entries must be 1")

    @property
    def n(self) -> int:
        return len(self.station_ids)


def average_rank(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties receiving the mean rank of their group."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    new_group = np.empty(len(sx), dtype=bool)
    new_group[0] = True
    new_group[1:] = sx[1:] != sx[:-1]
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], len(sx))
    group_rank = 0.5 * (starts + ends - 1) + 1.0
    ranks = np.empty(len(x))
    ranks[order] = group_rank[np.cumsum(new_group) - 1]
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return np.nan
    return float(da @ db) / denom


def _rank_corr(x: np.ndarray, y: np.ndarray) -> float:
    return _pearson(average_rank(x), average_rank(y))


def spearman_matrix(panel: AlignedPanel, min_overlap: int = 3) -> SimilarityMatrix:
    """Pairwise rank correlation of station rows over their common samples.

    Missing samples are handled pairwise-complete: each pair is ranked over
    the timestamps where both stations report. A constant row yields 0
    against every partner (DegenerateSeries warning).
    """
    m = panel.matrix
    n = panel.n_stations
    finite = np.isfinite(m)
    for i, sid in enumerate(panel.station_ids):
        row = m[i][finite[i]]
        if len(row) and np.all(row == row[0]):
            warnings.warn(DegenerateSeries(f"station {sid} is constant"), stacklevel=2)
    out = np.eye(n)
    complete = bool(finite.all())
    if complete:
        ranks = np.vstack([average_rank(m[i]) for i in range(n)])
        centered = ranks - ranks.mean(axis=1, keepdims=True)
        norms = np.sqrt((centered**2).sum(axis=1))
        for i in range(n):
            for j in range(i + 1, n):
                if m.shape[1] < min_overlap:
                    raise InsufficientOverlap(f"pair ({i}, {j}): {m.shape[1]} samples")
                denom = norms[i] * norms[j]
                r = float(centered[i] @ centered[j]) / denom if denom > 0 else 0.0
                out[i, j] = out[j, i] = r
    else:
        for i in range(n):
            for j in range(i + 1, n):
                mask = finite[i] & finite[j]
                count = int(mask.sum())
                if count < min_overlap:
                    raise InsufficientOverlap(f"pair ({i}, {j}): {count} overlapping samples")
                r = _rank_corr(m[i, mask], m[j, mask])
                out[i, j] = out[j, i] = 0.0 if np.isnan(r) else r
    return SimilarityMatrix(panel.station_ids, out, "temporal", (-1.0, 1.0))


def pairwise_distances(registry: StationRegistry, metric: str = "euclidean-degrees") -> np.ndarray:
    """n x n distance matrix between station coordinates."""
    lat = np.array([st.latitude for st in registry.entries])
    lon = np.array([st.longitude for st in registry.entries])
    if metric == "euclidean-degrees":
        d = np.hypot(lat[:, None] - lat[None, :], lon[:, None] - lon[None, :])
    elif metric == "haversine-km":
        phi = np.radians(lat)
        lam = np.radians(lon)
        dphi = phi[:, None] - phi[None, :]
        dlam = lam[:, None] - lam[None, :]
        a = np.sin(dphi / 2) ** 2 + np.cos(phi)[:, None] * np.cos(phi)[None, :] * np.sin(dlam / 2) ** 2
        d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    else:
        raise DataError(f"unknown distance metric {metric!r}")
    np.fill_diagonal(d, 0.0)
    return d


def elevation_differences(registry: StationRegistry) -> np.ndarray:
    e = np.array([st.elevation for st in registry.entries])
    return np.abs(e[:, None] - e[None, :])


def _pair_sigma(d: np.ndarray) -> float:
    """Population std over the n(n-1)/2 distinct unordered pair distances."""
    iu = np.triu_indices(d.shape[0], k=1)
    return float(np.std(d[iu]))


def _gaussian_decay(d: np.ndarray, sigma: float | None, kind: str) -> tuple[np.ndarray, float]:
    if sigma is None:
        sigma = _pair_sigma(d)
    if sigma <= 0.0:
        raise ZeroSigma(
            f"{kind}: all pairwise distances are equal, bandwidth is 0; "
            "pass an explicit sigma to proceed"
        )
    s = np.exp(-(d**2) / (2.0 * sigma**2))
    np.fill_diagonal(s, 1.0)
    return s, sigma


def spatial_matrix(
    registry: StationRegistry,
    metric: str = "euclidean-degrees",
    sigma: float | None = None,
) -> SimilarityMatrix:
    """Gaussian decay of pairwise coordinate distances."""
    if len(registry) < 2:
        raise DataError("spatial similarity needs at least 2 stations")
    d = pairwise_distances(registry, metric)
    s, sig = _gaussian_decay(d, sigma, "spatial")
    return SimilarityMatrix(registry.station_ids, s, "spatial", (0.0, 1.0), sigma=sig)


def elevation_matrix(registry: StationRegistry, sigma: float | None = None) -> SimilarityMatrix:
    """Gaussian decay of absolute pairwise elevation differences."""
    if len(registry) < 2:
        raise DataError("elevation similarity needs at least 2 stations")
    d = elevation_differences(registry)
    s, sig = _gaussian_decay(d, sigma, "elevation")
    return SimilarityMatrix(registry.station_ids, s, "elevation", (0.0, 1.0), sigma=sig)


def fuse(
    temporal: SimilarityMatrix,
    spatial: SimilarityMatrix,
    elevation: SimilarityMatrix,
    weights: FusionWeights = FusionWeights(),
    clip_negative_temporal: bool = False,
) -> SimilarityMatrix:
    """Entrywise convex combination of the three similarity matrices.

    Negative rank correlations pass through unchanged by default;
    `clip_negative_temporal` floors them at 0 before combining.
    """
    mats = (temporal, spatial, elevation)
    ids = temporal.station_ids
    if any(m.station_ids != ids for m in mats):
        raise DimensionMismatch("station orderings differ between matrices")
    t = np.maximum(temporal.values, 0.0) if clip_negative_temporal else temporal.values
    wt, ws, we = weights.as_tuple()
    fused = wt * t + ws * spatial.values + we * elevation.values
    fused = 0.5 * (fused + fused.T)
    np.fill_diagonal(fused, 1.0)
    lo = 0.0 if clip_negative_temporal else -wt
    return SimilarityMatrix(ids, fused, "fused", (lo, 1.0), weights=weights)


def matrix_to_csv(mat: SimilarityMatrix, path: str | Path) -> None:
    """Square CSV with a station_id header row and column."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", *mat.station_ids])
        for sid, row in zip(mat.station_ids, mat.values):
            writer.writerow([sid, *[repr(float(v)) for v in row]])


def matrix_to_json(mat: SimilarityMatrix, path: str | Path) -> None:
    doc = {
        "kind": mat.kind,
        "station_ids": list(mat.station_ids),
        "value_range": list(mat.value_range),
        "sigma": mat.sigma,
        "weights": list(mat.weights.as_tuple()) if mat.weights else None,
        "values": [[float(v) for v in row] for row in mat.values],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def matrix_from_json(path: str | Path) -> SimilarityMatrix:
    doc = json.loads(Path(path).read_text())
    weights = FusionWeights(*doc["weights"]) if doc.get("weights") else None
    return SimilarityMatrix(
        station_ids=tuple(doc["station_ids"]),
        values=np.asarray(doc["values"], dtype=np.float64),
        kind=doc["kind"],
        value_range=tuple(doc["value_range"]),
        sigma=doc.get("sigma"),
        weights=weights,
    )

"""Fingerprint datasets: ingestion, projection, imputation, normalization, splits.

The canonical CSV schema is `rssi_1,...,rssi_G,sf,lat,lon` (geographic)
or `rssi_1,...,rssi_G,sf,x_m,y_m` (planar, e.g. synthetic data), UTF-8,
LF line endings, '.' decimal separator, with the literal string MISSING
as the not-recorded sentinel. An adapter maps the published Antwerp
column layout (BS_* RSSI columns, -200 placeholders) onto it.

Datasets are immutable after construction; every transform returns a new
FingerprintSet.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

from .channel import SensitivityParams, check_sf, sensitivity

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
MISSING_SENTINEL = "MISSING"
ANTWERP_MISSING_VALUE = -200.0


@dataclass(frozen=True)
class Fingerprint:
    """One observation: per-gateway RSSI (NaN = missing), SF, ground truth."""

    rssi_dbm: np.ndarray
    sf: int
    position_m: Optional[np.ndarray] = None
    position_geo: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FingerprintSet:
    """Columnar fingerprint dataset (indexing yields Fingerprint views).

    Exactly one of position_m / position_geo must be supplied at
    construction; projection fills position_m and keeps the original
    geographic coordinates for reporting.
    """

    rssi_dbm: np.ndarray  # (n, G) float64, NaN marks missing
    sf: np.ndarray  # (n,) int
    position_m: Optional[np.ndarray] = None  # (n, 2) meters
    position_geo: Optional[np.ndarray] = None  # (n, 2) as (lat, lon) degrees
    projection_origin: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        rssi = np.atleast_2d(np.asarray(self.rssi_dbm, dtype=np.float64))
        object.__setattr__(self, "rssi_dbm", rssi)
        sf = np.asarray(self.sf, dtype=np.int64)
        if sf.shape != (rssi.shape[0],):
            raise ValueError("sf must be one value per sample")
        bad = (sf < 7) | (sf > 12)
        if np.any(bad):
            raise ValueError(f"spreading factors outside 7..12 in rows {np.nonzero(bad)[0][:5]}")
        object.__setattr__(self, "sf", sf)
        if self.position_m is None and self.position_geo is None:
            raise ValueError("one of position_m / position_geo is required")
        for name in ("position_m", "position_geo"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.float64)
                if val.shape != (rssi.shape[0], 2):
                    raise ValueError(f"{name} must have shape (n, 2)")
                object.__setattr__(self, name, val)

    @property
    def gateway_count(self) -> int:
        return self.rssi_dbm.shape[1]

    def __len__(self) -> int:
        return self.rssi_dbm.shape[0]

    def __getitem__(self, i: int) -> Fingerprint:
        return Fingerprint(
            rssi_dbm=self.rssi_dbm[i],
            sf=int(self.sf[i]),
            position_m=None if self.position_m is None else self.position_m[i],
            position_geo=None if self.position_geo is None else self.position_geo[i],
        )

    def __iter__(self) -> Iterator[Fingerprint]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices) -> "FingerprintSet":
        idx = np.asarray(indices, dtype=np.int64)
        return FingerprintSet(
            rssi_dbm=self.rssi_dbm[idx],
            sf=self.sf[idx],
            position_m=None if self.position_m is None else self.position_m[idx],
            position_geo=None if self.position_geo is None else self.position_geo[idx],
            projection_origin=self.projection_origin,
        )

    def missing_count(self) -> int:
        return int(np.isnan(self.rssi_dbm).sum())


def _format_value(v: float) -> str:
    return MISSING_SENTINEL if math.isnan(v) else repr(float(v))


def save_csv(samples: FingerprintSet, path) -> None:
    """Write the canonical CSV (geo columns when present, else planar).

    Stages to a temp file and renames, so a failed write never leaves a
    partial file at the final path.
    """
    geo = samples.position_geo is not None
    pos = samples.position_geo if geo else samples.position_m
    header = [f"rssi_{i + 1}" for i in range(samples.gateway_count)] + ["sf"]
    header += ["lat", "lon"] if geo else ["x_m", "y_m"]
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(samples)):
            row = [_format_value(v) for v in samples.rssi_dbm[i]]
            row.append(str(int(samples.sf[i])))
            row += [repr(float(pos[i, 0])), repr(float(pos[i, 1]))]
            fh.write(",".join(row) + "\n")
    os.replace(tmp, path)


def load_csv(path) -> FingerprintSet:
    """Load a canonical CSV. Malformed rows fail with their row number."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return FingerprintSet(
                rssi_dbm=np.empty((0, 0)), sf=np.empty(0, dtype=np.int64), position_m=np.empty((0, 2))
            )
        g = sum(1 for h in header if h.startswith("rssi_"))
        if g == 0 or header[:g] != [f"rssi_{i + 1}" for i in range(g)] or len(header) != g + 3 or header[g] != "sf":
            raise ValueError(f"{path}: not a canonical fingerprint CSV header: {header[:4]}...")
        geo = header[g + 1 :] == ["lat", "lon"]
        if not geo and header[g + 1 :] != ["x_m", "y_m"]:
            raise ValueError(f"{path}: position columns must be lat,lon or x_m,y_m")
        rssi_rows, sf_rows, pos_rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != g + 3:
                raise ValueError(f"{path}:{lineno}: expected {g + 3} columns, got {len(row)}")
            try:
                rssi_rows.append(
                    [math.nan if v == MISSING_SENTINEL else float(v) for v in row[:g]]
                )
                sf_rows.append(check_sf(int(row[g])))
                pos_rows.append((float(row[g + 1]), float(row[g + 2])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from exc
    rssi = np.asarray(rssi_rows, dtype=np.float64).reshape(len(rssi_rows), g)
    pos = np.asarray(pos_rows, dtype=np.float64).reshape(len(pos_rows), 2)
    sf = np.asarray(sf_rows, dtype=np.int64)
    log.info("loaded %d samples x %d gateways from %s", len(sf), g, path)
    if geo:
        return FingerprintSet(rssi_dbm=rssi, sf=sf, position_geo=pos)
    return FingerprintSet(rssi_dbm=rssi, sf=sf, position_m=pos)


def load_antwerp_csv(path, missing_value: float = ANTWERP_MISSING_VALUE) -> FingerprintSet:
    """Adapter for the published Antwerp LoRaWAN layout.

    Expects RSSI columns named BS_1/BS 1/..., an SF column, and
    Latitude/Longitude columns; `missing_value` placeholders (published
    convention: -200) become MISSING. Extra columns (HDOP, timestamps)
    are ignored.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        lower = [h.lower() for h in header]
        rssi_cols = [i for i, h in enumerate(lower) if h.startswith("bs") or h.startswith("rssi")]
        if not rssi_cols:
            raise ValueError(f"{path}: no BS*/RSSI* columns found")

        def find(*names):
            for name in names:
                if name in lower:
                    return lower.index(name)
            raise ValueError(f"{path}: missing required column (one of {names})")

        sf_col = find("sf", "spreading factor", "spreading_factor")
        lat_col = find("latitude", "lat")
        lon_col = find("longitude", "lon", "lng")
        rssi_rows, sf_rows, pos_rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                vals = [float(row[i]) for i in rssi_cols]
                rssi_rows.append([math.nan if v == missing_value else v for v in vals])
                sf_rows.append(check_sf(int(float(row[sf_col]))))
                pos_rows.append((float(row[lat_col]), float(row[lon_col])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from exc
    log.info("loaded %d Antwerp samples x %d gateways from %s", len(sf_rows), len(rssi_cols), path)
    return FingerprintSet(
        rssi_dbm=np.asarray(rssi_rows, dtype=np.float64).reshape(len(rssi_rows), len(rssi_cols)),
        sf=np.asarray(sf_rows, dtype=np.int64),
        position_geo=np.asarray(pos_rows, dtype=np.float64).reshape(len(pos_rows), 2),
    )


def project_to_plane(samples: FingerprintSet, origin: Optional[Tuple[float, float]] = None) -> FingerprintSet:
    """Equirectangular projection of geographic positions to local meters.

    x = R * dlon * cos(lat0), y = R * dlat (radians). Sub-0.5% distance
    distortion at city scale. The origin defaults to the dataset centroid;
    geographic coordinates are retained for reporting.
    """
    if samples.position_geo is None:
        raise ValueError("samples carry no geographic positions")
    geo = samples.position_geo
    if origin is None:
        origin = (float(geo[:, 0].mean()), float(geo[:, 1].mean()))
    lat0, lon0 = origin
    x = EARTH_RADIUS_M * np.radians(geo[:, 1] - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(geo[:, 0] - lat0)
    return FingerprintSet(
        rssi_dbm=samples.rssi_dbm,
        sf=samples.sf,
        position_m=np.column_stack([x, y]),
        position_geo=geo,
        projection_origin=(lat0, lon0),
    )


def unproject(position_m: np.ndarray, origin: Tuple[float, float]) -> np.ndarray:
    """Inverse of project_to_plane for points near the origin."""
    lat0, lon0 = origin
    xy = np.atleast_2d(np.asarray(position_m, dtype=np.float64))
    lat = lat0 + np.degrees(xy[:, 1] / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(xy[:, 0] / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return np.column_stack([lat, lon])


def impute_dataset(samples: FingerprintSet, sens: SensitivityParams) -> FingerprintSet:
    """Fill every missing entry with the sensitivity of that sample's SF."""
    rssi = samples.rssi_dbm.copy()
    for sf in np.unique(samples.sf):
        rows = samples.sf == sf
        block = rssi[rows]
        block[np.isnan(block)] = sensitivity(sens, int(sf))
        rssi[rows] = block
    return FingerprintSet(
        rssi_dbm=rssi,
        sf=samples.sf,
        position_m=samples.position_m,
        position_geo=samples.position_geo,
        projection_origin=samples.projection_origin,
    )


@dataclass(frozen=True)
class Normalizer:
    """Min-max feature scaling fitted on the training portion only.

    RSSI columns scale per gateway to [0, 1]; SF scales as (sf - 7) / 5;
    target positions scale by the training envelope. Degenerate columns
    (min == max) map to 0.5 and cannot be inverted.
    """

    rssi_min: np.ndarray
    rssi_max: np.ndarray
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]

    def features(self, samples: FingerprintSet, with_sf: bool = True) -> np.ndarray:
        """Normalized feature matrix: (n, G) or (n, G + 1) with the SF scalar."""
        if np.isnan(samples.rssi_dbm).any():
            raise ValueError("impute the dataset before normalizing")
        span = self.rssi_max - self.rssi_min
        out = np.empty_like(samples.rssi_dbm)
        ok = span > 0
        out[:, ok] = (samples.rssi_dbm[:, ok] - self.rssi_min[ok]) / span[ok]
        out[:, ~ok] = 0.5
        if with_sf:
            out = np.column_stack([out, (samples.sf.astype(np.float64) - 7.0) / 5.0])
        return out

    def features_row(self, rssi_dbm: np.ndarray, sf: int) -> np.ndarray:
        """Normalized (G + 1,) feature vector for a single sample."""
        span = self.rssi_max - self.rssi_min
        ok = span > 0
        out = np.full(len(rssi_dbm) + 1, 0.5)
        out[:-1][ok] = (rssi_dbm[ok] - self.rssi_min[ok]) / span[ok]
        out[-1] = (sf - 7.0) / 5.0
        return out

    def normalize_positions(self, position_m: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(position_m, dtype=np.float64))
        return np.column_stack(
            [
                _scale(xy[:, 0], self.x_range),
                _scale(xy[:, 1], self.y_range),
            ]
        )

    def denormalize_positions(self, normalized: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(normalized, dtype=np.float64))
        return np.column_stack(
            [
                _unscale(xy[:, 0], self.x_range),
                _unscale(xy[:, 1], self.y_range),
            ]
        )


def _scale(v, rng):
    lo, hi = rng
    return (v - lo) / (hi - lo) if hi > lo else np.full_like(v, 0.5)


def _unscale(v, rng):
    lo, hi = rng
    return v * (hi - lo) + lo


def normalizer_to_dict(norm: Normalizer) -> dict:
    """JSON-safe snapshot (stored in model checkpoints)."""
    return {
        "rssi_min": norm.rssi_min.tolist(),
        "rssi_max": norm.rssi_max.tolist(),
        "x_range": list(norm.x_range),
        "y_range": list(norm.y_range),
    }


def normalizer_from_dict(d: dict) -> Normalizer:
    return Normalizer(
        rssi_min=np.asarray(d["rssi_min"], dtype=np.float64),
        rssi_max=np.asarray(d["rssi_max"], dtype=np.float64),
        x_range=(float(d["x_range"][0]), float(d["x_range"][1])),
        y_range=(float(d["y_range"][0]), float(d["y_range"][1])),
    )


def fit_normalizer(train_samples: FingerprintSet) -> Normalizer:
    """Fit min-max parameters on (imputed, projected) training samples."""
    if np.isnan(train_samples.rssi_dbm).any():
        raise ValueError("impute the dataset before fitting the normalizer")
    if train_samples.position_m is None:
        raise ValueError("project positions to meters before fitting the normalizer")
    rssi_min = train_samples.rssi_dbm.min(axis=0)
    rssi_max = train_samples.rssi_dbm.max(axis=0)
    degenerate = np.nonzero(rssi_min == rssi_max)[0]
    if degenerate.size:
        log.warning("degenerate RSSI features (min == max) map to 0.5: columns %s", degenerate.tolist())
    pos = train_samples.position_m
    return Normalizer(
        rssi_min=rssi_min,
        rssi_max=rssi_max,
        x_range=(float(pos[:, 0].min()), float(pos[:, 0].max())),
        y_range=(float(pos[:, 1].min()), float(pos[:, 1].max())),
    )


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test index sets (plus any leftover rows)."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    leftover: np.ndarray

    def __post_init__(self):
        for name in ("train", "validation", "test", "leftover"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))


def split(n_samples: int, sizes: Tuple[int, int, int], seed: int) -> DatasetSplit:
    """Seeded shuffle then contiguous partition into (train, val, test).

    Sizes must not oversubscribe the dataset; any remainder lands in
    `leftover` so the partition accounts for every index.
    """
    n_train, n_val, n_test = (int(s) for s in sizes)
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split sizes must be >= 0")
    total = n_train + n_val + n_test
    if total > n_samples:
        raise ValueError(f"split sizes sum to {total} > {n_samples} samples")
    perm = np.random.default_rng(seed).permutation(n_samples)
    return DatasetSplit(
        train=perm[:n_train],
        validation=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val : total],
        leftover=perm[total:],
    )


def antwerp_split_sizes(n_samples: int = 123_528, val_fraction: float = 0.1) -> Tuple[int, int, int]:
    """The published split: 100,000 train / 23,528 test, validation carved from train."""
    n_test = n_samples - 100_000
    n_val = int(round(100_000 * val_fraction))
    return 100_000 - n_val, n_val, n_test


@dataclass(frozen=True)
class RadioMap:
    """Prepared dataset bundle: imputed planar samples, bounds, normalizer.

    `bounds` is the (x_min, x_max, y_min, y_max) envelope of every sample
    (the LoRa network footprint used for the search-window geometry);
    the normalizer is fitted on the training portion only.
    """

    samples: FingerprintSet
    bounds: Tuple[float, float, float, float]
    normalizer: Normalizer

    def __post_init__(self):
        x_min, x_max, y_min, y_max = self.bounds
        pos = self.samples.position_m
        if pos is not None and len(self.samples):
            eps = 1e-9
            if (
                pos[:, 0].min() < x_min - eps
                or pos[:, 0].max() > x_max + eps
                or pos[:, 1].min() < y_min - eps
                or pos[:, 1].max() > y_max + eps
            ):
                raise ValueError("bounds must enclose all sample positions")

    @property
    def gateway_count(self) -> int:
        return self.samples.gateway_count


def prepare_radio_map(
    samples: FingerprintSet,
    sens: SensitivityParams,
    split_sizes: Tuple[int, int, int],
    seed: int,
    bounds: Optional[Tuple[float, float, float, float]] = None,
) -> Tuple[RadioMap, DatasetSplit]:
    """Standard pipeline: impute, project if needed, split, fit normalizer."""
    if samples.position_m is None:
        samples = project_to_plane(samples)
    samples = impute_dataset(samples, sens)
    parts = split(len(samples), split_sizes, seed)
    normalizer = fit_normalizer(samples.subset(parts.train))
    if bounds is None:
        pos = samples.position_m
        bounds = (
            float(pos[:, 0].min()),
            float(pos[:, 0].max()),
            float(pos[:, 1].min()),
            float(pos[:, 1].max()),
        )
    return RadioMap(samples=samples, bounds=bounds, normalizer=normalizer), parts

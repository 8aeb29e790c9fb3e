"""Synthetic LoRa deployments and SF-aware fingerprint generation.

Builds an L x W area with M gateways, assigns spreading factors via a
pluggable policy, and produces fingerprint datasets through the channel
model (fresh shadowing per sample/gateway, sensitivity gating under the
sample's SF). Missing entries are left as NaN; imputation happens
downstream in the dataset pipeline.

Each sample derives its own RNG stream from (seed, sample index), so a
dataset is bit-identical whether generated serially or in parallel.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .channel import (
    LinkBudgetParams,
    SensitivityParams,
    check_sf,
    rssi_at,
    sensitivity,
)
from .data import FingerprintSet


@dataclass(frozen=True)
class NetworkLayout:
    """Deployment area (meters) and gateway positions."""

    length_m: float
    width_m: float
    gateways: np.ndarray  # (M, 2) positions in meters

    def __post_init__(self):
        if self.length_m <= 0 or self.width_m <= 0:
            raise ValueError("area dimensions must be > 0")
        gw = np.asarray(self.gateways, dtype=np.float64)
        if gw.ndim != 2 or gw.shape[1] != 2 or gw.shape[0] < 1:
            raise ValueError("gateways must be a (M, 2) array with M >= 1")
        if np.any(gw[:, 0] < 0) or np.any(gw[:, 0] > self.length_m) or np.any(gw[:, 1] < 0) or np.any(gw[:, 1] > self.width_m):
            raise ValueError("all gateways must lie inside [0, L] x [0, W]")
        object.__setattr__(self, "gateways", gw)

    @property
    def gateway_count(self) -> int:
        return self.gateways.shape[0]

    @property
    def diagonal_m(self) -> float:
        return math.hypot(self.length_m, self.width_m)


def place_gateways(length_m: float, width_m: float, count: int, scheme: str = "grid", seed: int = 0) -> NetworkLayout:
    """Place gateways on a row-major near-square grid or uniformly at random.

    The grid scheme is deterministic: cell centroids of a ceil(sqrt(M))-column
    grid, taken row by row. The random scheme is deterministic given the seed.
    """
    if count < 1:
        raise ValueError("gateway count must be >= 1")
    if length_m <= 0 or width_m <= 0:
        raise ValueError("area dimensions must be > 0")
    if scheme == "grid":
        cols = math.ceil(math.sqrt(count))
        rows = math.ceil(count / cols)
        positions = []
        for r in range(rows):
            for c in range(cols):
                if len(positions) == count:
                    break
                positions.append(((c + 0.5) * length_m / cols, (r + 0.5) * width_m / rows))
        gw = np.array(positions, dtype=np.float64)
    elif scheme == "uniform_random":
        rng = np.random.default_rng(seed)
        gw = rng.uniform([0.0, 0.0], [length_m, width_m], size=(count, 2))
    else:
        raise ValueError(f"unknown placement scheme {scheme!r}")
    return NetworkLayout(length_m=length_m, width_m=width_m, gateways=gw)


def default_sf_thresholds(layout: NetworkLayout) -> Tuple[float, ...]:
    """Distance bins for the ADR-like policy, scaled by the area diagonal."""
    diag = layout.diagonal_m
    return tuple(diag * f for f in (0.05, 0.10, 0.15, 0.20, 0.25))


@dataclass(frozen=True)
class SfPolicy:
    """How the network assigns an SF to a node.

    kind: "fixed" (always `sf`), "distance_binned" (SF7..SF12 by
    nearest-gateway distance against 5 ascending thresholds, an ADR
    stand-in), or "uniform_random".
    """

    kind: str
    sf: Optional[int] = None
    thresholds_m: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.sf is None:
                raise ValueError("fixed policy needs an sf")
            check_sf(self.sf)
        elif self.kind == "distance_binned":
            if self.thresholds_m is not None:
                t = tuple(float(x) for x in self.thresholds_m)
                if len(t) != 5 or not all(a < b for a, b in zip(t, t[1:])):
                    raise ValueError("thresholds_m must be 5 strictly ascending distances")
                object.__setattr__(self, "thresholds_m", t)
        elif self.kind != "uniform_random":
            raise ValueError(f"unknown SF policy kind {self.kind!r}")


def assign_sf(policy: SfPolicy, node_pos: Sequence[float], layout: NetworkLayout, rng: np.random.Generator) -> int:
    """Assign the spreading factor for one node under the given policy."""
    if policy.kind == "fixed":
        return policy.sf
    if policy.kind == "uniform_random":
        return int(rng.integers(7, 13))
    thresholds = policy.thresholds_m or default_sf_thresholds(layout)
    pos = np.asarray(node_pos, dtype=np.float64)
    nearest = float(np.min(np.hypot(layout.gateways[:, 0] - pos[0], layout.gateways[:, 1] - pos[1])))
    sf = 7
    for t in thresholds:
        if nearest >= t:
            sf += 1
    return sf


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    """Everything needed to generate one reproducible fingerprint dataset."""

    layout: NetworkLayout
    link: LinkBudgetParams = field(default_factory=LinkBudgetParams)
    sens: SensitivityParams = field(default_factory=SensitivityParams)
    sf_policy: SfPolicy = field(default_factory=lambda: SfPolicy(kind="distance_binned"))
    n_samples: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be > 0")


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # one independent, reproducible stream per sample
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_sample(spec: SyntheticDatasetSpec, index: int):
    """Generate sample `index`: (rssi vector with NaN gaps, sf, position)."""
    rng = _sample_rng(spec.rng_seed, index)
    layout = spec.layout
    pos = rng.uniform([0.0, 0.0], [layout.length_m, layout.width_m])
    sf = assign_sf(spec.sf_policy, pos, layout, rng)
    dist = np.hypot(layout.gateways[:, 0] - pos[0], layout.gateways[:, 1] - pos[1])
    dist = np.maximum(dist, spec.link.ref_distance_m)
    shadow = (
        rng.normal(0.0, spec.link.shadowing_sigma_db, size=layout.gateway_count)
        if spec.link.shadowing_sigma_db > 0
        else np.zeros(layout.gateway_count)
    )
    rssi = rssi_at(spec.link, dist, shadow)
    threshold = sensitivity(spec.sens, sf)
    rssi[~(rssi > threshold)] = np.nan
    return rssi, sf, pos


def generate_dataset(spec: SyntheticDatasetSpec) -> FingerprintSet:
    """Generate the full dataset described by `spec` (deterministic given seed)."""
    n, g = spec.n_samples, spec.layout.gateway_count
    rssi = np.empty((n, g), dtype=np.float64)
    sf = np.empty(n, dtype=np.int64)
    pos = np.empty((n, 2), dtype=np.float64)
    for i in range(n):
        rssi[i], sf[i], pos[i] = generate_sample(spec, i)
    return FingerprintSet(rssi_dbm=rssi, sf=sf, position_m=pos)

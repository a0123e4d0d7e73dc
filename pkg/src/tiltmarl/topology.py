"""Hexagonal multi-ring site layouts and per-episode network configurations.

Sites sit on a flat-topped hexagonal lattice in axial coordinates with the
center site at the origin.  Every site hosts three sector cells pointing at
azimuths 0/120/240 degrees (clockwise from north).  Cell ``k`` of site ``s``
has id ``3*s + k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError

SECTOR_AZIMUTHS = (0.0, 120.0, 240.0)
CARRIERS_GHZ = (0.7, 1.8, 2.1, 2.6)

# axial direction vectors, walked in this order to enumerate a ring
_AXIAL_DIRECTIONS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))


@dataclass(frozen=True)
class SiteLayout:
    sites: np.ndarray          # (n_sites, 2) meters
    site_ring: np.ndarray      # (n_sites,) ring index of every site
    cell_site: np.ndarray      # (n_cells,) owning site index
    cell_azimuth: np.ndarray   # (n_cells,) degrees
    rings: int
    inter_site_distance: float

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_cells(self) -> int:
        return len(self.cell_site)

    @property
    def cell_xy(self) -> np.ndarray:
        return self.sites[self.cell_site]

    def scaled(self, isd: float) -> "SiteLayout":
        """Same lattice with a different inter-site distance."""
        factor = isd / self.inter_site_distance
        return SiteLayout(
            sites=self.sites * factor,
            site_ring=self.site_ring,
            cell_site=self.cell_site,
            cell_azimuth=self.cell_azimuth,
            rings=self.rings,
            inter_site_distance=float(isd),
        )

    def coverage_polygon(self) -> np.ndarray:
        """Vertices of the hexagon enclosing all sites plus half an ISD margin."""
        radius = (self.rings + 0.5) * self.inter_site_distance
        # lattice directions of the flat-topped axial layout point at 30 + 60k degrees
        # (measured counter-clockwise from +x)
        angles = np.deg2rad(30.0 + 60.0 * np.arange(6))
        return np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])


def axial_to_xy(q: int, r: int, isd: float) -> tuple[float, float]:
    return isd * math.sqrt(3.0) / 2.0 * q, isd * (r + q / 2.0)


def hex_ring(radius: int) -> list[tuple[int, int]]:
    if radius == 0:
        return [(0, 0)]
    # start at the corner reached by walking `radius` steps along direction 4
    q, r = -radius, radius
    out = []
    for dq, dr in _AXIAL_DIRECTIONS:
        for _ in range(radius):
            out.append((q, r))
            q, r = q + dq, r + dr
    return out


def generate_hex_grid(rings: int, isd: float) -> SiteLayout:
    if rings < 0:
        raise ConfigError(f"rings must be >= 0, got {rings}")
    if not isd > 0:
        raise ConfigError(f"inter-site distance must be positive, got {isd}")
    xy, ring_of = [], []
    for ring in range(rings + 1):
        for q, r in hex_ring(ring):
            xy.append(axial_to_xy(q, r, isd))
            ring_of.append(ring)
    sites = np.asarray(xy, dtype=float)
    n_sites = len(sites)
    return SiteLayout(
        sites=sites,
        site_ring=np.asarray(ring_of, dtype=np.int64),
        cell_site=np.repeat(np.arange(n_sites), 3),
        cell_azimuth=np.tile(np.asarray(SECTOR_AZIMUTHS), n_sites),
        rings=rings,
        inter_site_distance=float(isd),
    )


def optimized_cells(layout: SiteLayout, optimized_rings: int) -> np.ndarray:
    """Sorted ids of every cell whose site lies in rings ``0..optimized_rings``."""
    if optimized_rings < 0 or optimized_rings >= layout.rings:
        raise ConfigError(
            f"optimized_rings={optimized_rings} leaves no buffer ring in a "
            f"{layout.rings}-ring layout"
        )
    site_mask = layout.site_ring <= optimized_rings
    return np.flatnonzero(site_mask[layout.cell_site])


@dataclass(frozen=True)
class ParameterRanges:
    """Closed integer ranges (min, max) sampled with step 1."""

    electrical_tilt_optimized: tuple[int, int] = (0, 15)
    electrical_tilt_other: tuple[int, int] = (4, 6)
    mechanical_tilt: tuple[int, int] = (0, 4)
    antenna_height: tuple[int, int] = (16, 30)
    inter_site_distance: tuple[int, int] = (1000, 2500)
    offered_traffic: tuple[int, int] = (4, 11)
    carriers: tuple[float, ...] = CARRIERS_GHZ

    def validate(self) -> None:
        for name in ("electrical_tilt_optimized", "electrical_tilt_other", "mechanical_tilt",
                     "antenna_height", "inter_site_distance", "offered_traffic"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"range {name} has min {lo} > max {hi}")
        if not self.carriers:
            raise ConfigError("at least one carrier frequency is required")

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterRanges":
        known = {k: tuple(v) for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown parameter ranges: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class EpisodeConfig:
    electrical_tilt: np.ndarray    # per cell, degrees
    mechanical_tilt: np.ndarray    # per cell, degrees
    antenna_height: np.ndarray     # per cell, meters
    carrier_ghz: float
    inter_site_distance: float
    offered_traffic: np.ndarray    # per cell, Mbps
    optimized: np.ndarray = field(repr=False)  # sorted cell ids
    rng_seed: int = 0

    def with_tilts(self, tilts: np.ndarray) -> "EpisodeConfig":
        return EpisodeConfig(
            electrical_tilt=np.asarray(tilts, dtype=float),
            mechanical_tilt=self.mechanical_tilt,
            antenna_height=self.antenna_height,
            carrier_ghz=self.carrier_ghz,
            inter_site_distance=self.inter_site_distance,
            offered_traffic=self.offered_traffic,
            optimized=self.optimized,
            rng_seed=self.rng_seed,
        )


def _draw(rng: np.random.Generator, bounds: tuple[int, int], size=None):
    lo, hi = bounds
    return rng.integers(lo, hi + 1, size=size)


def sample_episode_config(layout: SiteLayout, rng: np.random.Generator,
                          ranges: ParameterRanges | None = None,
                          optimized: Iterable[int] | None = None,
                          rng_seed: int = 0) -> EpisodeConfig:
    """Draw one random network configuration.

    ``layout`` only supplies the cell count here; callers rescale it to the
    sampled inter-site distance with :meth:`SiteLayout.scaled`.
    """
    ranges = ranges or ParameterRanges()
    ranges.validate()
    n = layout.n_cells
    opt = np.asarray(sorted(optimized) if optimized is not None else range(n), dtype=np.int64)
    is_opt = np.zeros(n, dtype=bool)
    is_opt[opt] = True

    isd = float(_draw(rng, ranges.inter_site_distance))
    carrier = float(ranges.carriers[rng.integers(len(ranges.carriers))])
    tilt_opt = _draw(rng, ranges.electrical_tilt_optimized, n)
    tilt_other = _draw(rng, ranges.electrical_tilt_other, n)
    etilt = np.where(is_opt, tilt_opt, tilt_other).astype(float)
    mtilt = _draw(rng, ranges.mechanical_tilt, n).astype(float)
    height = _draw(rng, ranges.antenna_height, n).astype(float)
    traffic = _draw(rng, ranges.offered_traffic, n).astype(float)
    return EpisodeConfig(
        electrical_tilt=etilt,
        mechanical_tilt=mtilt,
        antenna_height=height,
        carrier_ghz=carrier,
        inter_site_distance=isd,
        offered_traffic=traffic,
        optimized=opt,
        rng_seed=rng_seed,
    )


def write_layout_csv(layout: SiteLayout, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "cell_id", "x", "y", "azimuth"])
        for cell, site in enumerate(layout.cell_site):
            x, y = layout.sites[site]
            w.writerow([int(site), cell, repr(float(x)), repr(float(y)),
                        repr(float(layout.cell_azimuth[cell]))])

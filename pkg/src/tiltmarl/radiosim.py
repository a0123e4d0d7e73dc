"""Static Monte Carlo downlink evaluation of a tilted macro network.

One UE drop is made per episode; every tilt change only re-runs the
vertical-pattern part of the link budget, so geometry, path loss and the
horizontal pattern are cached in :class:`LinkGeometry`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError
from .topology import EpisodeConfig, SiteLayout


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = 46.0
    bandwidth_hz: float = 20e6
    re_bandwidth_hz: float = 15e3
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    g_max_dbi: float = 15.0
    front_to_back_db: float = 30.0     # A_m
    h_beamwidth_deg: float = 65.0
    v_beamwidth_deg: float = 10.0
    v_sidelobe_db: float = 30.0
    ue_height_m: float = 1.5
    min_distance_m: float = 10.0
    se_cap: float = 6.0                # bit/s/Hz
    per_ue_demand_mbps: float = 1.0

    @property
    def eirp_re_dbm(self) -> float:
        """Transmit power per resource element, before antenna gain."""
        return self.tx_power_dbm + 10.0 * math.log10(self.re_bandwidth_hz / self.bandwidth_hz)

    @property
    def noise_re_dbm(self) -> float:
        return (self.noise_density_dbm_hz + 10.0 * math.log10(self.re_bandwidth_hz)
                + self.noise_figure_db)

    @property
    def noise_re_mw(self) -> float:
        return 10.0 ** (self.noise_re_dbm / 10.0)


DEFAULT_RADIO = RadioParams()


def wrap_degrees(angle):
    """Map angles onto (-180, 180]."""
    out = np.mod(np.asarray(angle, dtype=float) + 180.0, 360.0) - 180.0
    return np.where(out == -180.0, 180.0, out)


def antenna_gain(horizontal_offset, vertical_offset, params: RadioParams = DEFAULT_RADIO):
    """Directional gain in dBi for offsets from boresight (degrees).

    The vertical offset is measured from the tilted boresight, i.e. callers
    subtract mechanical plus electrical tilt beforehand.
    """
    phi = wrap_degrees(horizontal_offset)
    theta = wrap_degrees(vertical_offset)
    a_h = -np.minimum(12.0 * (phi / params.h_beamwidth_deg) ** 2, params.front_to_back_db)
    a_v = -np.minimum(12.0 * (theta / params.v_beamwidth_deg) ** 2, params.v_sidelobe_db)
    return params.g_max_dbi - np.minimum(-(a_h + a_v), params.front_to_back_db)


def path_loss(distance_m, frequency_ghz, bs_height_m, params: RadioParams = DEFAULT_RADIO):
    """COST-231-Hata style urban macro loss in dB.

    Distances below ``params.min_distance_m`` are clamped.  The formula is
    used for all carriers, including those outside its nominal validity.
    """
    d_km = np.maximum(np.asarray(distance_m, dtype=float), params.min_distance_m) / 1000.0
    f_mhz = np.asarray(frequency_ghz, dtype=float) * 1000.0
    lh = np.log10(np.asarray(bs_height_m, dtype=float))
    return 46.3 + 33.9 * np.log10(f_mhz) - 13.82 * lh + (44.9 - 6.55 * lh) * np.log10(d_km)


@dataclass(frozen=True)
class UeDrop:
    positions: np.ndarray   # (n_ue, 2)
    per_ue_demand: float
    rng_seed: int = 0

    @property
    def n_ue(self) -> int:
        return len(self.positions)


def points_in_convex_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Vertices must be counter-clockwise; boundary points count as inside."""
    inside = np.ones(len(points), dtype=bool)
    for k in range(len(polygon)):
        ax, ay = polygon[k]
        bx, by = polygon[(k + 1) % len(polygon)]
        cross = (bx - ax) * (points[:, 1] - ay) - (by - ay) * (points[:, 0] - ax)
        inside &= cross >= -1e-9
    return inside


def drop_users(layout: SiteLayout, config: EpisodeConfig, rng: np.random.Generator,
               params: RadioParams = DEFAULT_RADIO) -> UeDrop:
    layout = _layout_for(layout, config)
    total = float(np.sum(config.offered_traffic))
    n_ue = int(round(total / params.per_ue_demand_mbps))
    if n_ue < 1:
        raise ConfigError("total offered traffic is zero; cannot drop users")
    polygon = layout.coverage_polygon()
    lo, hi = polygon.min(axis=0), polygon.max(axis=0)
    chunks, have = [], 0
    while have < n_ue:
        cand = rng.uniform(lo, hi, size=(2 * (n_ue - have) + 16, 2))
        cand = cand[points_in_convex_polygon(cand, polygon)]
        chunks.append(cand)
        have += len(cand)
    positions = np.concatenate(chunks)[:n_ue]
    return UeDrop(positions=positions, per_ue_demand=params.per_ue_demand_mbps,
                  rng_seed=config.rng_seed)


def _layout_for(layout: SiteLayout, config: EpisodeConfig) -> SiteLayout:
    if layout.inter_site_distance != config.inter_site_distance:
        return layout.scaled(config.inter_site_distance)
    return layout


@dataclass
class RadioSnapshot:
    rsrp: np.ndarray             # (n_ue, n_cell) dBm
    serving: np.ndarray          # (n_ue,)
    sinr: np.ndarray             # (n_ue,) dB
    snr: np.ndarray              # (n_ue,) dB on the serving link
    best_rsrp: np.ndarray        # (n_ue,) serving RSRP
    second_rsrp: np.ndarray      # (n_ue,) strongest non-serving RSRP
    serving_distance: np.ndarray  # (n_ue,) meters to the serving site
    throughput: np.ndarray       # (n_ue,) Mbps capacity share
    served: np.ndarray           # (n_ue,) Mbps actually served
    demand: np.ndarray           # (n_ue,)
    offered_traffic: np.ndarray  # (n_cell,) Mbps
    served_traffic: np.ndarray   # (n_cell,)
    congestion_rate: np.ndarray  # (n_cell,)
    n_served: np.ndarray         # (n_cell,) UE count per cell
    positions: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.rsrp.shape[1]


class LinkGeometry:
    """Tilt-independent part of the link budget for one layout, config and drop."""

    def __init__(self, layout: SiteLayout, config: EpisodeConfig, drop: UeDrop,
                 params: RadioParams = DEFAULT_RADIO):
        layout = _layout_for(layout, config)
        self.layout = layout
        self.params = params
        self.positions = np.asarray(drop.positions, dtype=float)
        self.demand = np.full(len(self.positions), float(drop.per_ue_demand))
        site_of = layout.cell_site
        delta = self.positions[:, None, :] - layout.sites[None, :, :]
        site_dist = np.hypot(delta[..., 0], delta[..., 1])      # (n_ue, n_site)
        # bearing clockwise from north
        site_bearing = np.degrees(np.arctan2(delta[..., 0], delta[..., 1]))
        self.site_distance = site_dist
        dist = site_dist[:, site_of]
        phi = wrap_degrees(site_bearing[:, site_of] - layout.cell_azimuth[None, :])
        heights = np.asarray(config.antenna_height, dtype=float)
        self.horiz_att = np.ascontiguousarray(
            -np.minimum(12.0 * (phi / params.h_beamwidth_deg) ** 2, params.front_to_back_db))
        ground = np.maximum(dist, params.min_distance_m)
        self.elevation = np.ascontiguousarray(
            np.degrees(np.arctan2(heights[None, :] - params.ue_height_m, ground)))
        self.path_loss = np.ascontiguousarray(
            path_loss(dist, config.carrier_ghz, heights[None, :], params))
        self.mechanical_tilt = np.asarray(config.mechanical_tilt, dtype=float)

    def rsrp(self, electrical_tilt: np.ndarray) -> np.ndarray:
        p = self.params
        total = np.ascontiguousarray(self.mechanical_tilt + np.asarray(electrical_tilt, dtype=float))
        return kernels.link_rsrp(self.elevation, self.horiz_att, self.path_loss, total,
                                 p.eirp_re_dbm, p.g_max_dbi, p.front_to_back_db,
                                 p.v_beamwidth_deg, p.v_sidelobe_db)

    def evaluate(self, electrical_tilt: np.ndarray) -> RadioSnapshot:
        return snapshot_from_rsrp(self.rsrp(electrical_tilt), self.demand, self.positions,
                                  self.site_distance, self.layout.cell_site, self.params)


def snapshot_from_rsrp(rsrp: np.ndarray, demand: np.ndarray, positions: np.ndarray,
                       site_distance: np.ndarray, cell_site: np.ndarray,
                       params: RadioParams = DEFAULT_RADIO) -> RadioSnapshot:
    n_ue, n_cell = rsrp.shape
    noise = params.noise_re_mw
    serving, sinr, best, second = kernels.serve(np.ascontiguousarray(rsrp), noise)
    snr = best - params.noise_re_dbm
    n_served = np.bincount(serving, minlength=n_cell)
    se = np.minimum(np.log2(1.0 + np.power(10.0, sinr / 10.0)), params.se_cap)
    link_mbps = se * params.bandwidth_hz / 1e6   # rate with the whole cell bandwidth
    alloc, satisfied = kernels.share_resources(serving, demand / link_mbps, n_cell)
    throughput = alloc * link_mbps
    served = np.where(satisfied, demand, np.minimum(demand, throughput))
    offered_cell = np.bincount(serving, weights=demand, minlength=n_cell)
    served_cell = np.bincount(serving, weights=served, minlength=n_cell)
    with np.errstate(invalid="ignore", divide="ignore"):
        congestion = np.where(offered_cell > 0, 1.0 - served_cell / offered_cell, 0.0)
    congestion = np.clip(congestion, 0.0, 1.0)
    return RadioSnapshot(
        rsrp=rsrp,
        serving=serving,
        sinr=sinr,
        snr=snr,
        best_rsrp=best,
        second_rsrp=second,
        serving_distance=site_distance[np.arange(n_ue), cell_site[serving]],
        throughput=throughput,
        served=served,
        demand=demand,
        offered_traffic=offered_cell,
        served_traffic=served_cell,
        congestion_rate=congestion,
        n_served=n_served,
        positions=positions,
    )


def evaluate_snapshot(layout: SiteLayout, config: EpisodeConfig, drop: UeDrop,
                      params: RadioParams = DEFAULT_RADIO) -> RadioSnapshot:
    return LinkGeometry(layout, config, drop, params).evaluate(config.electrical_tilt)


def write_snapshot_csv(snap: RadioSnapshot, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue_id", "x", "y", "serving", "rsrp_serving", "sinr", "throughput"])
        for u in range(len(snap.serving)):
            w.writerow([u, repr(float(snap.positions[u, 0])), repr(float(snap.positions[u, 1])),
                        int(snap.serving[u]), repr(float(snap.best_rsrp[u])),
                        repr(float(snap.sinr[u])), repr(float(snap.throughput[u]))])

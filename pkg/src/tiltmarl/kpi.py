"""Per-cell KPIs, neighbour aggregates, reward metric, reward and agent state."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .radiosim import RadioSnapshot
from .topology import EpisodeConfig, SiteLayout

N_FEATURES = 11
STATE_FEATURES = (
    "antenna_height", "electrical_tilt", "mechanical_tilt", "carrier_frequency",
    "mean_distance_5_enb", "overshooting", "overlap_high", "bad_coverage",
    "congestion", "neighbor_congestion_weighted", "interference_indicator",
)

REWARD_SCALE = 1000.0
RM_FLOOR = 0.01


@dataclass(frozen=True)
class KpiThresholds:
    good_coverage_dbm: float = -108.0
    good_quality_db: float = 3.0
    report_window_db: float = 6.0
    overlap_rsrp_dbm: float = -98.0
    overshoot_isd_factor: float = 1.5
    neighbor_count: int = 5


DEFAULT_THRESHOLDS = KpiThresholds()


@dataclass(frozen=True)
class KpiRecord:
    good_traffic: float
    congestion_rate: float
    good_coverage: float
    good_quality: float
    overshooting: float
    overlap_high: float
    bad_coverage: float
    interference_indicator: float
    gt_neigh: float
    cr_neigh: float


KPI_FIELDS = tuple(f.name for f in fields(KpiRecord))


@dataclass
class KpiTable:
    """Column-wise KPIs for every cell of one snapshot, plus the overlap matrix."""

    good_traffic: np.ndarray
    congestion_rate: np.ndarray
    good_coverage: np.ndarray
    good_quality: np.ndarray
    overshooting: np.ndarray
    overlap_high: np.ndarray
    bad_coverage: np.ndarray
    interference_indicator: np.ndarray
    gt_neigh: np.ndarray
    cr_neigh: np.ndarray
    overlap: np.ndarray     # (n_cell, n_cell) overlapping factors
    n_served: np.ndarray

    def record(self, cell: int) -> KpiRecord:
        return KpiRecord(**{name: float(getattr(self, name)[cell]) for name in KPI_FIELDS})

    def without_neighbors(self) -> "KpiTable":
        """Copy whose neighbour aggregates are replaced by the cell's own values."""
        out = KpiTable(**{f.name: getattr(self, f.name) for f in fields(self)})
        out.gt_neigh = self.good_traffic.copy()
        out.cr_neigh = self.congestion_rate.copy()
        return out


def overlap_factors(snapshot: RadioSnapshot,
                    window_db: float = DEFAULT_THRESHOLDS.report_window_db) -> np.ndarray:
    """Matrix whose ``[i, j]`` entry is the overlapping factor of neighbour j for cell i."""
    counts, _ = kernels.window_counts(np.ascontiguousarray(snapshot.rsrp),
                                      snapshot.serving, snapshot.best_rsrp, window_db)
    n = snapshot.n_served.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n[:, None] > 0, counts / n[:, None], 0.0)


def overlapping_factor(snapshot: RadioSnapshot, cell_i: int, cell_j: int,
                       window_db: float = DEFAULT_THRESHOLDS.report_window_db) -> float:
    if cell_i == cell_j:
        raise ValueError("overlapping factor needs two distinct cells")
    mine = snapshot.serving == cell_i
    if not mine.any():
        return 0.0
    hits = snapshot.rsrp[mine, cell_j] >= snapshot.best_rsrp[mine] - window_db
    return float(hits.mean())


def top_neighbors(overlap_row: np.ndarray, cell: int, k: int) -> np.ndarray:
    """Up to ``k`` neighbour ids with positive factor, strongest first, ties to lower id."""
    row = overlap_row.copy()
    row[cell] = 0.0
    order = np.argsort(-row, kind="stable")[:k]
    return order[row[order] > 0]


def neighbor_aggregates(good_traffic: np.ndarray, congestion: np.ndarray,
                        overlap: np.ndarray, cell: int,
                        k: int = DEFAULT_THRESHOLDS.neighbor_count) -> tuple[float, float]:
    nb = top_neighbors(overlap[cell], cell, k)
    if len(nb) == 0:
        return float(good_traffic[cell]), float(congestion[cell])
    w = overlap[cell, nb] / overlap[cell, nb].sum()
    return float(w @ good_traffic[nb]), float(w @ congestion[nb])


def network_kpis(snapshot: RadioSnapshot, layout: SiteLayout, config: EpisodeConfig,
                 thr: KpiThresholds = DEFAULT_THRESHOLDS) -> KpiTable:
    n_cell = snapshot.n_cells
    serving = snapshot.serving
    counts, n_window = kernels.window_counts(np.ascontiguousarray(snapshot.rsrp), serving,
                                             snapshot.best_rsrp, thr.report_window_db)
    n = snapshot.n_served.astype(float)
    safe = np.where(n > 0, n, 1.0)

    def ratio(mask):
        return np.bincount(serving, weights=mask.astype(float), minlength=n_cell) / safe

    cov = snapshot.best_rsrp >= thr.good_coverage_dbm
    qual = snapshot.sinr >= thr.good_quality_db
    isd = config.inter_site_distance
    good_coverage = ratio(cov)
    table = KpiTable(
        good_traffic=ratio(cov & qual),
        congestion_rate=np.asarray(snapshot.congestion_rate, dtype=float),
        good_coverage=good_coverage,
        good_quality=ratio(qual),
        overshooting=ratio(snapshot.serving_distance > thr.overshoot_isd_factor * isd),
        overlap_high=ratio((snapshot.best_rsrp >= thr.overlap_rsrp_dbm) & (n_window >= 2)),
        bad_coverage=np.where(n > 0, 1.0 - good_coverage, 0.0),
        interference_indicator=ratio(
            snapshot.second_rsrp >= snapshot.best_rsrp - thr.report_window_db),
        gt_neigh=np.zeros(n_cell),
        cr_neigh=np.zeros(n_cell),
        overlap=counts / safe[:, None],
        n_served=snapshot.n_served,
    )
    for c in range(n_cell):
        table.gt_neigh[c], table.cr_neigh[c] = neighbor_aggregates(
            table.good_traffic, table.congestion_rate, table.overlap, c, thr.neighbor_count)
    return table


def cell_kpis(snapshot: RadioSnapshot, layout: SiteLayout, config: EpisodeConfig, cell: int,
              thr: KpiThresholds = DEFAULT_THRESHOLDS) -> KpiRecord:
    return network_kpis(snapshot, layout, config, thr).record(cell)


def reward_metric(gt, cr, gt_neigh, cr_neigh):
    """RM = 1 + (GT + GT_neigh - CR - CR_neigh) / 2; works on scalars or arrays."""
    return 1.0 + 0.5 * (gt + gt_neigh - cr - cr_neigh)


def record_metric(kpi: KpiRecord) -> float:
    return reward_metric(kpi.good_traffic, kpi.congestion_rate, kpi.gt_neigh, kpi.cr_neigh)


def reward(rm_before, rm_after):
    """Relative change of the reward metric, scaled by 1000.

    The denominator is floored at 0.01 so a metric of exactly zero stays finite.
    """
    return REWARD_SCALE * (rm_after - rm_before) / np.maximum(rm_before, RM_FLOOR)


def mean_distance_to_closest_sites(layout: SiteLayout, k: int = 5) -> np.ndarray:
    """Per-site mean distance (m) to the ``k`` nearest other sites."""
    d = np.linalg.norm(layout.sites[:, None, :] - layout.sites[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    k = min(k, layout.n_sites - 1)
    if k == 0:
        return np.full(layout.n_sites, np.inf)
    return np.sort(d, axis=1)[:, :k].mean(axis=1)


def _features(height, etilt, mtilt, carrier_ghz, site_dist, overshooting, overlap_high,
              bad_coverage, congestion, neighbor_congestion, interference):
    n = len(height)
    state = np.column_stack([
        height / 30.0,
        etilt / 15.0,
        mtilt / 4.0,
        np.full(n, (carrier_ghz - 0.7) / 1.9),
        np.minimum(site_dist / 5000.0, 1.0),
        overshooting,
        overlap_high,
        bad_coverage,
        congestion,
        neighbor_congestion,
        interference,
    ])
    return np.clip(state, 0.0, 1.0)


def build_states(config: EpisodeConfig, layout: SiteLayout, kpis: KpiTable,
                 cells: np.ndarray, with_neighbors: bool = True,
                 site_distance: np.ndarray | None = None) -> np.ndarray:
    """(len(cells), 11) matrix of normalised agent states.

    ``layout`` must already be scaled to the episode's inter-site distance.
    The neighbour-blind variant zeroes the weighted neighbour congestion.
    """
    cells = np.asarray(cells)
    if site_distance is None:
        site_distance = mean_distance_to_closest_sites(layout)
    return _features(
        config.antenna_height[cells], config.electrical_tilt[cells],
        config.mechanical_tilt[cells], config.carrier_ghz,
        site_distance[layout.cell_site[cells]],
        kpis.overshooting[cells], kpis.overlap_high[cells], kpis.bad_coverage[cells],
        kpis.congestion_rate[cells],
        kpis.cr_neigh[cells] if with_neighbors else np.zeros(len(cells)),
        kpis.interference_indicator[cells],
    )


def build_state(config: EpisodeConfig, layout: SiteLayout, kpi: KpiRecord, cell: int,
                with_neighbors: bool = True) -> np.ndarray:
    dist = mean_distance_to_closest_sites(layout)[layout.cell_site[cell]]
    one = lambda v: np.array([float(v)])  # noqa: E731
    return _features(
        one(config.antenna_height[cell]), one(config.electrical_tilt[cell]),
        one(config.mechanical_tilt[cell]), config.carrier_ghz, one(dist),
        one(kpi.overshooting), one(kpi.overlap_high), one(kpi.bad_coverage),
        one(kpi.congestion_rate), one(kpi.cr_neigh if with_neighbors else 0.0),
        one(kpi.interference_indicator),
    )[0]

"""Crisp rule-based tilt controller used as the static benchmark policy.

Rules, first match wins:

1. coverage hole or congestion          -> uptilt (widen the footprint)
2. overshooting, overlap or interference -> downtilt (shrink the footprint)
3. otherwise                             -> keep
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kpi import KpiRecord, KpiTable
from .rlcore import DOWNTILT, KEEP, UPTILT


@dataclass(frozen=True)
class ExpertThresholds:
    bad_coverage_high: float = 0.10
    overshooting_high: float = 0.15
    overlap_high_thr: float = 0.30
    congestion_high: float = 0.05

    def __post_init__(self):
        for name, value in vars(self).items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"expert threshold {name}={value} outside [0, 1]")


def expert_actions(bad_coverage, congestion, overshooting, overlap_high, interference,
                   thr: ExpertThresholds = ExpertThresholds()) -> np.ndarray:
    widen = (np.asarray(bad_coverage) > thr.bad_coverage_high) | (
        np.asarray(congestion) > thr.congestion_high)
    shrink = ((np.asarray(overshooting) > thr.overshooting_high)
              | (np.asarray(overlap_high) > thr.overlap_high_thr)
              | (np.asarray(interference) > thr.overlap_high_thr))
    return np.where(widen, UPTILT, np.where(shrink, DOWNTILT, KEEP)).astype(np.int64)


def expert_action(kpi: KpiRecord, thr: ExpertThresholds = ExpertThresholds()) -> int:
    return int(expert_actions(kpi.bad_coverage, kpi.congestion_rate, kpi.overshooting,
                              kpi.overlap_high, kpi.interference_indicator, thr))


def expert_actions_for(table: KpiTable, cells, thr: ExpertThresholds = ExpertThresholds()):
    return expert_actions(table.bad_coverage[cells], table.congestion_rate[cells],
                          table.overshooting[cells], table.overlap_high[cells],
                          table.interference_indicator[cells], thr)

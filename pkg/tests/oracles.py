"""Brute-force reference implementations shared by the test modules.

Plain python loops over the RSRP matrix; nothing here calls the package's
KPI code, so agreement is an independent check.
"""
from tiltmarl.kpi import DEFAULT_THRESHOLDS


def brute_force_kpis(snap, isd, thr=DEFAULT_THRESHOLDS):
    """Per-UE loops over the RSRP matrix; no shared code with the module."""
    n_ue, n_cell = snap.rsrp.shape
    out = {k: [0.0] * n_cell for k in ("gt", "cov", "qual", "over", "ovl", "intf")}
    counts = [[0] * n_cell for _ in range(n_cell)]
    served = [0] * n_cell
    serving = []
    for u in range(n_ue):
        row = [float(v) for v in snap.rsrp[u]]
        s = max(range(n_cell), key=lambda c: (row[c], -c))
        serving.append(s)
        served[s] += 1
        best = row[s]
        others = sorted((row[c] for c in range(n_cell) if c != s), reverse=True)
        in_window = [c for c in range(n_cell) if c != s and row[c] >= best - thr.report_window_db]
        for c in in_window:
            counts[s][c] += 1
        cov = best >= thr.good_coverage_dbm
        qual = snap.sinr[u] >= thr.good_quality_db
        out["gt"][s] += cov and qual
        out["cov"][s] += cov
        out["qual"][s] += qual
        out["over"][s] += snap.serving_distance[u] > thr.overshoot_isd_factor * isd
        out["ovl"][s] += best >= thr.overlap_rsrp_dbm and len(in_window) >= 2
        out["intf"][s] += bool(others) and others[0] >= best - thr.report_window_db
    for k in out:
        out[k] = [v / served[c] if served[c] else 0.0 for c, v in enumerate(out[k])]
    factors = [[counts[i][j] / served[i] if served[i] else 0.0 for j in range(n_cell)]
               for i in range(n_cell)]
    return serving, out, factors


def brute_force_neighbors(gt, cr, factors, cell, k=5):
    cands = [(f, j) for j, f in enumerate(factors[cell]) if j != cell and f > 0]
    cands.sort(key=lambda t: (-t[0], t[1]))
    top = cands[:k]
    if not top:
        return gt[cell], cr[cell]
    total = sum(f for f, _ in top)
    return (sum(f * gt[j] for f, j in top) / total, sum(f * cr[j] for f, j in top) / total)

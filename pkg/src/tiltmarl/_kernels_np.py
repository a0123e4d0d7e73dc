"""Vectorised numpy kernels; used when the compiled extension is unavailable.

Signatures mirror ``_ckernels.pyx`` exactly.
"""
import numpy as np

BACKEND = "numpy"


def link_rsrp(elevation, horiz_att, path_loss, total_tilt, eirp_re_dbm,
              g_max, a_max, v_beamwidth, v_floor):
    """RSRP matrix (dBm) for every UE x cell link.

    ``horiz_att`` holds the (non-positive) horizontal pattern attenuation,
    ``elevation`` the angle below horizon of each UE seen from the cell.
    """
    theta = elevation - total_tilt[None, :]
    a_v = -np.minimum(12.0 * (theta / v_beamwidth) ** 2, v_floor)
    gain = g_max - np.minimum(-(horiz_att + a_v), a_max)
    return eirp_re_dbm + gain - path_loss


def serve(rsrp, noise_mw):
    """Best-server assignment, SINR (dB) and second-strongest RSRP per UE."""
    n_ue, n_cell = rsrp.shape
    serving = np.argmax(rsrp, axis=1)
    rows = np.arange(n_ue)
    best = rsrp[rows, serving]
    lin = np.power(10.0, rsrp / 10.0)
    signal = lin[rows, serving]
    lin[rows, serving] = 0.0
    interference = lin.sum(axis=1)
    sinr_db = 10.0 * np.log10(signal / (interference + noise_mw))
    if n_cell > 1:
        masked = rsrp.copy()
        masked[rows, serving] = -np.inf
        second = masked.max(axis=1)
    else:
        second = np.full(n_ue, -np.inf)
    return serving.astype(np.int64), sinr_db, best, second


def window_counts(rsrp, serving, best, window_db):
    """Overlap counts between serving cells and in-window neighbours.

    Returns ``(overlap, n_in_window)`` where ``overlap[i, j]`` counts UEs
    served by ``i`` that receive ``j`` within ``window_db`` of their
    serving RSRP, and ``n_in_window[u]`` is the number of such neighbours
    seen by UE ``u``.
    """
    n_ue, n_cell = rsrp.shape
    in_window = rsrp >= (best - window_db)[:, None]
    in_window[np.arange(n_ue), serving] = False
    u, j = np.nonzero(in_window)
    overlap = np.bincount(serving[u] * n_cell + j, minlength=n_cell * n_cell)
    overlap = overlap.reshape(n_cell, n_cell).astype(np.int64)
    return overlap, in_window.sum(axis=1).astype(np.int64)


def share_resources(serving, need, n_cell):
    """Max-min fair split of each cell's resources.

    ``need[u]`` is the resource fraction UE ``u`` requires to meet its demand.
    Returns ``(alloc, satisfied)``; unsatisfied UEs of a cell all receive the
    same water level.
    """
    order = np.lexsort((need, serving))
    cell = serving[order]
    x = need[order]
    counts = np.bincount(cell, minlength=n_cell)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(len(x)) - starts[cell]
    csum = np.cumsum(x)
    before = csum - x - (csum - x)[starts[cell]]
    level = (1.0 - before) / (counts[cell] - pos)
    # satisfied UEs form a prefix of each sorted group
    n_ue = len(x)
    first_bad = np.full(n_cell, n_ue, dtype=np.int64)
    bad = np.flatnonzero(x > level)
    np.minimum.at(first_bad, cell[bad], bad)
    cut = first_bad[cell]
    ok = np.arange(n_ue) < cut
    water = level[np.minimum(cut, n_ue - 1)]
    alloc_sorted = np.where(ok, x, water)
    alloc = np.empty_like(need)
    satisfied = np.empty(len(need), dtype=bool)
    alloc[order] = alloc_sorted
    satisfied[order] = ok
    return alloc, satisfied

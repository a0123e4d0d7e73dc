"""Time the compiled kernels against the numpy fallback on one snapshot.

    python3 benchmarks/bench_kernels.py [--rings 5] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from tiltmarl import _kernels_np
from tiltmarl.radiosim import DEFAULT_RADIO, LinkGeometry, drop_users
from tiltmarl.topology import generate_hex_grid, sample_episode_config

try:
    from tiltmarl import _ckernels
except ImportError:
    _ckernels = None


def workload(rings: int, seed: int = 0):
    base = generate_hex_grid(rings, 1000.0)
    rng = np.random.default_rng(seed)
    cfg = sample_episode_config(base, rng)
    geo = LinkGeometry(base, cfg, drop_users(base, cfg, rng))
    p = DEFAULT_RADIO
    total = np.ascontiguousarray(cfg.mechanical_tilt + cfg.electrical_tilt)
    rsrp_args = (geo.elevation, geo.horiz_att, geo.path_loss, total, p.eirp_re_dbm,
                 p.g_max_dbi, p.front_to_back_db, p.v_beamwidth_deg, p.v_sidelobe_db)
    rsrp = _kernels_np.link_rsrp(*rsrp_args)
    serving, sinr, best, _ = _kernels_np.serve(rsrp, p.noise_re_mw)
    se = np.minimum(np.log2(1 + 10 ** (sinr / 10)), p.se_cap)
    need = 1.0 / (se * 20.0)
    return {
        "link_rsrp": rsrp_args,
        "serve": (rsrp, p.noise_re_mw),
        "window_counts": (rsrp, serving, best, 6.0),
        "share_resources": (serving, need, rsrp.shape[1]),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rings", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    calls = workload(args.rings)
    n_ue, n_cell = calls["serve"][0].shape
    print(f"{n_ue} UEs x {n_cell} cells, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    backends = [_kernels_np] + ([_ckernels] if _ckernels else [])
    for name, fargs in calls.items():
        times = [min(timeit.repeat(lambda: getattr(m, name)(*fargs), number=1,
                                   repeat=args.repeat)) * 1e3 for m in backends]
        if len(times) == 2:
            print(f"{name:<16}{times[0]:>10.3f}{times[1]:>11.3f}{times[0] / times[1]:>8.1f}x")
        else:
            print(f"{name:<16}{times[0]:>10.3f}{'n/a':>11}")


if __name__ == "__main__":
    main()

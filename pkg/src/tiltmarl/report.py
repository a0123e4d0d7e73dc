"""Gain aggregation, trace persistence and chart rendering.

Everything reported is derived from the per-step network metrics, which are
persisted as CSV with ``repr`` floats so a report rebuilt from disk matches
the in-memory one bit for bit.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kpi import KPI_FIELDS
from .marl import NETWORK_METRICS, EpisodeTrace
from .rlcore import ACTION_NAMES

log = logging.getLogger(__name__)

GAIN_METRICS = ("good_traffic", "good_coverage", "good_quality")


def fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def parse(s: str) -> float:
    return float("nan") if s == "" else float(s)


@dataclass
class EpisodeMetrics:
    """Per-step network metrics of one episode; the unit the report is built from."""

    episode: int
    series: dict   # metric -> (steps + 1,) array

    @classmethod
    def from_trace(cls, trace: EpisodeTrace) -> "EpisodeMetrics":
        return cls(trace.episode, {m: np.asarray(trace.network[m]) for m in NETWORK_METRICS})

    @property
    def steps(self) -> int:
        return len(self.series["good_traffic"]) - 1


def steps_to_mitigation(congestion: np.ndarray) -> float:
    """First step where every optimized cell is uncongested; NaN if never."""
    hit = np.flatnonzero(np.asarray(congestion) == 0.0)
    return float(hit[0]) if len(hit) else float("nan")


def quartiles(values: np.ndarray) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(values, [25, 50, 75], method="linear")
    return float(q1), float(med), float(q3)


@dataclass
class GainReport:
    variants: list
    steps: int
    # variant -> metric -> {"mean","q1","q3"} -> (steps + 1,) arrays
    curves: dict = field(default_factory=dict)
    # variant -> {"all": stats, "congested": stats}
    mitigation: dict = field(default_factory=dict)
    episodes: dict = field(default_factory=dict)

    def final(self, variant: str, metric: str) -> float:
        return float(self.curves[variant][metric]["mean"][-1])


def relative_gains(series: list, metric: str) -> np.ndarray:
    """(n_kept, steps + 1) percent gains; episodes with a zero baseline are dropped."""
    rows = []
    for em in series:
        x = em.series[metric]
        if metric == "congestion":
            if x[0] == 0.0:
                continue  # nothing to improve
            rows.append(100.0 * (x[0] - x) / x[0])
        else:
            if x[0] == 0.0:
                log.warning("episode %d: zero baseline %s excluded", em.episode, metric)
                continue
            rows.append(100.0 * (x - x[0]) / x[0])
    return np.asarray(rows)


def mitigation_stats(steps: np.ndarray, horizon: int) -> dict:
    """Box statistics of steps-to-mitigation.

    Episodes never mitigated within the horizon are censored at ``horizon + 1``.
    """
    if len(steps) == 0:
        return {"n": 0, "mitigated": float("nan"), **{k: float("nan") for k in
                ("min", "q1", "median", "q3", "max", "mean")}}
    done = np.isfinite(steps)
    vals = np.where(done, steps, horizon + 1.0)
    q1, med, q3 = quartiles(vals)
    return {"n": int(len(vals)), "mitigated": float(done.mean()), "min": float(vals.min()),
            "q1": q1, "median": med, "q3": q3, "max": float(vals.max()),
            "mean": float(vals.mean())}


def aggregate_gains(metrics: dict) -> GainReport:
    """Build the report from ``{variant: [EpisodeMetrics, ...]}``."""
    variants = list(metrics)
    if any(len(v) == 0 for v in metrics.values()):
        raise ValueError("every variant needs at least one episode")
    steps = metrics[variants[0]][0].steps
    rep = GainReport(variants=variants, steps=steps)
    for v in variants:
        series = sorted(metrics[v], key=lambda em: em.episode)
        rep.episodes[v] = len(series)
        rep.curves[v] = {}
        for m in (*GAIN_METRICS, "congestion"):
            g = relative_gains(series, m)
            if len(g) == 0:
                nan = np.full(steps + 1, np.nan)
                rep.curves[v][m] = {"mean": nan, "q1": nan, "q3": nan, "n": 0}
                continue
            q1, q3 = np.percentile(g, [25, 75], axis=0, method="linear")
            rep.curves[v][m] = {"mean": g.mean(axis=0), "q1": q1, "q3": q3, "n": len(g)}
        stm = np.array([steps_to_mitigation(em.series["congestion"]) for em in series])
        initially = np.array([em.series["congestion"][0] > 0.0 for em in series])
        rep.mitigation[v] = {"all": mitigation_stats(stm, steps),
                             "congested": mitigation_stats(stm[initially], steps)}
    return rep


# ---------------------------------------------------------------- CSV output

REPORT_HEADER = ["table", "variant", "metric", "step", "mean", "q1", "median", "q3",
                 "min", "max", "n", "mitigated"]


def write_report_csv(rep: GainReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for v in rep.variants:
            for m, c in rep.curves[v].items():
                w.writerow(["final_gain", v, m, rep.steps, fmt(c["mean"][-1]), fmt(c["q1"][-1]),
                            "", fmt(c["q3"][-1]), "", "", c["n"], ""])
        for v in rep.variants:
            for subset in ("all", "congested"):
                s = rep.mitigation[v][subset]
                w.writerow(["steps_to_mitigation", v, subset, "", fmt(s["mean"]), fmt(s["q1"]),
                            fmt(s["median"]), fmt(s["q3"]), fmt(s["min"]), fmt(s["max"]),
                            s["n"], fmt(s["mitigated"])])
        for v in rep.variants:
            for m, c in rep.curves[v].items():
                for t in range(rep.steps + 1):
                    w.writerow(["gain_curve", v, m, t, fmt(c["mean"][t]), fmt(c["q1"][t]), "",
                                fmt(c["q3"][t]), "", "", c["n"], ""])


TRACE_HEADER = ["episode", "step", "cell", "tilt", "action", "reward", *KPI_FIELDS]
NETWORK_HEADER = ["episode", "step", *NETWORK_METRICS]


def write_traces(traces: list, trace_path, network_path) -> None:
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for tr in traces:
            for t in range(tr.steps + 1):
                for i, cell in enumerate(tr.cells):
                    action = ACTION_NAMES[tr.actions[t - 1, i]] if t else ""
                    reward = fmt(tr.rewards[t - 1, i]) if t else ""
                    w.writerow([tr.episode, t, int(cell), fmt(tr.tilts[t, i]), action, reward,
                                *(fmt(tr.kpis[k][t, i]) for k in KPI_FIELDS)])
    with open(network_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NETWORK_HEADER)
        for tr in traces:
            for t in range(tr.steps + 1):
                w.writerow([tr.episode, t, *(fmt(tr.network[m][t]) for m in NETWORK_METRICS)])


def read_network_csv(path) -> list:
    by_ep: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ep = int(row["episode"])
            by_ep.setdefault(ep, []).append((int(row["step"]), row))
    out = []
    for ep in sorted(by_ep):
        rows = [r for _, r in sorted(by_ep[ep], key=lambda p: p[0])]
        out.append(EpisodeMetrics(ep, {m: np.array([parse(r[m]) for r in rows])
                                       for m in NETWORK_METRICS}))
    return out


def write_training_log(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "episode", "loss", "mean_reward", "epsilon"])
        for r in rows:
            w.writerow([r["step"], r["episode"], fmt(r["loss"]), fmt(r["mean_reward"]),
                        fmt(r["epsilon"])])


def read_training_log(path) -> list:
    with open(path, newline="") as fh:
        return [{"step": int(r["step"]), "episode": int(r["episode"]), "loss": parse(r["loss"]),
                 "mean_reward": parse(r["mean_reward"]), "epsilon": parse(r["epsilon"])}
                for r in csv.DictReader(fh)]


def windowed(values, window: int = 100) -> np.ndarray:
    """Means over consecutive non-overlapping windows, ignoring NaN entries."""
    v = np.asarray(values, dtype=float)
    out = []
    for i in range(0, len(v) - window + 1, window):
        chunk = v[i:i + window]
        chunk = chunk[np.isfinite(chunk)]
        out.append(chunk.mean() if len(chunk) else np.nan)
    return np.asarray(out)


# ---------------------------------------------------------------- SVG output

PALETTE = {"ES": "#d62728", "RLEN": "#2ca02c", "RLIN": "#1f77b4", "RLIN+": "#1f77b4",
           "loss": "#9467bd", "reward": "#ff7f0e"}


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str, xlim, ylim,
                 width: int = 640, height: int = 400):
        self.w, self.h = width, height
        self.left, self.right, self.top, self.bottom = 70, 20, 40, 50
        self.xlim = xlim
        lo, hi = ylim
        if not hi > lo:
            lo, hi = lo - 1.0, hi + 1.0
        self.ylim = (lo, hi)
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
            f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
            f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {height / 2:.1f})">{ylabel}</text>',
        ]
        self._axes()

    def x(self, v) -> float:
        a, b = self.xlim
        return self.left + (v - a) / ((b - a) or 1.0) * (self.w - self.left - self.right)

    def y(self, v) -> float:
        a, b = self.ylim
        return self.h - self.bottom - (v - a) / (b - a) * (self.h - self.top - self.bottom)

    def _axes(self):
        x0, x1 = self.left, self.w - self.right
        y0, y1 = self.h - self.bottom, self.top
        self.parts.append(f'<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>')
        for v in np.linspace(*self.ylim, 5):
            yy = self.y(v)
            self.parts.append(f'<line x1="{x0 - 4}" y1="{yy:.2f}" x2="{x0}" y2="{yy:.2f}" stroke="black"/>')
            self.parts.append(f'<text x="{x0 - 6}" y="{yy + 4:.2f}" text-anchor="end">{v:.1f}</text>')
        for v in np.linspace(*self.xlim, min(11, int(self.xlim[1] - self.xlim[0]) + 1)):
            xx = self.x(v)
            self.parts.append(f'<text x="{xx:.2f}" y="{y0 + 16}" text-anchor="middle">{v:.0f}</text>')

    def polyline(self, xs, ys, color, dashed=False, width=2):
        pts = " ".join(f"{self.x(a):.2f},{self.y(b):.2f}" for a, b in zip(xs, ys) if np.isfinite(b))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{dash}/>')

    def band(self, xs, lo, hi, color):
        keep = np.isfinite(lo) & np.isfinite(hi)
        xs, lo, hi = np.asarray(xs)[keep], np.asarray(lo)[keep], np.asarray(hi)[keep]
        pts = [f"{self.x(a):.2f},{self.y(b):.2f}" for a, b in zip(xs, hi)]
        pts += [f"{self.x(a):.2f},{self.y(b):.2f}" for a, b in zip(xs[::-1], lo[::-1])]
        self.parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')

    def legend(self, entries):
        for i, (label, color, dashed) in enumerate(entries):
            yy = self.top + 12 + 16 * i
            xx = self.left + 12
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            self.parts.append(f'<line x1="{xx}" y1="{yy}" x2="{xx + 24}" y2="{yy}" stroke="{color}" stroke-width="2"{dash}/>')
            self.parts.append(f'<text x="{xx + 30}" y="{yy + 4}">{label}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _finite_range(*arrays):
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if len(vals) == 0:
        return 0.0, 1.0
    return float(vals.min()), float(vals.max())


def gain_curve_svg(rep: GainReport, metric: str, title: str) -> str:
    arrays = []
    for v in rep.variants:
        c = rep.curves[v][metric]
        arrays += [c["q1"], c["q3"], c["mean"]]
    lo, hi = _finite_range(*arrays)
    cv = _Canvas(title, "step", "improvement (%)", (0, rep.steps), (min(lo, 0.0), hi))
    xs = np.arange(rep.steps + 1)
    for v in rep.variants:
        c = rep.curves[v][metric]
        if v != "RLIN+":
            cv.band(xs, c["q1"], c["q3"], PALETTE.get(v, "#444444"))
    for v in rep.variants:
        cv.polyline(xs, rep.curves[v][metric]["mean"], PALETTE.get(v, "#444444"),
                    dashed=(v == "RLIN+"))
    cv.legend([(v, PALETTE.get(v, "#444444"), v == "RLIN+") for v in rep.variants])
    return cv.render()


def mitigation_box_svg(rep: GainReport, subset: str = "all") -> str:
    stats = [rep.mitigation[v][subset] for v in rep.variants]
    hi = max([s["max"] for s in stats if np.isfinite(s["max"])] + [1.0])
    title = "Steps to congestion mitigation"
    if subset == "congested":
        title += " (initially congested episodes)"
    cv = _Canvas(title, "variant", "steps",
                 (0, len(rep.variants) + 1), (0.0, hi))
    for i, (v, s) in enumerate(zip(rep.variants, stats), start=1):
        if not np.isfinite(s["median"]):
            continue
        xc = cv.x(i)
        half = 0.25 * (cv.x(1) - cv.x(0))
        cv.parts.append(f'<line x1="{xc:.2f}" y1="{cv.y(s["min"]):.2f}" x2="{xc:.2f}" y2="{cv.y(s["max"]):.2f}" stroke="black"/>')
        cv.parts.append(f'<rect x="{xc - half:.2f}" y="{cv.y(s["q3"]):.2f}" width="{2 * half:.2f}" '
                        f'height="{cv.y(s["q1"]) - cv.y(s["q3"]):.2f}" fill="white" stroke="black"/>')
        cv.parts.append(f'<line x1="{xc - half:.2f}" y1="{cv.y(s["median"]):.2f}" x2="{xc + half:.2f}" '
                        f'y2="{cv.y(s["median"]):.2f}" stroke="red" stroke-width="2"/>')
        cv.parts.append(f'<text x="{xc:.2f}" y="{cv.h - 30}" text-anchor="middle">{v}</text>')
    return cv.render()


def training_svg(rows: list, window: int = 100) -> str:
    loss = windowed([r["loss"] for r in rows], window)
    rew = windowed([r["mean_reward"] for r in rows], window)
    xs = (np.arange(len(loss)) + 1) * window
    lo, hi = _finite_range(loss)
    top = _Canvas(f"Loss ({window}-step window)", "step", "loss", (0, max(xs[-1], 1) if len(xs) else 1),
                  (lo, hi), height=300)
    top.polyline(xs, loss, PALETTE["loss"])
    lo, hi = _finite_range(rew)
    bottom = _Canvas(f"Reward ({window}-step window)", "step", "mean reward",
                     (0, max(xs[-1], 1) if len(xs) else 1), (lo, hi), height=300)
    bottom.polyline(xs, rew, PALETTE["reward"])
    # stack the two panels vertically in one document
    a = top.render().replace("</svg>\n", "")
    b = bottom.render().split("\n", 1)[1].replace("</svg>\n", "")
    head, body = a.split("\n", 1)
    head = head.replace('height="300"', 'height="600"').replace("0 0 640 300", "0 0 640 600")
    return f'{head}\n{body}\n<g transform="translate(0,300)">\n{b}\n</g>\n</svg>\n'


def write_report(rep: GainReport, out: Path) -> None:
    out = Path(out)
    write_report_csv(rep, out / "report.csv")
    titles = {"good_traffic": "Good traffic improvement",
              "good_coverage": "Good coverage traffic improvement",
              "good_quality": "Good quality traffic improvement",
              "congestion": "Congestion improvement"}
    for m, title in titles.items():
        (out / f"gain_{m}.svg").write_text(gain_curve_svg(rep, m, title))
    (out / "steps_to_mitigation.svg").write_text(mitigation_box_svg(rep, "all"))
    (out / "steps_to_mitigation_congested.svg").write_text(mitigation_box_svg(rep, "congested"))

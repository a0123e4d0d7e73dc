"""Command-line front end: ``tiltmarl {pretrain,evaluate,report,config}``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__, kernels
from .config import CampaignConfig, dump_config, load_config, parse_variants
from .errors import ArtifactIOError, ConfigError, TiltMarlError
from .marl import TiltEnvironment, episode_seeds, run_campaign
from .report import (EpisodeMetrics, aggregate_gains, read_network_csv, training_svg,
                     write_report, write_traces, write_training_log)
from .radiosim import write_snapshot_csv
from .rlcore import load_checkpoint, save_checkpoint
from .topology import generate_hex_grid, optimized_cells, write_layout_csv

log = logging.getLogger("tiltmarl")


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def resolve_config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig()
    variants = parse_variants(args.variants) if args.variants else None
    cfg = cfg.with_overrides(seed=args.seed, scale=args.scale, workers=args.workers,
                             variants=variants)
    if not cfg.scale > 0:
        raise ConfigError("scale must be positive")
    return cfg


def update_manifest(out: Path, section: str, payload: dict) -> None:
    path = out / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest[section] = payload
    manifest["package_version"] = __version__
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def pretrain_variants(variants) -> list:
    wanted = []
    if "RLEN" in variants:
        wanted.append("RLEN")
    if "RLIN" in variants or "RLIN+" in variants:
        wanted.append("RLIN")
    return wanted


def cmd_pretrain(cfg: CampaignConfig, out: Path, variants=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    variants = variants or pretrain_variants(cfg.variants)
    if not variants:
        raise ConfigError("nothing to pre-train; select RLEN, RLIN or RLIN+")
    hashes = {}
    for v in variants:
        spec = cfg.spec("train", v)
        log.info("pre-training %s: %d episodes x %d steps", v, spec.episodes,
                 spec.steps_per_episode)
        result = run_campaign(spec, progress=_progress(f"pretrain {v}", spec.episodes))
        blob = save_checkpoint(result.net)
        (out / f"checkpoint_{v}.json").write_bytes(blob)
        rows = result.training_log()
        write_training_log(rows, out / f"training_log_{v}.csv")
        (out / f"training_{v}.svg").write_text(training_svg(rows))
        hashes[v] = sha256(blob)
    update_manifest(out, "pretrain", {
        "config": cfg.to_dict(), "seed": cfg.seed, "episodes": cfg.episodes("train"),
        "variants": variants, "checkpoint_sha256": hashes, "kernel_backend": kernels.BACKEND,
    })
    return hashes


def load_checkpoints(variants, ckpt_dir: Path) -> dict:
    nets, missing = {}, []
    for v in variants:
        if v == "ES":
            continue
        source = "RLIN" if v == "RLIN+" else v
        path = ckpt_dir / f"checkpoint_{source}.json"
        if not path.exists():
            missing.append(f"{v} (needs {path.name})")
            continue
        nets[v] = load_checkpoint(path.read_bytes())
    if missing:
        raise ConfigError(f"requested variants {','.join(variants)}; missing checkpoints: "
                          + ", ".join(missing) + f" in {ckpt_dir}")
    return nets


def cmd_evaluate(cfg: CampaignConfig, out: Path, ckpt_dir: Path | None = None,
                 dump_snapshot: bool = False):
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = ckpt_dir or out
    variants = list(cfg.variants)
    nets = load_checkpoints(variants, ckpt_dir)
    hashes = {v: sha256(save_checkpoint(n)) for v, n in nets.items()}
    metrics = {}
    for v in variants:
        spec = cfg.spec("test", v)
        log.info("evaluating %s on %d episodes", v, spec.episodes)
        result = run_campaign(spec, net=nets.get(v), workers=cfg.workers,
                              progress=_progress(f"evaluate {v}", spec.episodes))
        write_traces(result.traces, out / f"trace_{v}.csv", out / f"network_{v}.csv")
        metrics[v] = [EpisodeMetrics.from_trace(t) for t in result.traces]
    rep = aggregate_gains(metrics)
    write_report(rep, out)
    layout = generate_hex_grid(cfg.test.rings, 1000.0)
    write_layout_csv(layout, out / "layout.csv")
    if dump_snapshot:
        spec = cfg.spec("test", variants[0])
        env_rng, _ = episode_seeds(spec.seed, spec.mode, 0)
        env = TiltEnvironment(layout, optimized_cells(layout, spec.optimized_rings), env_rng, spec)
        snap, _ = env.observe(env.config.electrical_tilt)
        write_snapshot_csv(snap, out / "snapshot_episode0.csv")
    update_manifest(out, "evaluate", {
        "config": cfg.to_dict(), "seed": cfg.seed, "episodes": cfg.episodes("test"),
        "variants": variants, "checkpoint_sha256": hashes, "kernel_backend": kernels.BACKEND,
    })
    return rep


def cmd_report(out: Path, variants=None):
    if variants is None:
        manifest = out / "manifest.json"
        if manifest.exists():
            variants = json.loads(manifest.read_text()).get("evaluate", {}).get("variants")
        if not variants:
            variants = [p.stem[len("network_"):] for p in sorted(out.glob("network_*.csv"))]
    if not variants:
        raise ArtifactIOError(f"no evaluation traces found in {out}")
    metrics = {}
    for v in variants:
        path = out / f"network_{v}.csv"
        if not path.exists():
            raise ArtifactIOError(f"missing {path}")
        metrics[v] = read_network_csv(path)
    rep = aggregate_gains(metrics)
    write_report(rep, out)
    return rep


def _progress(label: str, total: int):
    def report(i):
        if (i + 1) % max(1, total // 10) == 0 or i + 1 == total:
            log.info("%s: %d/%d episodes", label, i + 1, total)
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON campaign config")
    common.add_argument("--seed", type=int)
    common.add_argument("--scale", type=float, help="episode count multiplier")
    common.add_argument("--variants", help="comma list of ES,RLEN,RLIN,RLIN+")
    common.add_argument("--out", type=Path, default=Path("runs"))
    common.add_argument("--workers", type=int)
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="tiltmarl", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pretrain", parents=[common], help="pre-train shared Q-networks")
    ev = sub.add_parser("evaluate", parents=[common], help="run test campaigns and report")
    ev.add_argument("--checkpoint-dir", type=Path, help="defaults to --out")
    ev.add_argument("--dump-snapshot", action="store_true",
                    help="write the baseline snapshot of episode 0 as CSV")
    rp = sub.add_parser("report", parents=[common], help="rebuild report from traces")
    rp.set_defaults(variants=None)
    cf = sub.add_parser("config", parents=[common], help="print or validate configs")
    g = cf.add_mutually_exclusive_group(required=True)
    g.add_argument("--print-defaults", action="store_true")
    g.add_argument("--validate", type=Path, metavar="PATH")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "config":
            if args.print_defaults:
                sys.stdout.write(dump_config(CampaignConfig(), with_docs=True))
            else:
                load_config(args.validate)
                sys.stdout.write(f"{args.validate}: valid (version 1)\n")
            return 0
        if args.command == "report":
            variants = parse_variants(args.variants) if args.variants else None
            cmd_report(args.out, variants)
            return 0
        cfg = resolve_config(args)
        if args.command == "pretrain":
            cmd_pretrain(cfg, args.out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.out, args.checkpoint_dir, args.dump_snapshot)
        return 0
    except TiltMarlError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return ArtifactIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())

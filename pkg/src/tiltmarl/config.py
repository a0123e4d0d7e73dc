"""Versioned JSON campaign configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError
from .expert import ExpertThresholds
from .kpi import KpiThresholds
from .marl import VARIANTS, CampaignSpec, RLConfig
from .radiosim import RadioParams
from .topology import ParameterRanges

CONFIG_VERSION = 1

# emitted under "_doc" by `config --print-defaults`; keys starting with "_" are ignored on load
FIELD_DOCS = {
    "scale": "multiplier on train/test episode counts (1.0 = 500 pre-training, 300 test episodes)",
    "seed": "root seed; pre-training and evaluation derive independent streams from it",
    "train": "pre-training grid: rings around the center site, rings optimized, episodes, steps",
    "test": "evaluation grid; optimized_rings=4 of 5 gives 183 of 273 optimized cells",
    "variants": "evaluated policies: ES expert, RLEN/RLIN without/with neighbours, RLIN+ keeps learning",
    "freeze_heuristic": "RLIN+ only: skip training data from cells that keep or oscillate",
    "workers": "process pool size for frozen-policy evaluation",
    "ranges": "closed integer ranges [min, max] sampled with step 1; carriers in GHz",
    "rl": "Q-network hidden sizes, Adam step size, replay batch/capacity, epsilon schedule",
    "radio": "link budget: power, noise, antenna pattern, UE height, capacity cap, per-UE demand",
    "kpi": "KPI thresholds in dBm/dB, overlap report window, overshoot distance factor",
    "expert": "rule thresholds of the expert baseline (ratios)",
}


@dataclass(frozen=True)
class PhaseConfig:
    rings: int
    optimized_rings: int
    episodes: int
    steps: int = 20


@dataclass(frozen=True)
class CampaignConfig:
    """Full-size defaults; ``scale`` multiplies both episode counts."""

    scale: float = 0.1
    seed: int = 0
    train: PhaseConfig = PhaseConfig(rings=2, optimized_rings=1, episodes=500)
    test: PhaseConfig = PhaseConfig(rings=5, optimized_rings=4, episodes=300)
    variants: tuple = ("ES", "RLEN", "RLIN", "RLIN+")
    freeze_heuristic: bool = False
    workers: int = 1
    ranges: ParameterRanges = field(default_factory=ParameterRanges)
    rl: RLConfig = field(default_factory=RLConfig)
    radio: RadioParams = field(default_factory=RadioParams)
    kpi: KpiThresholds = field(default_factory=KpiThresholds)
    expert: ExpertThresholds = field(default_factory=ExpertThresholds)

    def episodes(self, phase: str) -> int:
        base = getattr(self, phase).episodes
        return max(1, int(round(base * self.scale)))

    def spec(self, phase: str, variant: str, seed: int | None = None) -> CampaignSpec:
        p = getattr(self, phase)
        return CampaignSpec(
            variant=variant,
            episodes=self.episodes(phase),
            steps_per_episode=p.steps,
            rings=p.rings,
            optimized_rings=p.optimized_rings,
            seed=self.seed if seed is None else seed,
            mode="pretrain" if phase == "train" else "evaluate",
            freeze_heuristic=self.freeze_heuristic,
            rl=self.rl,
            ranges=self.ranges,
            radio=self.radio,
            thresholds=self.kpi,
            expert=self.expert,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = list(self.variants)
        d["rl"]["hidden"] = list(self.rl.hidden)
        d["ranges"] = self.ranges.to_dict()
        return {"version": CONFIG_VERSION, **d}

    def with_overrides(self, **kw) -> "CampaignConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_variants(text) -> tuple:
    items = [v.strip() for v in (text.split(",") if isinstance(text, str) else text)]
    items = [v for v in items if v]
    bad = [v for v in items if v not in VARIANTS]
    if bad or not items:
        raise ConfigError(f"unknown variants {bad}; choose from {','.join(VARIANTS)}")
    return tuple(items)


def config_from_dict(data: dict) -> CampaignConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    data = {k: v for k, v in data.items() if k != "version" and not k.startswith("_")}
    defaults = CampaignConfig()
    unknown = set(data) - {f.name for f in fields(CampaignConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw = {}
    for key in ("train", "test"):
        if key in data:
            kw[key] = _build(PhaseConfig, {**asdict(getattr(defaults, key)), **data[key]}, key)
    nested = {"rl": RLConfig, "radio": RadioParams, "kpi": KpiThresholds,
              "expert": ExpertThresholds}
    for key, cls in nested.items():
        if key in data:
            merged = {**asdict(getattr(defaults, key)), **data[key]}
            if key == "rl":
                merged["hidden"] = tuple(merged["hidden"])
            kw[key] = _build(cls, merged, key)
    if "ranges" in data:
        kw["ranges"] = ParameterRanges.from_dict({**defaults.ranges.to_dict(), **data["ranges"]})
        kw["ranges"].validate()
    if "variants" in data:
        kw["variants"] = parse_variants(data["variants"])
    for key in ("scale", "seed", "freeze_heuristic", "workers"):
        if key in data:
            kw[key] = data[key]
    cfg = replace(defaults, **kw)
    validate(cfg)
    return cfg


def validate(cfg: CampaignConfig) -> None:
    if not cfg.scale > 0:
        raise ConfigError("scale must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    for phase in ("train", "test"):
        p = getattr(cfg, phase)
        if p.steps < 1 or p.episodes < 1:
            raise ConfigError(f"{phase}: episodes and steps must be positive")
        if not 0 <= p.optimized_rings < p.rings:
            raise ConfigError(f"{phase}: optimized_rings must leave a buffer ring")


def load_config(path) -> CampaignConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def dump_config(cfg: CampaignConfig, with_docs: bool = False) -> str:
    doc = cfg.to_dict()
    if with_docs:
        doc["_doc"] = FIELD_DOCS
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"

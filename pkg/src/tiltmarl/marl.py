"""Multi-agent tilt campaigns driven by one shared Q-network.

Every optimized cell runs its own agent instance, but all instances read the
same network and feed the same replay buffer.  Within a step all agents
observe the same pre-action snapshot and their tilt changes are applied
jointly.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kpi as kpimod
from .errors import ConfigError, DivergenceError
from .expert import ExpertThresholds, expert_actions_for
from .radiosim import DEFAULT_RADIO, LinkGeometry, RadioParams, drop_users
from .rlcore import (DOWNTILT, KEEP, N_ACTIONS, TILT_DELTA, UPTILT, AdamConfig, QNetwork,
                     ReplayBuffer, clip_reward, linear_epsilon, load_checkpoint,
                     save_checkpoint, select_actions)
from .topology import (ParameterRanges, SiteLayout, generate_hex_grid, optimized_cells,
                       sample_episode_config)

log = logging.getLogger(__name__)

VARIANTS = ("ES", "RLEN", "RLIN", "RLIN+")
RL_VARIANTS = ("RLEN", "RLIN", "RLIN+")
NETWORK_METRICS = ("good_traffic", "good_coverage", "good_quality", "congestion")


@dataclass(frozen=True)
class RLConfig:
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 100_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5


@dataclass(frozen=True)
class CampaignSpec:
    variant: str = "RLIN"
    episodes: int = 50
    steps_per_episode: int = 20
    rings: int = 2
    optimized_rings: int = 1
    seed: int = 0
    mode: str = "pretrain"
    freeze_heuristic: bool = False
    rl: RLConfig = RLConfig()
    ranges: ParameterRanges = ParameterRanges()
    radio: RadioParams = DEFAULT_RADIO
    thresholds: kpimod.KpiThresholds = kpimod.DEFAULT_THRESHOLDS
    expert: ExpertThresholds = ExpertThresholds()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.mode not in ("pretrain", "evaluate"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "pretrain" and self.variant not in ("RLEN", "RLIN"):
            raise ConfigError(f"variant {self.variant} cannot be pre-trained")
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise ConfigError("episodes and steps_per_episode must be positive")
        if self.optimized_rings >= self.rings:
            raise ConfigError("optimized_rings must leave at least one buffer ring")

    @property
    def with_neighbors(self) -> bool:
        return self.variant != "RLEN"

    @property
    def learns(self) -> bool:
        return self.mode == "pretrain" or self.variant == "RLIN+"

    @property
    def total_steps(self) -> int:
        return self.episodes * self.steps_per_episode


@dataclass
class EpisodeTrace:
    episode: int
    variant: str
    seed: int
    n_cells: int
    cells: np.ndarray            # optimized cell ids
    states: np.ndarray           # (steps, n_opt, 11)
    actions: np.ndarray          # (steps, n_opt)
    rewards: np.ndarray          # (steps, n_opt)
    tilts: np.ndarray            # (steps + 1, n_opt) electrical tilt after each step
    kpis: dict                   # field -> (steps + 1, n_opt)
    network: dict                # metric -> (steps + 1,)
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))   # (steps,), nan if no update
    epsilons: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def steps(self) -> int:
        return len(self.actions)


def episode_seeds(seed: int, mode: str, episode: int) -> tuple[np.random.Generator, ...]:
    """Independent generators for the environment and the policy of one episode.

    The environment stream depends only on (seed, mode, episode), so every
    variant evaluated with the same seed sees identical networks and UE drops.
    """
    tag = 0 if mode == "pretrain" else 1
    env_ss, policy_ss = np.random.SeedSequence([seed, tag, episode]).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(policy_ss)


class TiltEnvironment:
    """One sampled network with a fixed UE drop; re-evaluated for every tilt vector."""

    def __init__(self, base: SiteLayout, optimized: np.ndarray, rng: np.random.Generator,
                 spec: CampaignSpec, rng_seed: int = 0):
        self.spec = spec
        self.config = sample_episode_config(base, rng, spec.ranges, optimized, rng_seed)
        self.layout = base.scaled(self.config.inter_site_distance)
        self.drop = drop_users(self.layout, self.config, rng, spec.radio)
        self.geometry = LinkGeometry(self.layout, self.config, self.drop, spec.radio)
        self.optimized = self.config.optimized
        self.site_distance = kpimod.mean_distance_to_closest_sites(self.layout)
        nearest_site = np.argmin(self.geometry.site_distance, axis=1)
        site_opt = np.zeros(self.layout.n_sites, dtype=bool)
        site_opt[self.layout.cell_site[self.optimized]] = True
        # fixed UE population of the optimized area, used for network-level metrics
        self.area_ues = site_opt[nearest_site]

    def observe(self, tilts: np.ndarray):
        snap = self.geometry.evaluate(tilts)
        table = kpimod.network_kpis(snap, self.layout, self.config, self.spec.thresholds)
        return snap, table

    def network_metrics(self, snap, table) -> dict:
        thr = self.spec.thresholds
        ues = self.area_ues
        cov = snap.best_rsrp[ues] >= thr.good_coverage_dbm
        qual = snap.sinr[ues] >= thr.good_quality_db
        return {
            "good_traffic": float(np.mean(cov & qual)) if ues.any() else 0.0,
            "good_coverage": float(np.mean(cov)) if ues.any() else 0.0,
            "good_quality": float(np.mean(qual)) if ues.any() else 0.0,
            "congestion": float(np.mean(table.congestion_rate[self.optimized])),
        }


def freeze_heuristic(actions) -> bool:
    """True when a cell's recent actions suggest it has settled.

    Settled means the last three actions were all "keep", or the last four
    strictly alternate between up- and downtilt.
    """
    a = list(actions)
    if len(a) >= 3 and all(x == KEEP for x in a[-3:]):
        return True
    if len(a) >= 4:
        tail = a[-4:]
        if all(x in (UPTILT, DOWNTILT) for x in tail) and all(
                tail[i] != tail[i + 1] for i in range(3)):
            return True
    return False


class Learner:
    """Shared network plus replay buffer and the sampling stream that feeds it."""

    def __init__(self, net: QNetwork, rl: RLConfig, rng: np.random.Generator):
        self.net = net
        self.rl = rl
        self.rng = rng
        self.buffer = ReplayBuffer(rl.buffer_capacity, net.sizes[0])

    def observe(self, states, actions, rewards) -> float:
        """Store experiences, then take one gradient step when the buffer is ready."""
        self.buffer.push_many(states, actions, clip_reward(rewards))
        if len(self.buffer) < self.rl.batch_size:
            return float("nan")
        s, a, r = self.buffer.sample(self.rl.batch_size, self.rng)
        return self.net.train_step(s, a, r)


def new_network(spec: CampaignSpec) -> QNetwork:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2]))
    sizes = (kpimod.N_FEATURES, *spec.rl.hidden, N_ACTIONS)
    return QNetwork(sizes, rng, AdamConfig(lr=spec.rl.learning_rate))


def run_episode(spec: CampaignSpec, episode: int, net: QNetwork | None = None,
                learner: Learner | None = None, global_step: int = 0,
                base: SiteLayout | None = None, policy=None) -> EpisodeTrace:
    """Run one campaign episode on a freshly sampled network.

    ``learner`` enables learning (its network is then the acting network);
    ``policy`` optionally overrides action selection with a callable
    ``(step, states, table, cells) -> actions``, used by tests.
    """
    if base is None:
        base = generate_hex_grid(spec.rings, 1000.0)
    opt = optimized_cells(base, spec.optimized_rings)
    env_rng, policy_rng = episode_seeds(spec.seed, spec.mode, episode)
    env = TiltEnvironment(base, opt, env_rng, spec, rng_seed=spec.seed)
    if learner is not None:
        net = learner.net
    if net is None and spec.variant != "ES" and policy is None:
        raise ConfigError(f"variant {spec.variant} needs a Q-network")

    steps = spec.steps_per_episode
    n_opt = len(opt)
    tilts = env.config.electrical_tilt.copy()
    snap, table = env.observe(tilts)
    eff = table if spec.with_neighbors else table.without_neighbors()

    states_log = np.zeros((steps, n_opt, kpimod.N_FEATURES))
    actions_log = np.zeros((steps, n_opt), dtype=np.int64)
    rewards_log = np.zeros((steps, n_opt))
    tilt_log = np.zeros((steps + 1, n_opt))
    kpi_log = {name: np.zeros((steps + 1, n_opt)) for name in kpimod.KPI_FIELDS}
    net_log = {name: np.zeros(steps + 1) for name in NETWORK_METRICS}
    losses = np.full(steps, np.nan)
    epsilons = np.zeros(steps)

    def record(t, table, snap):
        tilt_log[t] = tilts[opt]
        for name in kpimod.KPI_FIELDS:
            kpi_log[name][t] = getattr(table, name)[opt]
        for name, value in env.network_metrics(snap, table).items():
            net_log[name][t] = value

    record(0, table, snap)
    history = [[] for _ in range(n_opt)]
    for t in range(steps):
        config = env.config.with_tilts(tilts)
        states = kpimod.build_states(config, env.layout, eff, opt, spec.with_neighbors,
                                     site_distance=env.site_distance)
        if policy is not None:
            actions = np.asarray(policy(t, states, table, opt), dtype=np.int64)
        elif spec.variant == "ES":
            actions = expert_actions_for(table, opt, spec.expert)
        else:
            if spec.mode == "pretrain":
                eps = linear_epsilon(global_step + t, spec.total_steps, spec.rl.epsilon_start,
                                     spec.rl.epsilon_end, spec.rl.epsilon_decay_fraction)
            else:
                eps = 0.0
            epsilons[t] = eps
            actions = select_actions(net.forward(states), eps, policy_rng)

        rm_before = kpimod.reward_metric(eff.good_traffic, eff.congestion_rate,
                                         eff.gt_neigh, eff.cr_neigh)[opt]
        new_tilts = tilts.copy()
        new_tilts[opt] = np.clip(tilts[opt] + TILT_DELTA[actions], 0.0, 15.0)
        tilts = new_tilts
        snap, table = env.observe(tilts)
        eff = table if spec.with_neighbors else table.without_neighbors()
        rm_after = kpimod.reward_metric(eff.good_traffic, eff.congestion_rate,
                                        eff.gt_neigh, eff.cr_neigh)[opt]
        rewards = kpimod.reward(rm_before, rm_after)
        if not (np.all(np.isfinite(rewards)) and np.all(np.isfinite(rm_after))):
            raise DivergenceError(f"non-finite reward in episode {episode}, step {t + 1}")

        states_log[t], actions_log[t], rewards_log[t] = states, actions, rewards
        record(t + 1, table, snap)

        if learner is not None:
            keep = np.ones(n_opt, dtype=bool)
            for i, a in enumerate(actions):
                history[i].append(int(a))
            if spec.freeze_heuristic and spec.mode == "evaluate":
                keep = np.array([not freeze_heuristic(h) for h in history])
            losses[t] = learner.observe(states[keep], actions[keep], rewards[keep])

    return EpisodeTrace(
        episode=episode, variant=spec.variant, seed=spec.seed, n_cells=base.n_cells,
        cells=opt, states=states_log, actions=actions_log, rewards=rewards_log,
        tilts=tilt_log, kpis=kpi_log, network=net_log, losses=losses, epsilons=epsilons,
    )


@dataclass
class CampaignResult:
    traces: list
    net: QNetwork | None

    def training_log(self) -> list[dict]:
        rows = []
        step = 0
        for tr in self.traces:
            for t in range(tr.steps):
                rows.append({
                    "step": step,
                    "episode": tr.episode,
                    "loss": float(tr.losses[t]) if len(tr.losses) else float("nan"),
                    "mean_reward": float(np.mean(tr.rewards[t])),
                    "epsilon": float(tr.epsilons[t]) if len(tr.epsilons) else 0.0,
                })
                step += 1
        return rows


def _evaluate_one(args):
    spec, checkpoint, episode = args
    net = load_checkpoint(checkpoint) if checkpoint is not None else None
    return run_episode(spec, episode, net=net)


def run_campaign(spec: CampaignSpec, net: QNetwork | None = None, workers: int = 1,
                 progress=None) -> CampaignResult:
    """Run all episodes of a campaign.

    Pre-training and RLIN+ thread one learner through the episodes in order.
    Frozen evaluations are independent per episode and may use a process pool;
    traces are always returned in episode order.
    """
    base = generate_hex_grid(spec.rings, 1000.0)
    if spec.mode == "evaluate" and spec.variant != "ES" and net is None:
        raise ConfigError(f"evaluating {spec.variant} requires a pre-trained checkpoint")
    if spec.mode == "pretrain" and net is None:
        net = new_network(spec)

    traces = []
    if spec.learns:
        net = net.copy() if spec.mode == "evaluate" else net
        learner = Learner(net, spec.rl, np.random.default_rng(
            np.random.SeedSequence([spec.seed, 3])))
        for ep in range(spec.episodes):
            traces.append(run_episode(spec, ep, learner=learner,
                                      global_step=ep * spec.steps_per_episode, base=base))
            if progress:
                progress(ep)
        return CampaignResult(traces, net)

    checkpoint = save_checkpoint(net) if net is not None else None
    jobs = [(spec, checkpoint, ep) for ep in range(spec.episodes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_evaluate_one, jobs))
    else:
        for job in jobs:
            traces.append(_evaluate_one(job))
            if progress:
                progress(job[2])
    return CampaignResult(traces, net)


def evaluation_spec(spec: CampaignSpec, variant: str) -> CampaignSpec:
    return replace(spec, variant=variant, mode="evaluate")

import numpy as np
import pytest

from tiltmarl.errors import ConfigError
from tiltmarl.marl import (CampaignSpec, TiltEnvironment, episode_seeds, evaluation_spec,
                           freeze_heuristic, new_network, run_campaign, run_episode)
from tiltmarl.rlcore import DOWNTILT, KEEP, UPTILT, save_checkpoint
from tiltmarl.topology import generate_hex_grid, optimized_cells

SPEC = CampaignSpec(variant="RLIN", episodes=2, steps_per_episode=20, seed=3)


def keep_all(t, states, table, cells):
    return np.full(len(cells), KEEP)


def test_trace_shape_for_21_cells():
    tr = run_episode(SPEC, 0, net=new_network(SPEC))
    assert tr.states.shape == (20, 21, 11)
    assert tr.actions.size == tr.rewards.size == 420
    assert tr.tilts.shape == (21, 21)
    assert all(v.shape == (21,) for v in tr.network.values())


def test_all_keep_gives_zero_rewards():
    tr = run_episode(SPEC, 0, policy=keep_all)
    assert np.all(tr.rewards == 0.0)
    assert np.all(tr.tilts == tr.tilts[0])
    for series in tr.network.values():
        assert np.all(series == series[0])


def test_tilt_clipped_at_fifteen():
    def down(t, states, table, cells):
        return np.full(len(cells), DOWNTILT)

    tr = run_episode(SPEC, 1, policy=down)
    assert tr.tilts.max() == 15.0
    assert np.all(np.diff(tr.tilts, axis=0) >= 0)
    # once every optimized cell sits at 15 deg nothing changes any more
    full = np.flatnonzero(np.all(tr.tilts == 15.0, axis=1))
    assert len(full) and full[0] <= 15
    assert np.all(tr.rewards[full[0]:] == 0.0)


def test_tilt_clipped_at_zero():
    def up(t, states, table, cells):
        return np.full(len(cells), UPTILT)

    tr = run_episode(SPEC, 1, policy=up)
    assert tr.tilts.min() == 0.0 and tr.tilts[-1].max() == 0.0


def test_joint_update_is_atomic():
    """Every reward is measured against the network after all cells moved."""
    seen = []

    def record(t, states, table, cells):
        seen.append(table.good_traffic.copy())
        return np.where(np.arange(len(cells)) % 2 == 0, DOWNTILT, UPTILT)

    tr = run_episode(SPEC, 0, policy=record)
    # kpis logged at step t+1 equal the table the policy sees at step t+1
    cells = tr.cells
    for t in range(1, len(seen)):
        assert np.array_equal(tr.kpis["good_traffic"][t], seen[t][cells])


def test_paired_seeds_shared_by_variants():
    base = generate_hex_grid(2, 1000.0)
    opt = optimized_cells(base, 1)
    envs = []
    for v in ("ES", "RLEN", "RLIN"):
        rng, _ = episode_seeds(7, "evaluate", 4)
        envs.append(TiltEnvironment(base, opt, rng, evaluation_spec(SPEC, v)))
    for e in envs[1:]:
        assert np.array_equal(e.drop.positions, envs[0].drop.positions)
        assert np.array_equal(e.config.electrical_tilt, envs[0].config.electrical_tilt)
    # pre-training and evaluation streams differ
    a, _ = episode_seeds(7, "evaluate", 4)
    b, _ = episode_seeds(7, "pretrain", 4)
    assert a.random() != b.random()


def test_pretrain_experience_count_and_determinism():
    spec = CampaignSpec(variant="RLIN", episodes=3, steps_per_episode=5, seed=1)
    a = run_campaign(spec)
    b = run_campaign(spec)
    assert sum(t.rewards.size for t in a.traces) == 3 * 5 * 21
    assert save_checkpoint(a.net) == save_checkpoint(b.net)
    assert len(a.training_log()) == 15
    assert np.all(np.abs(a.traces[0].rewards) < np.inf)


def test_frozen_evaluation_is_deterministic_and_leaves_net_untouched():
    net = run_campaign(CampaignSpec(variant="RLEN", episodes=2, steps_per_episode=5)).net
    blob = save_checkpoint(net)
    spec = CampaignSpec(variant="RLEN", episodes=3, steps_per_episode=5, mode="evaluate")
    a = run_campaign(spec, net=net)
    b = run_campaign(spec, net=net)
    assert save_checkpoint(net) == blob
    for x, y in zip(a.traces, b.traces):
        assert np.array_equal(x.actions, y.actions)
        assert np.array_equal(x.rewards, y.rewards)
        assert np.all(np.isnan(x.losses))


def test_worker_pool_matches_sequential():
    net = new_network(SPEC)
    spec = CampaignSpec(variant="RLIN", episodes=3, steps_per_episode=4, mode="evaluate")
    seq = run_campaign(spec, net=net, workers=1)
    par = run_campaign(spec, net=net, workers=2)
    for x, y in zip(seq.traces, par.traces):
        assert np.array_equal(x.rewards, y.rewards)
        assert np.array_equal(x.tilts, y.tilts)


def test_rlin_plus_keeps_learning_on_a_copy():
    net = new_network(SPEC)
    blob = save_checkpoint(net)
    spec = CampaignSpec(variant="RLIN+", episodes=5, steps_per_episode=20, mode="evaluate")
    res = run_campaign(spec, net=net)
    assert save_checkpoint(net) == blob
    assert save_checkpoint(res.net) != blob
    assert np.all(np.concatenate([t.epsilons for t in res.traces]) == 0.0)


def test_neighbour_blind_state():
    spec = CampaignSpec(variant="RLEN", episodes=1, steps_per_episode=3)
    tr = run_episode(spec, 0, net=new_network(spec))
    assert np.all(tr.states[:, :, 9] == 0.0)
    tr = run_episode(SPEC, 0, net=new_network(SPEC))
    assert np.array_equal(tr.states[:, :, 9], tr.kpis["cr_neigh"][:-1])


def test_expert_episode_needs_no_network():
    spec = CampaignSpec(variant="ES", episodes=1, steps_per_episode=3, mode="evaluate")
    tr = run_episode(spec, 0)
    assert set(np.unique(tr.actions)) <= {KEEP, DOWNTILT, UPTILT}


@pytest.mark.parametrize("kw", [dict(variant="XX"), dict(mode="train"),
                                dict(variant="ES", mode="pretrain"), dict(episodes=0),
                                dict(rings=2, optimized_rings=2)])
def test_invalid_specs(kw):
    with pytest.raises(ConfigError):
        CampaignSpec(**kw)


def test_missing_network_rejected():
    with pytest.raises(ConfigError):
        run_campaign(CampaignSpec(variant="RLIN", mode="evaluate", episodes=1))


@pytest.mark.parametrize("actions,skip", [
    ((KEEP, KEEP, KEEP), True),
    ((UPTILT, DOWNTILT, UPTILT, DOWNTILT), True),
    ((DOWNTILT, UPTILT, DOWNTILT, UPTILT), True),
    ((UPTILT, UPTILT, KEEP), False),
    ((KEEP, KEEP), False),
    ((UPTILT, KEEP, UPTILT, DOWNTILT), False),
])
def test_freeze_heuristic(actions, skip):
    assert freeze_heuristic(actions) is skip


def test_freeze_heuristic_campaign_runs():
    net = new_network(SPEC)
    spec = CampaignSpec(variant="RLIN+", episodes=2, steps_per_episode=10, mode="evaluate",
                        freeze_heuristic=True)
    res = run_campaign(spec, net=net)
    assert len(res.traces) == 2

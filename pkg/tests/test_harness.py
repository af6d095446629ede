import json

import numpy as np
import pytest
import yaml

from erach import harness
from erach.harness import ConfigError, PlacementConfig


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def tiny(protocol="erach", **extra):
    base = {
        "protocol": protocol, "seed": 3, "num_uts": 3, "replicas": 2, "eval_episodes": 2, "calibration_episodes": 1,
        "timing": {"opportunities": 12}, "training": {"episodes": 3, "hidden": [8, 8], "learning_rate": 1e-3},
    }
    base.update(extra)
    return harness.config_from_dict(base)


def test_empty_file_lists_required_keys(tmp_path):
    with pytest.raises(ConfigError, match="protocol, seed"):
        harness.load_config(write(tmp_path, ""))


def test_unknown_key_reports_path(tmp_path):
    with pytest.raises(ConfigError, match="training.learnig_rate"):
        harness.load_config(write(tmp_path, "protocol: rach\nseed: 1\ntraining:\n  learnig_rate: 0.1\n"))


def test_invariant_violation_reports_path(tmp_path):
    with pytest.raises(ConfigError, match="link"):
        harness.load_config(write(tmp_path, "protocol: rach\nseed: 1\nlink:\n  nlos_attenuation: 2.0\n"))
    with pytest.raises(ConfigError, match="num_uts"):
        harness.load_config(write(tmp_path, "protocol: rach\nseed: 1\nnum_uts: 0\n"))
    with pytest.raises(ConfigError, match="expected a number"):
        harness.load_config(write(tmp_path, "protocol: rach\nseed: 1\nreward:\n  rho: high\n"))


def test_table_defaults_file_parses_to_table_values():
    cfg = harness.load_config("configs/table1.yaml", environ={})
    c = cfg.constellation
    assert (c.num_planes, c.sats_per_plane, c.altitude, c.period) == (2, 22, 550e3, 5728.0)
    assert c.speeds == (7590.0, -7590.0) and c.circumference == 4.3486e7
    assert cfg.link.bandwidth == 1e8 and cfg.link.pathloss_exponent == 2.1 and cfg.link.nlos_attenuation == 0.2
    assert (cfg.link.los_l1, cfg.link.los_l2) == (10.0, 0.6)
    assert (cfg.num_uts, cfg.num_preambles, cfg.backoff_window) == (5, 2, 10)
    assert cfg.training.learning_rate == 1e-4 and cfg.training.gamma == 1.0 and cfg.training.hidden == (128, 128)
    assert cfg.timing.opportunities_per_pass(c.period, c.sats_per_plane) == 2604
    assert cfg.placement.area_side == 1000.0


def test_roundtrip(tmp_path):
    cfg = harness.load_config("configs/desk.yaml", environ={})
    again = harness.load_config(write(tmp_path, harness.dump_config(cfg)), environ={})
    assert again == cfg
    assert harness.config_hash(again) == harness.config_hash(cfg)


def test_env_overrides(tmp_path):
    env = {"ERACH_CFG__TRAINING__LEARNING_RATE": "0.003", "ERACH_CFG__SEED": "9", "ERACH_PURE_PYTHON": "1"}
    cfg = harness.load_config("configs/desk.yaml", environ=env)
    assert cfg.training.learning_rate == 0.003 and cfg.seed == 9
    with pytest.raises(ConfigError, match="training.bogus"):
        harness.load_config("configs/desk.yaml", environ={"ERACH_CFG__TRAINING__BOGUS": "1"})


def test_replace_dotted():
    cfg = tiny()
    new = harness.replace(cfg, **{"training.episodes": 7, "reward.rho": 2.0, "seed": 5})
    assert (new.training.episodes, new.reward.rho, new.seed) == (7, 2.0, 5)
    assert cfg.training.episodes == 3


def test_replica_seed_is_spawn_child():
    cfg = tiny()
    ref = np.random.SeedSequence(cfg.seed).spawn(3)[2]
    assert harness.replica_seed(cfg, 2).generate_state(4).tolist() == ref.generate_state(4).tolist()


def test_place_uts_area_uniform():
    pts = harness.place_uts(PlacementConfig(), 10000, np.random.default_rng(0))
    se = 1000 / np.sqrt(12) / np.sqrt(1e4)
    assert np.all(np.abs(pts[:, :2].mean(axis=0)) < 3 * se)
    assert np.all(np.abs(pts[:, :2]) <= 500) and np.all(pts[:, 2] == 0)


def test_place_uts_spacing():
    pts = harness.place_uts(PlacementConfig(mode="spacing", mean_spacing=10.0), 5, np.random.default_rng(1))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    iu = np.triu_indices(5, 1)
    assert d[iu].mean() == pytest.approx(10.0)
    assert d.max() < 100
    one = harness.place_uts(PlacementConfig(mode="spacing", mean_spacing=10.0), 1, np.random.default_rng(1))
    assert one.shape == (1, 3)
    with pytest.raises(ValueError):
        PlacementConfig(mode="spacing")


def test_convergence_episode_rule():
    curve = np.r_[np.linspace(-10, 0, 100), np.zeros(100)]
    ep = harness.convergence_episode(curve, window=50, tol=0.05)
    trailing = np.convolve(curve, np.ones(50) / 50, mode="valid")
    assert ep == int(np.flatnonzero(np.abs(trailing - trailing[-1]) <= 0.05 * 1e-12)[0] + 49) or ep is not None
    flat = np.full(120, -4.0)
    assert harness.convergence_episode(flat, 50) == 49
    assert harness.convergence_episode(np.ones(10), 50) is None


def test_baseline_run_has_no_training(tmp_path):
    rec = harness.run(tiny("aloha"), tmp_path)
    assert all(not r.train_logs and r.team is None for r in rec.replicas)
    rows = harness.read_csv(tmp_path / "episodes.csv")
    assert {r["phase"] for r in rows} == {"eval"}
    assert not (tmp_path / "training.csv").exists()
    assert rec.ok


def test_learned_run_outputs_and_summary_recomputable(tmp_path):
    cfg = tiny()
    rec = harness.run(cfg, tmp_path)
    for name in ("episodes.csv", "training.csv", "summary.json", "config.yaml"):
        assert (tmp_path / name).exists()
    for j in range(cfg.num_uts):
        assert (tmp_path / "checkpoints" / f"agent_{j}.bin").exists()
        assert (tmp_path / "checkpoints" / "replica_1" / f"agent_{j}.bin").exists()
    rows = harness.read_csv(tmp_path / "episodes.csv")
    assert list(rows[0])[:9] == ["replica", "phase", "episode", "protocol", "throughput_bps", "collision_rate",
                                 "access_delay_s", "jain", "resource_util"]
    parsed = [{k: (float(v) if k in harness.SUMMARY_METRICS and v else (int(v) if k == "replica" else v))
               for k, v in r.items()} for r in rows]
    for r in parsed:
        for k in harness.SUMMARY_METRICS:
            if r[k] == "":
                r[k] = None
    again = harness.summarize_rows(parsed)
    doc = json.loads((tmp_path / "summary.json").read_text())
    for k in harness.SUMMARY_METRICS:
        assert again[k]["mean"] == pytest.approx(doc["summary"][k]["mean"], rel=1e-9)
    assert doc["config_hash"] == harness.config_hash(cfg)
    assert yaml.safe_load((tmp_path / "config.yaml").read_text())["seed"] == cfg.seed
    train = harness.read_csv(tmp_path / "training.csv")
    assert len(train) == cfg.replicas * cfg.training.episodes * cfg.num_uts


def test_replica_reproducible_in_isolation():
    cfg = tiny()
    both = harness.run(cfg)
    alone = harness.run_replica(cfg, 1)
    a = [m.network_throughput for m in both.replicas[1].eval_metrics]
    b = [m.network_throughput for m in alone.eval_metrics]
    assert a == b


def test_divergence_recorded(tmp_path):
    cfg = tiny(reward={"mu": float("nan"), "scale": 1.0, "penalty": 1.0})
    rec = harness.run(cfg, tmp_path)
    assert not rec.ok
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["ok"] is False and doc["diverged"]


def test_calibration_shares_across_protocol_streams():
    cfg = tiny()
    streams = harness.ReplicaStreams.for_replica(cfg, 0)
    sc = harness.build_scenario(cfg, streams.placement)
    rc = harness.calibrate_reward(cfg, sc, streams)
    assert rc.mu > 0 and rc.scale > 0 and rc.penalty > rc.mu
    assert harness.calibrate_reward(cfg, sc, streams) == rc


def test_calibrate_link_budget_hits_target():
    cfg = tiny("rach", timing={"opportunities": 40})
    gain, got = harness.calibrate_link_budget(cfg, target_bps=30e6, episodes=1)
    assert got == pytest.approx(30e6, rel=1e-3)


def test_sweeps_small(tmp_path):
    cfg = tiny(replicas=1)
    res = harness.sweep_rho(cfg, [0.0, 2.0], out=tmp_path)
    assert [r["rho"] for r in res.rows] == [0.0, 2.0]
    assert (tmp_path / "sweep_rho.csv").exists() and (tmp_path / "sweep_rho_curves.csv").exists()
    sig = harness.sweep_position_error(cfg, [0.0, 1e4])
    assert len(sig.rows) == 2 and sig.ok
    masks = harness.sweep_state_mask(cfg, [("positions", "collision"), ()])
    assert [r["mask"] for r in masks.rows] == ["positions+collision", "none"]
    dens = harness.sweep_density(cfg, [10.0])
    assert dens.rows[0]["mean_backoff"] is not None
    table = res.table("rho", "throughput_bps")
    assert set(table) == {0.0, 2.0}


def test_children_are_stateless():
    from erach.seeding import children

    ss = np.random.SeedSequence(42)
    a = [c.generate_state(2).tolist() for c in children(ss, 3)]
    b = [c.generate_state(2).tolist() for c in children(ss, 3)]
    ref = [c.generate_state(2).tolist() for c in np.random.SeedSequence(42).spawn(3)]
    assert a == b == ref

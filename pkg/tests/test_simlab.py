import json

import pytest

from atm.errors import ConfigError, ContractViolation
from atm.planner import ExternalPlanner
from atm.simlab.cli import _parse_seeds, main
from atm.simlab.config import (
    EXPERIMENTS,
    LabConfig,
    Thresholds,
    default_config,
    load_config,
)
from atm.simlab.experiments import (
    RUNNERS,
    run_checkpoint_contraction,
    run_full_agent,
    run_goal_directed,
    run_stationary_regret,
    run_tracking_regret,
)
from atm.simlab.report import ExperimentReport, canonical_cell
from atm.simlab.worlds import build_fixture_planner


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------


def test_canonical_cell_forms():
    assert canonical_cell(True) == "1"
    assert canonical_cell(False) == "0"
    assert canonical_cell(3) == "3"
    assert canonical_cell(0.1) == "0.1"
    assert canonical_cell(1.0 / 3.0) == "0.3333333333333333"
    assert canonical_cell(None) == ""
    assert canonical_cell("x") == "x"


def test_canonical_float_round_trips():
    for v in (0.1, 1e-17, 12345.6789, 2.0 / 7.0):
        assert float(canonical_cell(v)) == v


def test_report_rows_must_match_header():
    rep = ExperimentReport("stationary", {}, [0], columns=["a", "b"])
    rep.add_row(1, 2)
    with pytest.raises(ContractViolation):
        rep.add_row(1)
    assert rep.to_csv() == "a,b\n1,2\n"


def test_report_requires_seeds():
    with pytest.raises(ContractViolation):
        ExperimentReport("stationary", {}, [], columns=["a"])


def test_all_passed_property():
    rep = ExperimentReport("stationary", {}, [0], columns=[])
    rep.passes = {"x": True, "y": True}
    assert rep.all_passed
    rep.passes["y"] = False
    assert not rep.all_passed


def test_summary_is_json_serializable_with_inf(tmp_path):
    rep = ExperimentReport("stationary", {"w": float("inf")}, [0], columns=[])
    rep.aggregates = {"latency": float("inf"), "nan_marker": float("nan")}
    path = rep.write_summary(tmp_path / "s.json")
    body = json.loads(path.read_text())
    assert body["aggregates"]["latency"] == "inf"
    assert body["aggregates"]["nan_marker"] == "nan"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_defaults_exist_for_every_experiment():
    for name in EXPERIMENTS:
        cfg = default_config(name)
        assert cfg.experiment == name and cfg.seeds


def test_unknown_experiment_rejected():
    with pytest.raises(ConfigError):
        default_config("warp-drive")
    with pytest.raises(ConfigError):
        LabConfig(experiment="warp-drive")


def test_config_overlay(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "world": {"horizon": 1000},
                "thresholds": {"theta_e": 0.7},
                "seeds": [3, 4],
            }
        )
    )
    cfg = load_config(path, "stationary")
    assert cfg.world["horizon"] == 1000
    assert cfg.world["arm_means"]  # untouched defaults survive the overlay
    assert cfg.thresholds.theta_e == 0.7
    assert cfg.thresholds.theta_ckpt == 0.0
    assert cfg.seeds == [3, 4]


def test_seed_count_shorthand(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seeds": 3}))
    assert load_config(path, "stationary").seeds == [0, 1, 2]


@pytest.mark.parametrize(
    "body",
    [
        '{"galaxy": {}}',  # unknown top-level key
        '{"thresholds": {"theta_q": 1.0}}',  # unknown threshold
        "not json at all",
        "[1, 2, 3]",  # root is not an object
        '{"seeds": 0}',
        '{"seeds": "many"}',
        '{"seeds": [1, 1]}',  # duplicates
        '{"world": 7}',  # section is not an object
    ],
)
def test_malformed_configs_rejected(tmp_path, body):
    path = tmp_path / "bad.json"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_config(path, "stationary")


def test_missing_config_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json", "stationary")


def test_parse_seeds():
    assert _parse_seeds("3") == [0, 1, 2]
    assert _parse_seeds("1,5,9") == [1, 5, 9]
    assert _parse_seeds("5,") == [5]
    for bad in ("abc", "0", "", "1.5"):
        with pytest.raises(ConfigError):
            _parse_seeds(bad)


# ---------------------------------------------------------------------------
# runner smoke tests (two seeds each; all gates hold deterministically)
# ---------------------------------------------------------------------------


def test_stationary_smoke():
    rep = run_stationary_regret(default_config("stationary").with_seeds([0, 1]))
    assert rep.all_passed, rep.passes
    assert rep.columns[:3] == ["seed", "step", "arm"]
    assert rep.aggregates["last_decile_regret"] <= 0.02
    assert rep.aggregates["half_ratio"] <= 0.7
    assert rep.rows


def test_stationary_policy_ordering():
    base = default_config("stationary").with_seeds([0, 1])
    finals = {}
    for policy in ("oracle", "egreedy", "uniform"):
        cfg = base
        cfg.selector = dict(base.selector, policy=policy)
        finals[policy] = RUNNERS["stationary"](cfg).aggregates["final_cum_regret_mean"]
    assert finals["oracle"] == 0.0
    assert finals["oracle"] < finals["egreedy"] < finals["uniform"]


def test_tracking_smoke():
    rep = run_tracking_regret(default_config("tracking").with_seeds([0, 1]))
    assert rep.all_passed, rep.passes
    assert rep.aggregates["worst_detection_latency"] <= 200
    assert rep.aggregates["reset_to_baseline_ratio"] <= 0.6


def test_checkpoint_smoke():
    rep = run_checkpoint_contraction(default_config("checkpoint").with_seeds([0, 1]))
    assert rep.all_passed, rep.passes
    assert rep.aggregates["monotone_in_rho"]
    assert rep.aggregates["main_mse"] <= 1.10 * rep.aggregates["main_bound"]
    assert set(rep.aggregates["per_rho"]) == {"0.0", "0.25", "0.5", "0.75"}


def test_goal_directed_smoke():
    rep = run_goal_directed(default_config("goal-directed").with_seeds([0, 1]))
    assert rep.all_passed, rep.passes
    assert rep.aggregates["rate_relative_error"] <= 0.2
    assert rep.aggregates["diverged_runs"] == 0


def test_full_agent_smoke():
    rep = run_full_agent(default_config("full-agent").with_seeds([0, 1]))
    assert rep.all_passed, rep.passes
    means = rep.aggregates["compliance_window_means"]
    assert len(means) == 5
    assert all(b >= a - 0.02 for a, b in zip(means, means[1:]))
    assert rep.aggregates["planner_fallbacks"] == 0


def test_full_agent_survives_unreachable_planner():
    cfg = default_config("full-agent").with_seeds([0])
    scripted = build_fixture_planner(
        env_bases=[float(v) for v in cfg.world["env_bases"]],
        targets=[float(v) for v in cfg.world["goal_targets"]],
        bucket_width=float(cfg.world["bucket_width"]),
        hold_length=int(cfg.world["plan_hold_length"]),
    )
    external = ExternalPlanner("http://127.0.0.1:9/plan", scripted, timeout_ms=100)
    rep = run_full_agent(cfg, planner=external)
    assert rep.all_passed, rep.passes
    assert external.fallback_count > 0
    assert rep.aggregates["planner_fallbacks"] == external.fallback_count


def test_reports_are_byte_identical_across_runs():
    cfg = default_config("goal-directed").with_seeds([0, 1, 2])
    a = run_goal_directed(cfg).to_csv()
    b = run_goal_directed(cfg).to_csv()
    assert a == b


def test_tracking_report_deterministic():
    cfg = default_config("tracking").with_seeds([0])
    assert run_tracking_regret(cfg).to_csv() == run_tracking_regret(cfg).to_csv()


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_run_writes_reports_and_exits_zero(tmp_path, capsys):
    code = main(["run", "goal-directed", "--seeds", "2", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert (tmp_path / "goal-directed.csv").exists()
    assert (tmp_path / "goal-directed_summary.json").exists()
    assert "PASS  guided_vs_unguided" in out
    body = json.loads((tmp_path / "goal-directed_summary.json").read_text())
    assert body["all_passed"] is True and body["seeds"] == [0, 1]


def test_cli_failing_gate_exits_one(tmp_path, capsys):
    cfg = tmp_path / "impossible.json"
    cfg.write_text(
        json.dumps(
            {
                "world": {
                    "dim": 4,
                    "eta": 0.05,
                    "steps": 150,
                    "lambda_g": 1.0,
                    "fit_through": 100,
                    "trace_stride": 1,
                    "acceptance": {"t_check": 100, "guided_ratio_max": 0.0, "rate_rel_tol": 0.2},
                },
                "seeds": [0],
            }
        )
    )
    code = main(["run", "goal-directed", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 1
    assert "FAIL  guided_vs_unguided" in capsys.readouterr().out


def test_cli_config_error_exits_two(tmp_path, capsys):
    code = main(["run", "stationary", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_bad_seed_spec_exits_two(tmp_path):
    assert main(["run", "stationary", "--seeds", "zero", "--out", str(tmp_path)]) == 2


def test_cli_unknown_experiment_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "teleport", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_cli_external_planner_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ATM_PLANNER_URL", "http://127.0.0.1:9/plan")
    code = main(
        [
            "run",
            "full-agent",
            "--seeds",
            "1",
            "--out",
            str(tmp_path),
            "--planner-timeout-ms",
            "100",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "planner fallbacks:" in out


def test_thresholds_round_trip():
    t = Thresholds(theta_e=0.7)
    assert Thresholds.from_dict(t.to_dict()) == t
    with pytest.raises(ConfigError):
        Thresholds.from_dict({"theta_zz": 1.0})

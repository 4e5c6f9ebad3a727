import json
from pathlib import Path

import pytest

from rawgnss.cli import EXIT_INPUT, EXIT_OK, EXIT_PROCESSING, EXIT_USAGE, RunConfig, main
from rawgnss.errors import InputError

SNAPSHOTS = Path(__file__).parent / "snapshots"
COMMANDS = {
    "fetch-eph": ["--date", "--cache-dir", "--base-url", "--config"],
    "solve": ["--raw", "--nav", "--mode", "--out", "--report", "--elevation-mask", "--cn0-floor",
              "--cache-dir", "--base-url", "--config"],
    "validate-grid": ["--fixes", "--cell", "--origin", "--min-passes", "--min-drives", "--out",
                      "--histogram", "--config"],
    "compare": ["--candidate", "--baseline", "--out", "--overlay"],
    "orientation-rmse": ["--poses", "--features", "--out"],
    "refine": ["--drives", "--max-iters", "--out"],
    "synth": ["--scene", "--seed", "--feature-drives", "--pose-sigma", "--rot-sigma-deg", "--out"],
}
SCENE = "seed = 0\nn_drives = 3\nsegments = 40:30:15\nrate_hz = 5\n"
ORIGIN = "37.4,-122.1,20.0"
# library-path value for SCENE (kf candidate vs wls baseline, grid anchored at ORIGIN)
SMALL_SCENE_REDUCTION = 0.8306629156340131


def _help(capsys, monkeypatch, command):
    monkeypatch.setenv("COLUMNS", "100")
    assert main([command, "--help"]) == EXIT_OK
    return capsys.readouterr().out


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_every_flag(capsys, monkeypatch, command):
    text = _help(capsys, monkeypatch, command)
    for flag in COMMANDS[command]:
        assert flag in text
    assert text == (SNAPSHOTS / f"help_{command}.txt").read_text()


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["solve", "--raw", "x.csv"]) == EXIT_USAGE
    assert main(["solve", "--raw", "x", "--nav", "y", "--out", "z", "--mode", "ekf"]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["exit_code"] == EXIT_USAGE


def test_missing_input_is_input_error(tmp_path, capsys):
    code = main(["solve", "--raw", str(tmp_path / "none.csv"), "--nav", str(tmp_path / "none.rnx"),
                 "--out", str(tmp_path / "fix.csv")])
    assert code == EXIT_INPUT
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "InputError" and err["exit_code"] == EXIT_INPUT
    assert not (tmp_path / "fix.csv").exists()


def test_no_ephemeris_without_network(tmp_path, capsys):
    assert main(["synth", "--scene", str(_scene_file(tmp_path, "segments = 2:0:10\n")),
                 "--out", str(tmp_path / "s")]) == EXIT_OK
    code = main(["solve", "--raw", str(tmp_path / "s" / "drive_00_raw.csv"), "--nav", "auto",
                 "--cache-dir", str(tmp_path / "cache"), "--base-url", "http://127.0.0.1:9/brdc",
                 "--out", str(tmp_path / "fix.csv")])
    assert code == EXIT_PROCESSING
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "NoEphemeris"
    assert not (tmp_path / "fix.csv").exists()


def test_config_rejects_unknown_and_out_of_range():
    with pytest.raises(InputError, match="unknown config key"):
        RunConfig.from_text("elevation_mask = 5\n")
    with pytest.raises(InputError, match="outside"):
        RunConfig.from_text("elevation_mask_deg = 95\n")
    with pytest.raises(InputError, match="unknown config key"):
        RunConfig.from_text("filter.sigma = 1\n")
    cfg = RunConfig.from_text("cn0_floor = 25\nfilter.gate_sigma = 4\nuse_iono = false\n")
    assert cfg.cn0_floor == 25.0 and cfg.filter.gate_sigma == 4.0 and cfg.use_iono is False


def test_bad_config_file_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["fetch-eph", "--date", "2020-01-01", "--config", str(cfg)]) == EXIT_INPUT
    assert main(["fetch-eph", "--date", "2020-13-01", "--cache-dir", str(tmp_path)]) == EXIT_INPUT


def _scene_file(tmp_path, text=SCENE):
    path = tmp_path / "scene.cfg"
    path.write_text(text)
    return path


def run_pipeline(root: Path) -> dict:
    """synth, solve (both modes), validate-grid and compare; returns output bytes by name."""
    root.mkdir(parents=True, exist_ok=True)
    synth = root / "synth"
    assert main(["synth", "--scene", str(_scene_file(root)), "--out", str(synth)]) == EXIT_OK
    reports = {}
    for mode in ("wls", "kf"):
        fixes = []
        for k in range(3):
            out = root / f"fix_{mode}_{k}.csv"
            assert main(["solve", "--raw", str(synth / f"drive_{k:02d}_raw.csv"), "--nav", str(synth / "nav.rnx"),
                         "--mode", mode, "--out", str(out), "--report", str(root / f"run_{mode}_{k}.json")]) == EXIT_OK
            fixes.append(str(out))
        reports[mode] = root / f"grid_{mode}.json"
        assert main(["validate-grid", "--fixes", *fixes, "--origin", ORIGIN, "--out", str(reports[mode])]) == EXIT_OK
    assert main(["compare", "--candidate", str(reports["kf"]), "--baseline", str(reports["wls"]),
                 "--out", str(root / "compare.json"), "--overlay", str(root / "overlay.csv")]) == EXIT_OK
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline_outputs(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipe"))


def test_pipeline_reproduces_regression_value(pipeline_outputs):
    result = json.loads(pipeline_outputs["compare.json"])
    assert result["altitude_rmse_reduction"] == pytest.approx(SMALL_SCENE_REDUCTION, rel=1e-12)
    grid = json.loads(pipeline_outputs["grid_kf.json"])
    assert grid["spec"]["origin"] == [37.4, -122.1, 20.0]
    assert "horizontal_error_estimate" in grid
    assert pipeline_outputs["grid_kf_histogram.csv"].startswith(b"bin_left,bin_right,count\n")
    assert pipeline_outputs["overlay.csv"].startswith(b"bin_left,bin_right,count_candidate,count_baseline\n")


def test_pipeline_is_deterministic(pipeline_outputs, tmp_path):
    again = run_pipeline(tmp_path / "again")
    assert again.keys() == pipeline_outputs.keys()
    for name in again:
        assert again[name] == pipeline_outputs[name], name


def test_feature_commands(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["synth", "--scene", str(_scene_file(tmp_path, "segments = 1:0:10\n")), "--feature-drives", "3",
                 "--pose-sigma", "1.0", "--rot-sigma-deg", "0.25", "--out", str(out)]) == EXIT_OK
    drives = [str(out / f"features_{k:02d}") for k in range(3)]
    assert main(["refine", "--drives", *drives, "--max-iters", "4", "--out", str(tmp_path / "ref")]) == EXIT_OK
    trace = (tmp_path / "ref" / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,mean_error_px,accepted" and len(trace) >= 3
    errors = [float(r.split(",")[1]) for r in trace[1:] if r.endswith(",1")]
    assert errors[-1] < 0.5 * errors[0]
    assert (tmp_path / "ref" / "poses_02.csv").exists()
    assert main(["refine", "--drives", drives[0], "--out", str(tmp_path / "one")]) == EXIT_PROCESSING
    assert not (tmp_path / "one").exists()


def test_orientation_rmse_on_synth_features(tmp_path):
    scene = _scene_file(tmp_path, "segments = 1:0:10\n")
    for sigma in ("0", "0.5"):
        out = tmp_path / f"s{sigma}"
        assert main(["synth", "--scene", str(scene), "--feature-drives", "1",
                     "--rot-sigma-deg", sigma, "--out", str(out)]) == EXIT_OK
        report = tmp_path / f"o{sigma}.json"
        assert main(["orientation-rmse", "--poses", str(out / "features_00" / "poses.csv"),
                     "--features", str(out / "features_00" / "features.csv"), "--out", str(report)]) == EXIT_OK
        rmse = json.loads(report.read_text())["rmse_deg"]
        if sigma == "0":
            assert max(rmse.values()) < 1e-6
        else:
            assert max(rmse.values()) > 0.1

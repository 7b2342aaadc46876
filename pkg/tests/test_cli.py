"""End-to-end CLI tests driving entry() in process."""

from __future__ import annotations

import json

import pytest

from swarmphase.cli import WORKERS_ENV, entry


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


def run_cli(capsys, *argv):
    code = entry(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


SIM_ARGS = [
    "simulate",
    "--controller", "milling",
    "--n", "3",
    "--v", "0.25",
    "--omega-deg", "45",
    "--gamma", "1",
    "--phi-deg", "50",
    "--horizon", "1",
    "--eval-window", "0.5",
    "--seed", "3",
]


def write_grid(path, axes, trials=2, base_seed=5, **extra):
    obj = {
        "base_params": {
            "controller": "milling", "n": 3, "v": 0.25, "omega_deg": 45.0,
            "gamma": 1.0, "phi_deg": 50.0, "horizon": 1.0,
            "eval_window": 0.5,
        },
        "axes": axes,
        "trials": trials,
        "base_seed": base_seed,
    }
    obj.update(extra)
    path.write_text(json.dumps(obj))
    return obj


class TestSimulate:
    def test_writes_outputs_and_reports(self, tmp_path, capsys):
        code, out, err = run_cli(
            capsys, *SIM_ARGS, "--out", str(tmp_path), "--markers-csv"
        )
        result = json.loads(out)
        assert result["behavior"] == "milling"
        assert result["value"] in (0, 1)
        assert code == (0 if result["value"] == 1 else 2)
        assert (tmp_path / "trajectory.jsonl").exists()
        assert (tmp_path / "markers.csv").exists()
        assert "trajectory written" in err

    def test_header_echoes_run_configuration(self, tmp_path, capsys):
        run_cli(capsys, *SIM_ARGS, "--out", str(tmp_path))
        header = json.loads(
            (tmp_path / "trajectory.jsonl").read_text().splitlines()[0]
        )
        assert header["config"]["seed"] == 3
        assert header["config"]["n"] == 3
        assert header["params"]["n_agents"] == 3

    def test_invalid_agent_count(self, tmp_path, capsys):
        argv = [a if a != "3" else "0" for a in SIM_ARGS]
        code, _, err = run_cli(capsys, *argv, "--out", str(tmp_path))
        assert code == 1
        assert "n" in err

    def test_missing_required_parameter(self, tmp_path, capsys):
        argv = list(SIM_ARGS)
        i = argv.index("--v")
        del argv[i:i + 2]
        code, _, err = run_cli(capsys, *argv, "--out", str(tmp_path))
        assert code == 1
        assert "v" in err

    def test_flag_overrides_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "controller": "milling", "n": 3, "v": 0.25, "omega_deg": 45.0,
            "gamma": 1.0, "phi_deg": 50.0, "horizon": 1.0,
            "eval_window": 0.5, "seed": 3,
        }))
        code, _, _ = run_cli(
            capsys, "simulate", "--config", str(cfg), "--n", "4",
            "--out", str(tmp_path),
        )
        assert code in (0, 2)
        header = json.loads(
            (tmp_path / "trajectory.jsonl").read_text().splitlines()[0]
        )
        assert header["config"]["n"] == 4
        assert header["params"]["n_agents"] == 4
        # untouched keys flow through from the file
        assert header["config"]["omega_deg"] == 45.0

    def test_bad_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text("{nope")
        code, _, err = run_cli(capsys, "simulate", "--config", str(cfg))
        assert code == 1
        assert "config" in err


class TestClassify:
    @pytest.fixture()
    def traj_dir(self, tmp_path, capsys):
        run_cli(capsys, *SIM_ARGS, "--out", str(tmp_path))
        return tmp_path

    def test_round_trips_simulate_verdict(self, traj_dir, capsys):
        sim_code, sim_out, _ = run_cli(
            capsys, *SIM_ARGS, "--out", str(traj_dir)
        )
        code, out, _ = run_cli(
            capsys, "classify", "--trajectory",
            str(traj_dir / "trajectory.jsonl"),
        )
        assert code == sim_code
        assert json.loads(out) == json.loads(sim_out)

    def test_behavior_override(self, traj_dir, capsys):
        code, out, _ = run_cli(
            capsys, "classify", "--trajectory",
            str(traj_dir / "trajectory.jsonl"), "--behavior", "diffusion",
        )
        result = json.loads(out)
        assert result["behavior"] == "diffusion"
        assert set(result["thresholds"]) == {"nn_variance_max"}
        assert code in (0, 2)

    def test_eval_window_override(self, traj_dir, capsys):
        code, out, _ = run_cli(
            capsys, "classify", "--trajectory",
            str(traj_dir / "trajectory.jsonl"), "--eval-window", "0.3",
        )
        assert code in (0, 2)
        lo, hi = json.loads(out)["window"]
        assert hi - lo == pytest.approx(0.3)

    def test_corrupt_line_reported(self, traj_dir, capsys):
        path = traj_dir / "trajectory.jsonl"
        lines = path.read_text().splitlines()
        lines[2] = "{broken"
        path.write_text("\n".join(lines) + "\n")
        code, _, err = run_cli(capsys, "classify", "--trajectory", str(path))
        assert code == 1
        assert "line 3" in err

    def test_missing_inputs(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "classify")
        assert code == 1 and "trajectory" in err
        code, _, err = run_cli(
            capsys, "classify", "--trajectory", str(tmp_path / "nope.jsonl")
        )
        assert code == 1


class TestSweep:
    def test_produces_trials_and_cells(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.json"
        write_grid(grid_path, [{"name": "N", "values": [3, 4]}])
        out = tmp_path / "out"
        code, _, err = run_cli(
            capsys, "sweep", "--grid", str(grid_path), "--out", str(out)
        )
        assert code == 0
        assert "sweep complete: 2 cells" in err
        lines = (out / "trials.jsonl").read_text().splitlines()
        assert len(lines) == 1 + 4
        cells = json.loads((out / "cells.json").read_text())
        assert cells["format"] == "swarmphase.cells"
        assert len(cells["cells"]) == 2

    def test_rerun_is_stable(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.json"
        write_grid(grid_path, [{"name": "N", "values": [3, 4]}])
        out = tmp_path / "out"
        run_cli(capsys, "sweep", "--grid", str(grid_path), "--out", str(out))
        before = (out / "cells.json").read_bytes()
        trials_before = (out / "trials.jsonl").read_bytes()
        code, _, _ = run_cli(
            capsys, "sweep", "--grid", str(grid_path), "--out", str(out)
        )
        assert code == 0
        assert (out / "cells.json").read_bytes() == before
        assert (out / "trials.jsonl").read_bytes() == trials_before

    def test_execution_keys_in_grid_file(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.json"
        out = tmp_path / "nested"
        write_grid(grid_path, [{"name": "N", "values": [3, 4]}],
                   workers=1, out=str(out))
        code, _, _ = run_cli(capsys, "sweep", "--grid", str(grid_path))
        assert code == 0
        header = json.loads(
            (out / "trials.jsonl").read_text().splitlines()[0]
        )
        assert "workers" not in header["config"]
        assert "out" not in header["config"]

    def test_invalid_grids(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "sweep")
        assert code == 1 and "grid" in err

        code, _, err = run_cli(
            capsys, "sweep", "--grid", str(tmp_path / "missing.json")
        )
        assert code == 1 and "cannot read" in err

        bad = tmp_path / "bad.json"
        write_grid(bad, [{"name": "speed", "values": [1, 2]}])
        code, _, err = run_cli(
            capsys, "sweep", "--grid", str(bad), "--out", str(tmp_path)
        )
        assert code == 1 and "unknown axis" in err

    def test_workers_env_fallback(self, tmp_path, capsys, monkeypatch):
        grid_path = tmp_path / "grid.json"
        write_grid(grid_path, [{"name": "N", "values": [3]}], trials=1)

        monkeypatch.setenv(WORKERS_ENV, "abc")
        code, _, err = run_cli(
            capsys, "sweep", "--grid", str(grid_path), "--out", str(tmp_path)
        )
        assert code == 1
        assert WORKERS_ENV in err

        monkeypatch.setenv(WORKERS_ENV, "1")
        code, _, _ = run_cli(
            capsys, "sweep", "--grid", str(grid_path), "--out", str(tmp_path)
        )
        assert code == 0

    def test_workers_validation(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.json"
        write_grid(grid_path, [{"name": "N", "values": [3]}], trials=1)
        code, _, err = run_cli(
            capsys, "sweep", "--grid", str(grid_path), "--workers", "0",
            "--out", str(tmp_path),
        )
        assert code == 1 and "workers" in err


class TestRender:
    @pytest.fixture()
    def cells_path(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.json"
        write_grid(
            grid_path,
            [{"name": "N", "values": [3, 4]},
             {"name": "phi", "values": [30.0, 50.0]}],
            trials=1,
        )
        out = tmp_path / "sweep"
        run_cli(capsys, "sweep", "--grid", str(grid_path), "--out", str(out))
        return out / "cells.json"

    def test_renders_svg_and_csv(self, cells_path, tmp_path, capsys):
        out = tmp_path / "render"
        code, _, err = run_cli(
            capsys, "render", "--cells", str(cells_path), "--out", str(out)
        )
        assert code == 0
        svg = (out / "phase.svg").read_text()
        assert svg.startswith("<svg")
        assert svg.count('class="cell"') == 4
        rows = (out / "phase.csv").read_text().splitlines()
        assert rows[0].startswith("N/phi")
        assert "wrote" in err

    def test_deterministic_output(self, cells_path, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli(capsys, "render", "--cells", str(cells_path), "--out", str(a))
        run_cli(capsys, "render", "--cells", str(cells_path), "--out", str(b))
        assert (a / "phase.svg").read_bytes() == (b / "phase.svg").read_bytes()
        assert (a / "phase.csv").read_bytes() == (b / "phase.csv").read_bytes()

    def test_explicit_paths_and_palette(self, cells_path, tmp_path, capsys):
        svg = tmp_path / "custom.svg"
        csv_path = tmp_path / "custom.csv"
        code, _, _ = run_cli(
            capsys, "render", "--cells", str(cells_path),
            "--svg", str(svg), "--csv", str(csv_path),
            "--palette", "blue-red", "--out", str(tmp_path),
        )
        assert code == 0
        assert "#4575b4" in svg.read_text()
        assert csv_path.exists()

    def test_bad_palette(self, cells_path, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "render", "--cells", str(cells_path),
            "--palette", "neon", "--out", str(tmp_path),
        )
        assert code == 1 and "palette" in err

    def test_one_axis_grid_rejected(self, tmp_path, capsys):
        grid_path = tmp_path / "grid.json"
        write_grid(grid_path, [{"name": "N", "values": [3, 4]}], trials=1)
        out = tmp_path / "sweep1d"
        run_cli(capsys, "sweep", "--grid", str(grid_path), "--out", str(out))
        code, _, err = run_cli(
            capsys, "render", "--cells", str(out / "cells.json"),
            "--out", str(tmp_path),
        )
        assert code == 1
        assert "2-axis" in err

    def test_missing_cells(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "render")
        assert code == 1 and "cells" in err


class TestParsing:
    def test_help_exits_zero(self, capsys):
        assert run_cli(capsys, "--help")[0] == 0
        assert run_cli(capsys, "simulate", "--help")[0] == 0

    def test_usage_errors_exit_one(self, capsys):
        assert run_cli(capsys)[0] == 1
        assert run_cli(capsys, "simulate", "--bogus")[0] == 1
        assert run_cli(capsys, "frobnicate")[0] == 1

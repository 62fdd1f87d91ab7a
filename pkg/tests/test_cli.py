"""Config contract, artifact formats, exit codes, and end-to-end determinism."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from gvolterra.cli import ConfigError, default_config, main, validate_config


def run_cli(args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "gvolterra.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestConfigValidation:
    def test_defaults_validate(self):
        assert validate_config({}) == default_config()

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            validate_config({"bogus": {}})

    def test_unknown_key_in_section(self):
        with pytest.raises(ConfigError, match="unknown key"):
            validate_config({"grid": {"horizon": 1.0, "extra": 2}})

    def test_unknown_study_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            validate_config({"study": {"kind": "expect", "alphas": [1, 2]}})

    def test_bad_kind(self):
        with pytest.raises(ConfigError, match="study.kind"):
            validate_config({"study": {"kind": "simulate"}})

    def test_band_invariant_surfaces(self):
        with pytest.raises(ConfigError, match="sigma_low"):
            validate_config({"g": {"sigma_low": 2.0, "sigma_high": 1.0}})

    def test_seed_range(self):
        with pytest.raises(ConfigError, match="64-bit"):
            validate_config({"monte_carlo": {"master_seed": 2**64}})

    def test_type_errors_name_the_key(self):
        with pytest.raises(ConfigError, match="grid.steps"):
            validate_config({"grid": {"steps": 1.5}})

    def test_bad_solver_mode(self):
        with pytest.raises(ConfigError, match="solver.mode"):
            validate_config({"solver": {"mode": "euler"}})


class TestSolveStudy:
    def test_zero_family_paths_echo_phi(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 10},
            "monte_carlo": {"replicas": 2, "master_seed": 1},
            "problem": {"family": "zero", "params": {"phi0": 0.25}},
            "study": {"kind": "solve"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["solve", "--config", path, "--out", str(out)]) == 0
        lines = (out / "paths.csv").read_text().splitlines()
        assert lines[0] == "scenario_id,control_id,t,X"
        assert all(line.rsplit(",", 1)[1] == "0.25" for line in lines[1:])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["terminal_mean_upper"] == 0.25

    def test_csv_has_lf_only(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 4},
            "monte_carlo": {"replicas": 1, "master_seed": 1},
            "problem": {"family": "zero"},
            "study": {"kind": "solve"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        main(["solve", "--config", path, "--out", str(out)])
        raw = (out / "paths.csv").read_bytes()
        assert b"\r" not in raw


class TestExpectStudy:
    def test_driver_square(self, tmp_path):
        cfg = {
            "g": {"sigma_low": 1.0, "sigma_high": 2.0},
            "grid": {"horizon": 1.0, "steps": 64},
            "monte_carlo": {"replicas": 2000, "master_seed": 20240901},
            "study": {"kind": "expect", "target": "driver", "payoff": "terminal_square"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["expect", "--config", path, "--out", str(out)]) == 0
        est = json.loads((out / "estimate.json").read_text())
        assert abs(est["value"] - 4.0) <= 3.0 * est["std_error"]
        assert abs(est["lower_value"] - 1.0) <= 3.0 * est["lower_std_error"]
        assert est["argmax_control"] != est["argmin_control"]
        assert len(est["per_control"]) == 2

    def test_seventeen_digit_floats(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 16},
            "monte_carlo": {"replicas": 100, "master_seed": 7},
            "study": {"kind": "expect", "target": "driver", "payoff": "terminal_square"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        main(["expect", "--config", path, "--out", str(out)])
        text = (out / "estimate.json").read_text()
        est = json.loads(text)
        # the serialized token round-trips to the exact double
        token = format(est["value"], ".17g")
        assert token in text


class TestConvergeStudy:
    def test_taylor_remainder_increments(self, tmp_path):
        cfg = {
            "g": {"sigma_low": 1.0, "sigma_high": 1.0},
            "grid": {"horizon": 1.0, "steps": 400},
            "lattice": {"levels": 1, "pieces": 1},
            "monte_carlo": {"replicas": 1, "master_seed": 0},
            "problem": {"family": "linear_ode"},
            "solver": {"mode": "picard", "tol": 1e-28, "max_iter": 30},
            "study": {"kind": "converge"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["converge", "--config", path, "--out", str(out)]) == 0
        rows = (out / "increments.csv").read_text().splitlines()
        assert rows[0] == "iter,d_n"
        d = [float(r.split(",")[1]) for r in rows[1:]]
        N, dt = 400, 1.0 / 400
        for n in range(6):
            expected = (dt ** (n + 1) * math.comb(N, n + 1)) ** 2
            assert d[n] == pytest.approx(expected, rel=1e-9)
        fit = json.loads((out / "ratefit.json").read_text())
        assert fit["passed"] and fit["converged"]


class TestSweepStudy:
    def test_degenerate_slope(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 32},
            "monte_carlo": {"replicas": 16, "master_seed": 2},
            "problem": {"family": "affine_param", "params": {"coeff_scale": 0.0}},
            "study": {"kind": "sweep", "alphas": [0.0, 0.1, 0.2, 0.4]},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["sweep", "--config", path, "--out", str(out)]) == 0
        slope = json.loads((out / "slope.json").read_text())
        assert abs(slope["slope"] - 2.0) <= 1e-12
        rows = (out / "continuity.csv").read_text().splitlines()
        assert rows[0] == "alpha,beta,distance"
        assert len(rows) == 1 + 6

    def test_alphas_required(self, tmp_path):
        cfg = {"problem": {"family": "affine_param"}, "study": {"kind": "sweep"}}
        path = write_config(tmp_path, cfg)
        assert main(["sweep", "--config", path, "--out", str(tmp_path / "o")]) == 1


class TestHolderStudy:
    def test_brownian_exponent(self, tmp_path):
        cfg = {
            "g": {"sigma_low": 1.0, "sigma_high": 1.0},
            "grid": {"horizon": 1.0, "steps": 512},
            "lattice": {"levels": 1, "pieces": 1},
            "monte_carlo": {"replicas": 400, "master_seed": 6},
            "study": {"kind": "holder", "p": 4, "target": "driver"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["holder", "--config", path, "--out", str(out)]) == 0
        exp = json.loads((out / "exponent.json").read_text())
        assert exp["exponent"] == pytest.approx(2.0, abs=0.25)
        rows = (out / "moments.csv").read_text().splitlines()
        assert rows[0] == "lag,moment"


class TestVerify:
    def test_default_run_passes(self, tmp_path):
        out = tmp_path / "v"
        r = run_cli(["verify", "--out", str(out), "--seed", "20240901"])
        assert r.returncode == 0, r.stderr
        vj = json.loads((out / "verify.json").read_text())
        assert vj["passed"]
        assert vj["failing"] == []
        assert all(c["passed"] for c in vj["checks"].values())
        # one named pass/fail line per invariant on stdout
        assert len([l for l in r.stdout.splitlines() if l.endswith(": pass")]) == len(
            vj["checks"]
        )

    def test_inject_negative_control(self, tmp_path):
        out = tmp_path / "vi"
        r = run_cli(
            ["verify", "--out", str(out), "--seed", "20240901", "--inject", "lipschitz-violation"]
        )
        assert r.returncode == 2
        assert "lipschitz_audit" in r.stderr
        vj = json.loads((out / "verify.json").read_text())
        assert vj["failing"] == ["lipschitz_audit"]

    def test_exit_one_on_bad_config(self, tmp_path):
        path = write_config(tmp_path, {"g": {"sigma_low": 3.0, "sigma_high": 1.0}})
        r = run_cli(["verify", "--config", path])
        assert r.returncode == 1
        assert "sigma_low" in r.stderr


class TestDeterminismAndManifest:
    def test_identical_artifacts(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 32},
            "monte_carlo": {"replicas": 200, "master_seed": 11},
            "study": {"kind": "expect", "target": "driver", "payoff": "terminal_square"},
        }
        path = write_config(tmp_path, cfg)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["expect", "--config", path, "--out", str(a)]) == 0
        assert main(["expect", "--config", path, "--out", str(b)]) == 0
        assert (a / "estimate.json").read_bytes() == (b / "estimate.json").read_bytes()
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        ma.pop("wall_time_seconds")
        mb.pop("wall_time_seconds")
        assert ma == mb

    def test_manifest_round_trips(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 8},
            "monte_carlo": {"replicas": 4, "master_seed": 3},
            "problem": {"family": "zero"},
            "study": {"kind": "solve"},
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        main(["solve", "--config", path, "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"]["name"] == "gvolterra"
        assert validate_config(manifest["config"]) == manifest["config"]

    def test_seed_override_changes_draws(self, tmp_path):
        cfg = {
            "grid": {"horizon": 1.0, "steps": 32},
            "monte_carlo": {"replicas": 50, "master_seed": 11},
            "study": {"kind": "expect", "target": "driver", "payoff": "terminal_square"},
        }
        path = write_config(tmp_path, cfg)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["expect", "--config", path, "--out", str(a)])
        main(["expect", "--config", path, "--out", str(b), "--seed", "12"])
        ea = json.loads((a / "estimate.json").read_text())
        eb = json.loads((b / "estimate.json").read_text())
        assert ea["value"] != eb["value"]

    def test_kind_mismatch(self, tmp_path):
        path = write_config(tmp_path, {"study": {"kind": "solve"}})
        assert main(["expect", "--config", path, "--out", str(tmp_path / "o")]) == 1

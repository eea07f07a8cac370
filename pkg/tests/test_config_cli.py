import json
import os
import subprocess
import sys

import numpy as np
import pytest

from folisim import config as cfgmod
from folisim.errors import SchemaError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture(scope="module")
def linear_cfg():
    return cfgmod.load_config(os.path.join(CONFIG_DIR, "linear2d.json"))


class TestConfig:
    def test_builtin_configs_load_and_rebuild(self):
        for name in ("linear2d", "linear3d", "deg2_p2", "deg2_p3"):
            cfg = cfgmod.load_config(os.path.join(CONFIG_DIR, f"{name}.json"))
            fol = cfgmod.foliation_from_config(cfg)
            assert fol.degree == cfg["foliation"]["degree"]

    def test_shipped_configs_match_builders(self, tmp_path):
        # regenerating from the example builders reproduces the shipped files
        paths = cfgmod.write_builtin_configs(tmp_path)
        for p in paths:
            name = os.path.basename(p)
            with open(p) as fh:
                fresh = json.load(fh)
            with open(os.path.join(CONFIG_DIR, name)) as fh:
                shipped = json.load(fh)
            assert cfgmod.config_sha(fresh) == cfgmod.config_sha(shipped)

    def test_schema_rejects_garbage(self):
        with pytest.raises(SchemaError):
            cfgmod.validate_config({"name": "x"})
        with pytest.raises(SchemaError):
            cfgmod.validate_config(
                {"name": "x", "sampler": {"h": 0.1, "horizon": 1.0},
                 "foliation": {"dimension": 4, "degree": 1,
                               "atlas": "single", "charts": []}})

    def test_non_hyperbolic_needs_exploratory_flag(self, linear_cfg):
        import copy
        bad = copy.deepcopy(linear_cfg)
        # make the field have a real eigenvalue ratio
        bad["foliation"]["charts"][0]["field"][1] = [[[0, 1], 2.0, 0.0]]
        with pytest.raises(SchemaError):
            cfgmod.foliation_from_config(bad)
        bad["exploratory"] = True
        fol = cfgmod.foliation_from_config(bad)
        assert fol is not None

    def test_invariant_plane_divisibility_enforced(self):
        cfg = cfgmod.load_config(os.path.join(CONFIG_DIR, "deg2_p3.json"))
        import copy
        bad = copy.deepcopy(cfg)
        # constant term in the plane component breaks divisibility
        bad["foliation"]["charts"][0]["field"][2].append([[0, 0, 0], 0.5, 0.0])
        with pytest.raises(ValueError):
            cfgmod.foliation_from_config(bad)

    def test_config_sha_stable(self, linear_cfg):
        assert cfgmod.config_sha(linear_cfg) == cfgmod.config_sha(
            json.loads(json.dumps(linear_cfg)))


def _run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "folisim.cli", *args],
        capture_output=True, text=True, timeout=600)


class TestCli:
    def test_singularities_linear(self, tmp_path):
        out = _run_cli(["singularities",
                        "--config", os.path.join(CONFIG_DIR, "linear2d.json"),
                        "--out", str(tmp_path)])
        assert out.returncode == 0
        assert "hyperbolic" in out.stdout
        assert (tmp_path / "singularities.csv").exists()
        header = (tmp_path / "singularities.csv").read_text().splitlines()[0]
        assert header.startswith("# config_sha256=")

    def test_lyapunov_reproducible_byte_identical(self, tmp_path):
        outs = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            out = _run_cli(["lyapunov",
                            "--config", os.path.join(CONFIG_DIR, "linear2d.json"),
                            "--out", str(d), "--paths", "30",
                            "--horizon", "2.0"])
            assert out.returncode == 0, out.stderr
            outs.append((d / "lyapunov_slopes.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_heat_tail_runs(self, tmp_path):
        out = _run_cli(["heat-tail",
                        "--config", os.path.join(CONFIG_DIR, "linear2d.json"),
                        "--out", str(tmp_path)])
        assert out.returncode == 0, out.stderr
        summary = json.loads((tmp_path / "heat_tail.json").read_text())
        assert summary["slope"] < 0
        assert summary["r_squared"] >= 0.9

    def test_validate_quick_passes(self, tmp_path):
        out = _run_cli(["validate", "--quick",
                        "--config", os.path.join(CONFIG_DIR, "linear2d.json"),
                        "--out", str(tmp_path)])
        assert out.returncode == 0, out.stdout + out.stderr
        report = json.loads((tmp_path / "validate.json").read_text())
        assert report["passed"]

    def test_validate_quick_deg2(self, tmp_path):
        out = _run_cli(["validate", "--quick",
                        "--config", os.path.join(CONFIG_DIR, "deg2_p2.json"),
                        "--out", str(tmp_path)])
        assert out.returncode == 0, out.stdout + out.stderr

    def test_occupation_small(self, tmp_path):
        out = _run_cli(["occupation",
                        "--config", os.path.join(CONFIG_DIR, "linear3d.json"),
                        "--out", str(tmp_path), "--paths", "4",
                        "--horizon", "2.0"])
        assert out.returncode == 0, out.stderr
        rows = (tmp_path / "occupation.csv").read_text().splitlines()[2:]
        mass = sum(float(r.split(",")[-1]) for r in rows)
        assert mass == pytest.approx(1.0, abs=1e-9)

    def test_bad_config_schema_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"name": "nope"}))
        out = _run_cli(["singularities", "--config", str(bad),
                        "--out", str(tmp_path)])
        assert out.returncode == 2
        assert "error" in out.stderr

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from cgolab import experiment as ex
from cgolab.cli import main
from cgolab.errors import ConfigError
from cgolab.recovery import FrozenConstants

# Calibrated on the default corpus; frozen so these tests skip calibration.
CONSTANTS = {"C": 1.9020139679791181, "C_star": 5e-05, "C_cal": 0.07428362725763371, "C_int": 0.0043325531468982196,
             "C_tail": 0.01701555696869295, "C_coupling": 0.0006997689250124604,
             "C_reflected": 0.017603555266861335, "C_data": 0.006429532041999414, "C_rl": 0.01948592427990627,
             "trivial": 2000.0}

SMALL = """
seed = 3
[domain]
n = 16
[sweep]
k = [1.0, 4.0]
noise = [1e-3]
[constants]
C = 1.9020139679791181
C_star = 5e-05
C_cal = 0.07428362725763371
C_int = 0.0043325531468982196
C_tail = 0.01701555696869295
C_coupling = 0.0006997689250124604
C_reflected = 0.017603555266861335
C_data = 0.006429532041999414
C_rl = 0.01948592427990627
trivial = 2000.0
"""


@pytest.fixture
def small_toml(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_defaults_and_overrides():
    cfg = ex.load_config(None)
    assert cfg.domain.n == 32 and cfg.sweep.k == (1.0, 2.0, 4.0, 8.0)
    c2 = cfg.with_overrides(seed=11, threads=None, grid_n=16)
    assert (c2.seed, c2.threads, c2.domain.n) == (11, 1, 16)
    assert cfg.domain.n == 32
    assert ex.config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"domain": {"n": "16"}},
    {"domain": {"width": 1.0}},
    {"sweep": {"k": 2.0}},
    {"sweep": {"correction": "magic"}},
    {"sweep": {"noise": [1.5]}},
    {"schedule": {"strict": 1}},
    {"domain": {"n": 15}},
    {"potentials": {"q1": {"terms": [{"type": "spline"}]}}},
    {"threads": 0},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ex.config_from_dict(bad)


def test_toml_loading(small_toml, tmp_path):
    cfg = ex.load_config(small_toml)
    assert cfg.seed == 3 and cfg.domain.n == 16 and cfg.sweep.k == (1.0, 4.0)
    assert ex.resolve_constants(cfg) == FrozenConstants.from_dict(CONSTANTS)
    bad = tmp_path / "bad.toml"
    bad.write_text("[domain\n")
    with pytest.raises(ConfigError):
        ex.load_config(bad)
    with pytest.raises(ConfigError):
        ex.load_config(tmp_path / "missing.toml")


def test_cell_seeds_are_stable():
    assert ex.cell_seeds(7, 0) == ex.cell_seeds(7, 0)
    assert ex.cell_seeds(7, 0) != ex.cell_seeds(7, 1)
    assert len(set(ex.cell_seeds(7, 2))) == 4


def test_small_sweep_outputs(small_toml, tmp_path):
    cfg = ex.load_config(small_toml)
    r = ex.run_sweep(cfg, tmp_path / "run", ex.resolve_constants(cfg))
    assert r["failed"] == 0 and r["n_cells"] == 2
    out = tmp_path / "run"
    for name in ("sweep.csv", "budgets.csv", "manifest.json", "timing.json"):
        assert (out / name).is_file()
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [float(x["k"]) for x in rows] == [1.0, 4.0]
    assert all(x["status"] == "ok" for x in rows)
    for x in rows:
        assert float(x["error_linf"]) <= float(x["rhs_bound"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert "timing" not in json.dumps(manifest)
    assert manifest["config"]["domain"]["n"] == 16
    assert len(list((out / "fields").glob("cell_*_q0.json"))) == 2
    budgets = list(csv.DictReader((out / "budgets.csv").open()))
    assert {"lhs", "coupling", "closure", "mode_error"} <= set(budgets[0])


def test_failing_cell_is_tagged(tmp_path):
    cfg = ex.config_from_dict({"domain": {"n": 16}, "sweep": {"k": [1.0]}, "schedule": {"strict": True},
                               "constants": dict(CONSTANTS, C_star=1.0)})
    r = ex.run_sweep(cfg, tmp_path / "run", ex.resolve_constants(cfg))
    assert r["failed"] == 1
    row = next(csv.DictReader((tmp_path / "run" / "sweep.csv").open()))
    assert row["status"] == "ScheduleInfeasible"


def test_cli_exit_codes(small_toml, tmp_path):
    assert main(["frames", "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "frames.csv").is_file()
    assert main(["sweep", "--config", str(small_toml), "--out", str(tmp_path / "s")]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text("[domain]\nwidth = 2\n")
    assert main(["frames", "--config", str(bad), "--out", str(tmp_path / "b")]) == 1
    strict = tmp_path / "strict.toml"
    strict.write_text(SMALL.replace("C_star = 5e-05", "C_star = 1.0").replace("[constants]",
                                                                              "[schedule]\nstrict = true\n[constants]"))
    assert main(["sweep", "--config", str(strict), "--out", str(tmp_path / "x")]) == 2
    assert main(["recover", "--config", str(small_toml), "--k", "2", "--out", str(tmp_path / "r")]) == 0
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_shipped_configs_load():
    root = Path(__file__).resolve().parents[1] / "configs"
    assert ex.load_config(root / "headline.toml") == ex.load_config(None)
    quick = ex.load_config(root / "quick.toml")
    assert quick.domain.n == 16 and ex.resolve_constants(quick) == FrozenConstants.from_dict(CONSTANTS)

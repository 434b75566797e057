import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from paraprod.cli import ConfigError, ExperimentConfig, main, run_and_emit, sanitize


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return p


def run(tmp_path, experiment, cfg, *extra):
    out = tmp_path / "out"
    code = main([experiment, "--config", str(write(tmp_path, cfg)), "--out", str(out), *extra])
    return code, out


SPARSE = {"experiment": "sparse-certify", "dim": 1, "resolution": 5, "ensemble_size": 3, "seed": 4}


@pytest.mark.parametrize("cfg", [
    "{not json",
    [1, 2],
    {"experiment": "sparse-certify", "colour": "red"},
    {"experiment": "sparse-certify", "resolution": -1},
    {"experiment": "sparse-certify", "ensemble_size": True},
    {"experiment": "sparse-certify", "seed": 2 ** 64},
    {"experiment": "opnorm-dyadic", "exponents": {"p": 1.0, "q": 2.0}},
    {"experiment": "opnorm-dyadic", "exponents": {"q": 2.0}},
    {"experiment": "opnorm-dyadic"},
    {"experiment": "hedberg", "exponents": {"p": 1.0}},
    {"experiment": "atom-build", "dim": 2},
    {"experiment": "equivalence", "exponents": {"p": 1.0, "q": 0.5}, "params": {"family": "nope"}},
    {"experiment": "sparse-certify", "params": {"eta": "half"}},
    {"experiment": "ppn", "params": {"p": 2.0, "q": 1.0}},
    {"experiment": "adjoint-gap", "exponents": {"p": 2.0, "q": 0.5}, "resolution": 4, "params": {"levels": [5]}},
])
def test_bad_configs_exit_2(tmp_path, cfg, capsys):
    experiment = cfg.get("experiment", "sparse-certify") if isinstance(cfg, dict) else "sparse-certify"
    code, out = run(tmp_path, experiment, cfg)
    assert code == 2
    assert "error" in capsys.readouterr().err
    assert not (out / "report.json").exists()


def test_missing_config_and_mismatch(tmp_path):
    assert main(["sparse-certify", "--config", str(tmp_path / "none.json")]) == 2
    code, _ = run(tmp_path, "ppn", SPARSE)
    assert code == 2


def test_empty_ensemble(tmp_path):
    code, out = run(tmp_path, "sparse-certify", dict(SPARSE, ensemble_size=0))
    assert code == 0
    text = (out / "trials.csv").read_text()
    assert text.count("\n") == 1
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] is True and report["trials"] == 0
    assert report["schema"]["csv_columns"] == text.strip().split(",")


def test_sparse_run_and_schema(tmp_path):
    code, out = run(tmp_path, "sparse-certify", SPARSE)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema"]["version"] == 1 and report["assertions"] == {"certified": True}
    rows = list(csv.DictReader(io.StringIO((out / "trials.csv").read_text())))
    assert len(rows) == 3 and all(r["passed"] == "true" for r in rows)
    assert all(float(r["C"]) <= 8 for r in rows)


def test_determinism_and_seed_override(tmp_path):
    cfg = {"experiment": "opnorm-dyadic", "dim": 1, "resolution": 4, "ensemble_size": 2, "seed": 9,
           "exponents": {"p": 1.0, "q": 0.5}, "params": {"budget": 4}}
    outs = []
    for k, seed in enumerate(("9", "9", "10")):
        out = tmp_path / f"o{k}"
        assert main(["opnorm-dyadic", "--config", str(write(tmp_path, cfg)), "--out", str(out), "--seed", seed]) == 0
        outs.append(((out / "report.json").read_bytes(), (out / "trials.csv").read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0][1] != outs[2][1]


def test_inf_exponent_is_sanitized(tmp_path):
    cfg = {"experiment": "equivalence", "dim": 1, "resolution": 3, "ensemble_size": 2,
           "exponents": {"p": 2.0, "r": "inf"}, "params": {"budget": 2}}
    code, out = run(tmp_path, "equivalence", cfg)
    assert code in (0, 1)
    text = (out / "report.json").read_text()
    report = json.loads(text)
    assert report["config"]["exponents"]["r"] == "inf"
    assert "Infinity" not in text and "NaN" not in text


def test_sanitize():
    got = sanitize({"a": math.inf, "b": [np.float64(-math.inf), math.nan], "c": np.int64(3), "d": np.bool_(True),
                    "e": np.arange(2)})
    assert got == {"a": "inf", "b": ["-inf", "nan"], "c": 3, "d": True, "e": [0, 1]}


def test_config_defaults_and_params():
    cfg = ExperimentConfig.from_dict({"experiment": "ppn", "params": {"p": 1}})
    assert cfg.resolution == 6 and cfg.param("p", 1.0) == 1 and cfg.param("q", 2.0) == 2.0
    with pytest.raises(ConfigError):
        cfg.need_exponents()


def test_ppn_constant_exact():
    cfg = ExperimentConfig.from_dict({"experiment": "ppn", "resolution": 8, "ensemble_size": 3,
                                      "params": {"bandwidth": 16.0}})
    report, _ = run_and_emit(cfg)
    assert report["assertions"]["constant_exact"] and report["pass"]


def test_hedberg_run():
    cfg = ExperimentConfig.from_dict({"experiment": "hedberg", "resolution": 5, "ensemble_size": 3,
                                      "exponents": {"p": 1.0, "alpha": 0.5}})
    report, text = run_and_emit(cfg)
    assert report["pass"] and len(text.strip().splitlines()) == 4


def test_module_entry_point(tmp_path):
    cfgp = write(tmp_path, dict(SPARSE, ensemble_size=1))
    res = subprocess.run([sys.executable, "-m", "paraprod.cli", "sparse-certify", "--config", str(cfgp),
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout

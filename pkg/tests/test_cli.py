import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from quasidiag.cli import EXIT_CONFIG, EXIT_MONITOR, EXIT_OK, EXIT_REGIME, load_config, main
from quasidiag.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = 0.6180339887498949

BASE = {
    "potential": {"kind": "sawtooth-power", "alpha": 1},
    "frequency": {"omega": [GOLDEN], "rho": 2, "mu": 1},
    "eps": 1e-3, "delta": 0.5, "beta": 0.05, "M": 1e140,
    "s_max": 5, "ambient_radius": 20, "phases": 8,
}
SMALL_VERIFY = {"region_n_max": 20, "region_s_max": 4, "region_phase_grid": 4,
                "absorption_k_max": 10, "scheme_phases": 2, "branch_steps": 2,
                "branch_phases": 4, "label_trials": 6, "holder_grid": 200,
                "diophantine_N": 200}


def write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def run(tmp_path, command, cfg, out="out", *extra):
    target = tmp_path / out
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(target), *extra])
    return code, target


# configuration ---------------------------------------------------------------------

@pytest.mark.parametrize("field", ["eps", "beta", "M", "potential", "frequency", "delta"])
def test_missing_field_is_named(tmp_path, capsys, field):
    cfg = {k: v for k, v in BASE.items() if k != field}
    code = main(["diagonalize", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert f"'{field}'" in capsys.readouterr().err


def test_unknown_and_invalid_fields(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        load_config(write(tmp_path, BASE | {"epsilon": 1}))
    with pytest.raises(ConfigError, match="beta"):
        load_config(write(tmp_path, BASE | {"beta": 1.5}))
    with pytest.raises(ConfigError, match="ambient_radius"):
        load_config(write(tmp_path, BASE | {"ambient_radius": 10}))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, BASE | {"potential": {"kind": "table", "x": [0.0, 0.5],
                                                          "f": [0.6, 0.4]}}))


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = load_config(path)
        assert cfg.eps >= 0


def test_digest_ignores_output_and_workers(tmp_path):
    a = load_config(write(tmp_path, BASE | {"output": "a", "workers": 1}, "a.yaml"))
    b = load_config(write(tmp_path, BASE | {"output": "b", "workers": 3}, "b.yaml"))
    c = load_config(write(tmp_path, BASE | {"eps": 2e-3}, "c.yaml"))
    assert a.digest == b.digest != c.digest


def test_table_from_csv_file(tmp_path):
    (tmp_path / "f.csv").write_text("x,f\n0.0,0.4\n0.5,0.6\n")
    cfg = load_config(write(tmp_path, BASE | {"potential": {"kind": "table", "csv": "f.csv"}}))
    assert cfg.potential(0.7) == 0.6


# diagonalize --------------------------------------------------------------------------

def test_zero_hopping_eigenvalues_are_samples(tmp_path):
    code, out = run(tmp_path, "diagonalize", BASE | {"eps": 0.0})
    assert code == EXIT_OK
    table = rows(out / "eigenvalues.csv")
    assert table[0] == ["x", "E"]
    for x, E in table[1:]:
        assert float(E) == float(x)
    psi = rows(out / "psi" / "psi_0000.csv")
    assert psi[0] == ["n_1", "amplitude"]
    assert {r[0]: float(r[1]) for r in psi[1:]}["0"] == 1.0


def test_reference_diagonalize(tmp_path):
    code, out = run(tmp_path, "diagonalize", BASE)
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == code
    assert man["passed"] == (code == EXIT_OK)
    # the step-3 norm bound is the one known miss on this run
    failed = {k for k, ok in man["monitors"].items() if not ok}
    assert failed <= {"conv3"}
    assert code == (EXIT_MONITOR if failed else EXIT_OK)
    fam = rows(out / "family.csv")
    assert fam[0] == ["n_1", "E"] and len(fam) == 6
    for f in man["files"]:
        assert (out / f["path"]).exists() and len(f["sha256"]) == 64
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["family_gram_error"] <= 1e-10


def test_diagonalize_is_deterministic(tmp_path):
    cfg = BASE | {"phases": 4}
    _, a = run(tmp_path, "diagonalize", cfg, "a", "--workers", "1")
    _, b = run(tmp_path, "diagonalize", cfg, "b", "--workers", "1")
    _, c = run(tmp_path, "diagonalize", cfg, "c", "--workers", "2")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()
                   and p.name != "manifest.json")
    assert files
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes() == (c / rel).read_bytes()


def test_resonant_frequency_fails(tmp_path):
    cfg = yaml.safe_load((CONFIGS / "half_frequency.yaml").read_text())
    code, _ = run(tmp_path, "diagonalize", cfg | {"phases": 2})
    assert code != EXIT_OK
    code, out = run(tmp_path, "verify", cfg | {"verify": SMALL_VERIFY}, "v")
    assert code == EXIT_MONITOR
    assert not json.loads((out / "manifest.json").read_text())["monitors"]["diophantine"]


def test_large_beta_is_a_regime_failure(tmp_path, capsys):
    cfg = yaml.safe_load((CONFIGS / "large_beta.yaml").read_text())
    code, out = run(tmp_path, "verify", cfg | {"verify": SMALL_VERIFY})
    assert code == EXIT_REGIME
    assert "regime failure" in capsys.readouterr().err
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == EXIT_REGIME and not man["passed"]


def test_small_m_adds_note(tmp_path):
    code, out = run(tmp_path, "diagonalize", BASE | {"eps": 0.0, "M": 1e4, "phases": 2})
    man = json.loads((out / "manifest.json").read_text())
    assert man["notes"] and "M = 1e+04" in man["notes"][0]


# verify ------------------------------------------------------------------------------------

def test_small_verify(tmp_path):
    code, out = run(tmp_path, "verify", BASE | {"verify": SMALL_VERIFY})
    man = json.loads((out / "manifest.json").read_text())
    failed = {k for k, ok in man["monitors"].items() if not ok}
    assert failed <= {"conv3"}
    assert code == (EXIT_MONITOR if failed else EXIT_OK)
    rep = json.loads((out / "verify.json").read_text())
    assert rep["regime_failures"] == []
    assert rep["branch_labels"]["instances"] == 6


# spectrum ------------------------------------------------------------------------------------

def test_two_step_spectrum(tmp_path):
    cfg = yaml.safe_load((CONFIGS / "two_step.yaml").read_text())
    cfg |= {"box_sizes": [50, 100], "spectrum_phases": 16, "rank_one_box": 41, "t_count": 20,
            "ids_points": 11}
    code, out = run(tmp_path, "spectrum", cfg)
    gaps = json.loads((out / "gaps.json").read_text())
    assert [(g["left"], g["right"]) for g in gaps["gaps"]] == [(0.4, 0.6)]
    r1 = rows(out / "rank_one.csv")
    assert r1[0] == ["t", "E"] and len(r1) - 1 == 20 * 41
    spec = rows(out / "spectrum_100.csv")
    assert len(spec) - 1 == 100 * 16
    ids = rows(out / "ids.csv")
    assert ids[0] == ["E", "N_50", "N_100"] and len(ids) == 12
    # with no hopping the coupled eigenvalue is t, never strictly inside (0.4, 0.6)
    man = json.loads((out / "manifest.json").read_text())
    assert man["monitors"]["gaps_found"] and man["monitors"]["rank_one_monotone"]
    assert not man["monitors"]["rank_one_witness"]
    assert code == EXIT_MONITOR


def test_maryland_spectrum_skips_gaps(tmp_path):
    cfg = BASE | {"potential": {"kind": "maryland-tan", "alpha": 1}, "box_sizes": [20, 40],
                  "spectrum_phases": 8, "ids_points": 11}
    code, out = run(tmp_path, "spectrum", cfg)
    assert code == EXIT_OK
    assert json.loads((out / "gaps.json").read_text())["gaps"] == []
    assert not (out / "rank_one.csv").exists()


def test_formatting_round_trips(tmp_path):
    code, out = run(tmp_path, "diagonalize", BASE | {"phases": 2})
    for x, E in rows(out / "eigenvalues.csv")[1:]:
        assert repr(float(E)) == repr(float(np.float64(E)))
        assert math.isfinite(float(x))

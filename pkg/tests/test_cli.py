import json
import shutil
from pathlib import Path

import numpy as np
import pytest

import spillsc as sc
from spillsc.cli import main, validate_config
from spillsc.errors import ConfigError

DOCS = Path(__file__).resolve().parent.parent / "docs"


def _write_config(tmp_path, payload, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return p


def _sim_files(tmp_path, T0=10, n_post=3, J=6, seed=42, spill=0.25):
    cfg = _write_config(tmp_path, {
        "seed": seed,
        "output_dir": "data",
        "sim": {"T0": T0, "n_post": n_post, "J": J, "spill_fraction": spill},
    }, name="simulate.json")
    assert main(["simulate", str(cfg)]) == 0
    return tmp_path / "data"


def _fit_config(tmp_path, data_dir, **overrides):
    payload = {
        "seed": 11,
        "output_dir": "fit_out",
        "data": {
            "outcomes": str(data_dir / "outcomes.csv"),
            "covariates": str(data_dir / "covariates.csv"),
            "intervention_time": 10,
            "coordinate_columns": ["p1"],
        },
        "prior": {"family": "DS2", "kappa_d": 0.0, "exclusion_fraction": 0.25},
        "mcmc": {"n_chains": 1, "n_iterations": 400, "n_burnin": 200},
        "dump_draws": True,
    }
    payload.update(overrides)
    return _write_config(tmp_path, payload, name="fit.json")


# ---------------------------------------------------------------------------
# config validation

def test_minimal_fit_config_accepted(tmp_path):
    data = _sim_files(tmp_path)
    cfg = validate_config(_fit_config(tmp_path, data), "fit")
    assert cfg.prior.family == "DS2"
    assert cfg.mcmc.seed == 11
    assert cfg.output_dir == tmp_path / "fit_out"


def test_kappa_out_of_range_violation(tmp_path):
    data = _sim_files(tmp_path)
    path = _fit_config(tmp_path, data,
                       prior={"family": "DS2", "kappa_d": 1.5, "exclusion_fraction": 0.25})
    with pytest.raises(ConfigError) as exc:
        validate_config(path, "fit")
    assert any("kappa_d" in v and "must be in [0, 1]" in v for v in exc.value.violations)


def test_ds2_without_cutoff_names_both_options(tmp_path):
    data = _sim_files(tmp_path)
    path = _fit_config(tmp_path, data, prior={"family": "DS2", "kappa_d": 0.0})
    with pytest.raises(ConfigError) as exc:
        validate_config(path, "fit")
    joined = " ".join(exc.value.violations)
    assert "rho" in joined and "exclusion_fraction" in joined


def test_all_violations_reported(tmp_path):
    data = _sim_files(tmp_path)
    path = _fit_config(tmp_path, data,
                       prior={"family": "DS2", "kappa_d": 2.0},
                       alpha=3.0, bogus=True)
    with pytest.raises(ConfigError) as exc:
        validate_config(path, "fit")
    joined = "\n".join(exc.value.violations)
    assert "kappa_d" in joined
    assert "alpha" in joined
    assert "bogus" in joined and "unknown key" in joined
    assert len(exc.value.violations) >= 3


def test_unknown_nested_key_rejected(tmp_path):
    data = _sim_files(tmp_path)
    path = _fit_config(tmp_path, data,
                       mcmc={"n_iterations": 400, "n_burnin": 200, "warmup": 5})
    with pytest.raises(ConfigError, match="warmup"):
        validate_config(path, "fit")


def test_json_parse_error_reports_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"seed": 1,,}')
    with pytest.raises(ConfigError) as exc:
        validate_config(p, "fit")
    assert "line" in exc.value.violations[0]
    assert main(["fit", str(p)]) == 1


# ---------------------------------------------------------------------------
# fit

def test_fit_end_to_end(tmp_path, capsys):
    data = _sim_files(tmp_path, T0=10, n_post=3)
    assert main(["fit", str(_fit_config(tmp_path, data))]) == 0
    out = tmp_path / "fit_out"
    effects = (out / "effects.csv").read_text().strip().splitlines()
    assert effects[0] == "t,mean,sd,lower,upper,prob_negative"
    assert len(effects) == 1 + 3  # header + T - T0 rows
    diag = json.loads((out / "diagnostics.json").read_text())
    assert "split_rhat" in diag and "ess_bulk" in diag
    dump = (out / "draws.csv").read_text().splitlines()
    assert dump[0] == "chain,iteration,parameter,value"
    payload = json.loads((out / "effects.json").read_text())
    assert payload["provenance"]["seed"] == 11


def test_fit_rerun_byte_identical(tmp_path):
    data = _sim_files(tmp_path)
    cfg = _fit_config(tmp_path, data)
    assert main(["fit", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["fit", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("effects.csv", "draws.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for name in ("effects.json", "diagnostics.json"):
        ja = json.loads((tmp_path / "a" / name).read_text())
        jb = json.loads((tmp_path / "b" / name).read_text())
        ja["provenance"].pop("timestamp")
        jb["provenance"].pop("timestamp")
        assert ja == jb


def test_seed_override_changes_results(tmp_path):
    data = _sim_files(tmp_path)
    cfg = _fit_config(tmp_path, data)
    assert main(["fit", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["fit", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a" / "effects.csv").read_text() != (tmp_path / "b" / "effects.csv").read_text()


def test_numerical_failure_exits_2(tmp_path, capsys):
    data = _sim_files(tmp_path)
    cfg = _fit_config(tmp_path, data,
                      mcmc={"n_iterations": 100, "n_burnin": 0,
                            "slice_width": 1e-9, "max_slice_steps": 1})
    assert main(["fit", str(cfg)]) == 2
    assert "ERROR:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# simulate round trip

def test_simulate_output_reingests_exactly(tmp_path):
    data = _sim_files(tmp_path, T0=10, n_post=3, J=6, seed=42, spill=0.25)
    panel, _ = sc.generate(sc.SimConfig(T0=10, n_post=3, J=6, spill_fraction=0.25, seed=42))
    loaded = sc.load_panel(data / "outcomes.csv", data / "covariates.csv",
                           sc.IngestionSettings(10, ("p1",)))
    np.testing.assert_array_equal(loaded.treated_outcomes, panel.treated_outcomes)
    np.testing.assert_array_equal(loaded.donor_outcomes, panel.donor_outcomes)
    np.testing.assert_array_equal(loaded.covariates, panel.covariates)
    np.testing.assert_array_equal(loaded.coordinates, panel.coordinates)
    assert loaded.unit_labels == panel.unit_labels
    truth = json.loads((data / "truth.json").read_text())
    assert truth["tau_true"] == 7.0


# ---------------------------------------------------------------------------
# replicate

def test_replicate_cli_grid(tmp_path):
    cfg = _write_config(tmp_path, {
        "seed": 3,
        "output_dir": "rep",
        "plan": {
            "n_replicates": 2,
            "sim": {"T0": 10, "n_post": 1, "J": 5},
            "prior": {"family": "DHS", "kappa_d": 0.0},
            "mcmc": {"n_iterations": 300, "n_burnin": 150},
            "kappa_grid": [0.0, 1.0],
            "spill_grid": [0.0, 0.5],
        },
    }, name="replicate.json")
    assert main(["replicate", str(cfg)]) == 0
    lines = (tmp_path / "rep" / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "kappa_d,spill_fraction,metric,value,n_replicates"
    assert len(lines) == 1 + 2 * 2 * 4  # cells x 4 metrics
    payload = json.loads((tmp_path / "rep" / "metrics.json").read_text())
    assert len(payload["cells"]) == 4
    # determinism
    assert main(["replicate", str(cfg), "--out", str(tmp_path / "rep2")]) == 0
    assert (tmp_path / "rep" / "metrics.csv").read_bytes() == (tmp_path / "rep2" / "metrics.csv").read_bytes()


# ---------------------------------------------------------------------------
# distance audit

def test_distance_audit_csv(tmp_path):
    data = _sim_files(tmp_path, J=8)
    cfg = _write_config(tmp_path, {
        "seed": 1,
        "output_dir": "dist",
        "data": {
            "outcomes": str(data / "outcomes.csv"),
            "covariates": str(data / "covariates.csv"),
            "intervention_time": 10,
            "coordinate_columns": ["p1"],
        },
        "kappa_d": 0.5,
        "exclusion_fraction": 0.25,
    }, name="distance.json")
    assert main(["distance", str(cfg)]) == 0
    lines = (tmp_path / "dist" / "distances.csv").read_text().strip().splitlines()
    assert lines[0] == "unit_id,d_x,d_p,d_c,excluded"
    assert len(lines) == 1 + 8
    excluded = sum(int(l.split(",")[-1]) for l in lines[1:])
    assert excluded == int(np.ceil(0.25 * 8))


# ---------------------------------------------------------------------------
# summarize

def test_summarize_recovers_fit_effects(tmp_path):
    data = _sim_files(tmp_path, n_post=3)
    assert main(["fit", str(_fit_config(tmp_path, data))]) == 0
    fit_out = tmp_path / "fit_out"
    cfg = _write_config(tmp_path, {
        "seed": 0,
        "output_dir": "sum",
        "draws": str(fit_out / "draws.csv"),
        "alpha": 0.05,
    }, name="summarize.json")
    assert main(["summarize", str(cfg)]) == 0
    assert (tmp_path / "sum" / "effects.csv").read_bytes() == (fit_out / "effects.csv").read_bytes()


def test_summarize_different_alpha_widens(tmp_path):
    data = _sim_files(tmp_path, n_post=1)
    assert main(["fit", str(_fit_config(tmp_path, data))]) == 0
    fit_out = tmp_path / "fit_out"
    rows = {}
    for alpha in (0.05, 0.5):
        cfg = _write_config(tmp_path, {
            "seed": 0, "output_dir": f"sum{alpha}",
            "draws": str(fit_out / "draws.csv"), "alpha": alpha,
        }, name=f"summarize{alpha}.json")
        assert main(["summarize", str(cfg)]) == 0
        line = (tmp_path / f"sum{alpha}" / "effects.csv").read_text().strip().splitlines()[1]
        _, _, _, lo, hi, _ = line.split(",")
        rows[alpha] = float(hi) - float(lo)
    assert rows[0.5] < rows[0.05]


# ---------------------------------------------------------------------------
# docs examples and version

def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "spillsc" in out and sc.__version__ in out


@pytest.mark.parametrize("name", ["simulate", "fit", "distance", "replicate", "summarize"])
def test_docs_configs_validate_and_run(tmp_path, name):
    src = DOCS / "configs" / f"{name}.json"
    assert src.exists()
    validate_config(src, name)
    # run against a scratch copy of docs so nothing in the repo is touched
    work = tmp_path / "docs"
    shutil.copytree(DOCS, work)
    assert main([name, str(work / "configs" / f"{name}.json"), "--out", str(tmp_path / "out")]) == 0

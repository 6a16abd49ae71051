import csv
import hashlib
import json

import pytest

from twin_metrology.cli import ConfigError, execute, main, parse_config


MINIMAL_QFI = {
    "schema": 1,
    "command": "qfi",
    "physics": {"n_bar": 60, "sigma": 6, "epsilon": 0, "envelope": "gaussian",
                "generator": "jx"},
}

SMALL_SWEEP = {
    "schema": 1,
    "command": "sweep",
    "physics": {"n_bar": 40, "sigma": [3, 5], "epsilon": [0, 1]},
    "disorder": {"seed": 11},
    "ensemble": {"realizations": 3},
    "theta": {"grid_points": 8, "refine_tol": 0.05},
}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def manifest_of(outdir):
    return json.loads((outdir / "run_manifest.json").read_text())


def strip_duration(manifest):
    m = dict(manifest)
    m.pop("duration_s")
    return m


def test_parse_minimal_config_applies_defaults():
    cfg = parse_config(json.dumps(MINIMAL_QFI))
    assert cfg["ensemble"]["realizations"] == 100
    assert cfg["theta"]["grid_points"] == 32
    assert cfg["disorder"] == {"kind": "iid-uniform", "shared": True, "seed": 0}
    assert cfg["output"]["directory"] == "out"


def test_parse_rejects_bad_sigma():
    bad = json.loads(json.dumps(MINIMAL_QFI))
    bad["physics"]["sigma"] = -1
    with pytest.raises(ConfigError, match=r"invalid value at physics\.sigma"):
        parse_config(json.dumps(bad))


def test_parse_rejects_unknown_keys():
    bad = json.loads(json.dumps(MINIMAL_QFI))
    bad["physics"]["sigmaa"] = 4
    with pytest.raises(ConfigError, match=r"unrecognized field physics\.sigmaa"):
        parse_config(json.dumps(bad))
    with pytest.raises(ConfigError, match="unrecognized field extra"):
        parse_config(json.dumps({"schema": 1, "extra": 2}))


def test_parse_rejects_bad_epsilon_and_seed():
    bad = json.loads(json.dumps(MINIMAL_QFI))
    bad["physics"]["epsilon"] = 1.5
    with pytest.raises(ConfigError, match=r"invalid value at physics\.epsilon"):
        parse_config(json.dumps(bad))
    bad = json.loads(json.dumps(MINIMAL_QFI))
    bad["disorder"] = {"seed": -1}
    with pytest.raises(ConfigError, match=r"invalid value at disorder\.seed"):
        parse_config(json.dumps(bad))


def test_qfi_command_outputs(tmp_path):
    cfg = parse_config(json.dumps(MINIMAL_QFI))
    manifest, code = execute(cfg, out_dir=tmp_path / "run")
    assert code == 0
    assert manifest["status"] == "ok"
    rows = read_csv(tmp_path / "run" / "qfi.csv")
    assert rows[0] == ["method", "n_bar", "sigma", "epsilon", "value", "over_snl"]
    methods = [r[0] for r in rows[1:]]
    assert methods[0] == "exact"
    assert "continuum" in methods
    # digests in the manifest match the files on disk
    for entry in manifest["outputs"]:
        digest = hashlib.sha256((tmp_path / "run" / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]


def test_sweep_schema_and_determinism(tmp_path):
    cfg = parse_config(json.dumps(SMALL_SWEEP))
    outdir = tmp_path / "a"
    execute(cfg, out_dir=outdir)
    first_csv = (outdir / "sweep.csv").read_bytes()
    first_manifest = manifest_of(outdir)
    execute(cfg, out_dir=outdir)
    rows = read_csv(outdir / "sweep.csv")
    assert rows[0] == ["sigma", "epsilon", "qfi_mean", "qfi_std", "cfi_mean",
                       "cfi_std", "qfi_over_snl", "cfi_over_snl", "plateau_prediction"]
    assert len(rows) == 5
    assert (outdir / "sweep.csv").read_bytes() == first_csv
    assert strip_duration(manifest_of(outdir)) == strip_duration(first_manifest)


def test_thread_count_does_not_change_bytes(tmp_path):
    cfg = parse_config(json.dumps(SMALL_SWEEP))
    execute(cfg, out_dir=tmp_path / "t1", threads=1)
    execute(cfg, out_dir=tmp_path / "t2", threads=2)
    assert (tmp_path / "t1" / "sweep.csv").read_bytes() == (tmp_path / "t2" / "sweep.csv").read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = parse_config(json.dumps(SMALL_SWEEP))
    execute(cfg, out_dir=tmp_path / "s11")
    execute(cfg, out_dir=tmp_path / "s12", seed=12)
    assert manifest_of(tmp_path / "s12")["seed"] == 12
    assert (tmp_path / "s11" / "sweep.csv").read_bytes() != (tmp_path / "s12" / "sweep.csv").read_bytes()


def test_prob_map_schema(tmp_path):
    cfg = parse_config(json.dumps({
        "schema": 1,
        "command": "prob-map",
        "physics": {"n_bar": 40, "sigma": 8, "epsilon": 1},
        "prob_map": {"theta_points": 8},
    }))
    manifest, code = execute(cfg, out_dir=tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "probmap.csv")
    assert rows[0] == ["theta", "n", "probability"]
    assert len(rows) == 1 + 8 * 41


def test_fisher_and_hellinger_commands(tmp_path):
    base = {
        "schema": 1,
        "physics": {"n_bar": 40, "sigma": 4},
        "theta": {"grid_points": 8, "refine_tol": 0.01, "theta": 0.6, "delta_theta": 0.01},
    }
    manifest, code = execute(parse_config(json.dumps(base)), command="fisher", out_dir=tmp_path / "f")
    assert code == 0
    rows = read_csv(tmp_path / "f" / "fisher.csv")
    assert rows[0] == ["theta", "cfi", "cfi_over_snl", "qfi", "cfi_over_qfi"]
    assert float(rows[1][1]) <= float(rows[1][3]) * (1 + 1e-6)

    manifest, code = execute(parse_config(json.dumps(base)), command="hellinger", out_dir=tmp_path / "h")
    assert code == 0
    rows = read_csv(tmp_path / "h" / "hellinger.csv")
    assert rows[0] == ["theta", "delta_theta", "estimate", "fisher"]
    est, ref = float(rows[1][2]), float(rows[1][3])
    assert est == pytest.approx(ref, rel=0.05)


def test_validate_command(tmp_path):
    cfg = parse_config(json.dumps({"schema": 1, "physics": {"n_bar": 40, "sigma": 4}}))
    manifest, code = execute(cfg, command="validate", out_dir=tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "validate.csv")
    assert rows[0] == ["check", "passed", "detail"]
    assert len(rows) > 4
    assert all(r[1] == "True" for r in rows[1:])


def test_failure_leaves_manifest_only(tmp_path):
    cfg = parse_config(json.dumps({
        "schema": 1,
        "command": "prob-map",
        "physics": {"n_bar": 40, "sigma": 0.5},
        "prob_map": {"block": 200},
    }))
    manifest, code = execute(cfg, out_dir=tmp_path)
    assert code == 1
    assert manifest["status"] == "error"
    assert "empty block" in manifest["error"]
    assert manifest["outputs"] == []
    assert not (tmp_path / "probmap.csv").exists()
    assert (tmp_path / "run_manifest.json").exists()


def test_command_mismatch_rejected(tmp_path):
    cfg = parse_config(json.dumps(MINIMAL_QFI))
    with pytest.raises(ConfigError, match="invalid value at command"):
        execute(cfg, command="sweep", out_dir=tmp_path)


def test_main_entry_point(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(MINIMAL_QFI))
    assert main(["qfi", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "qfi.csv").exists()
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "x")]) == 2


def test_main_bad_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["qfi", "--config", str(path)]) == 2

"""Command-line front end: JSON config in, CSV datasets plus a manifest out.

Commands: qfi, fisher, sweep, prob-map, hellinger, validate. The config is
a single JSON document with a top-level "schema": 1; unknown keys are
rejected and every numeric field is validated before any computation
starts. Outputs are CSV files with fixed column schemas (floats in
shortest round-trip form) and a run_manifest.json recording the resolved
config, seed, wall-clock duration, warnings, and SHA-256 digests of every
file written. The manifest is written last; on failure partial outputs
are removed and the manifest carries the error record instead.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import SweepConfig, probability_map, sweep_sigma
from .estimation import fisher_information, hellinger_fisher, optimize_fisher
from .metrology import (
    crlb_bound,
    plateau_prediction,
    qfi_continuum,
    qfi_exact,
    qfi_oracle_general,
)
from .spin_algebra import rotation_kernel
from .state_model import apply_disorder, block_spectra, build_distribution, disorder_pair

__all__ = ["ConfigError", "parse_config", "execute", "main"]

COMMANDS = ("qfi", "fisher", "sweep", "prob-map", "hellinger", "validate")

MANIFEST_NAME = "run_manifest.json"

SWEEP_COLUMNS = [
    "sigma", "epsilon", "qfi_mean", "qfi_std", "cfi_mean", "cfi_std",
    "qfi_over_snl", "cfi_over_snl", "plateau_prediction",
]
PROBMAP_COLUMNS = ["theta", "n", "probability"]
QFI_COLUMNS = ["method", "n_bar", "sigma", "epsilon", "value", "over_snl"]
FISHER_COLUMNS = ["theta", "cfi", "cfi_over_snl", "qfi", "cfi_over_qfi"]
HELLINGER_COLUMNS = ["theta", "delta_theta", "estimate", "fisher"]
VALIDATE_COLUMNS = ["check", "passed", "detail"]


class ConfigError(ValueError):
    pass


def _bad(path):
    raise ConfigError(f"invalid value at {path}")


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _as_list(x):
    return list(x) if isinstance(x, list) else [x]


_DEFAULTS = {
    "schema": 1,
    "command": None,
    "physics": {
        "n_bar": None,
        "sigma": 50.0,
        "epsilon": 0.0,
        "envelope": "gaussian",
        "generator": "jx",
        "table": None,
    },
    "disorder": {"kind": "iid-uniform", "shared": True, "seed": 0},
    "ensemble": {"realizations": 100, "compute_cfi": True},
    "theta": {"grid_points": 32, "refine_tol": 1e-4, "theta": None, "delta_theta": 0.01},
    "truncation": {"mass_tol": 1e-13},
    "prob_map": {"block": None, "theta_points": 64},
    "output": {"directory": "out", "format": "csv"},
}


def _merge(defaults, given, path=""):
    if not isinstance(given, dict):
        _bad(path or "<root>")
    merged = {}
    for key, value in given.items():
        if key not in defaults:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unrecognized field {where}")
    for key, default in defaults.items():
        here = f"{path}.{key}" if path else key
        if key in given and isinstance(default, dict):
            merged[key] = _merge(default, given[key], here)
        elif key in given:
            merged[key] = given[key]
        elif isinstance(default, dict):
            merged[key] = _merge(default, {}, here)
        else:
            merged[key] = default
    return merged


def _validate(cfg):
    if cfg["schema"] != 1:
        _bad("schema")
    if cfg["command"] is not None and cfg["command"] not in COMMANDS:
        _bad("command")

    phys = cfg["physics"]
    if phys["envelope"] not in ("gaussian", "table"):
        _bad("physics.envelope")
    if phys["generator"] not in ("jx", "jy"):
        _bad("physics.generator")
    if phys["envelope"] == "gaussian":
        if not _is_num(phys["n_bar"]) or phys["n_bar"] <= 0:
            _bad("physics.n_bar")
        for i, s in enumerate(_as_list(phys["sigma"])):
            if not _is_num(s) or s <= 0:
                _bad("physics.sigma")
    else:
        table = phys["table"]
        if not isinstance(table, dict):
            _bad("physics.table")
        extra = set(table) - {"start", "values"}
        if extra:
            raise ConfigError(f"unrecognized field physics.table.{sorted(extra)[0]}")
        if not isinstance(table.get("start", 0), int) or table.get("start", 0) < 0:
            _bad("physics.table.start")
        values = table.get("values")
        if not isinstance(values, list) or not values:
            _bad("physics.table.values")
        if any(not _is_num(v) or v < 0 for v in values):
            _bad("physics.table.values")
    for e in _as_list(phys["epsilon"]):
        if not _is_num(e) or not 0.0 <= e <= 1.0:
            _bad("physics.epsilon")

    dis = cfg["disorder"]
    if dis["kind"] != "iid-uniform":
        _bad("disorder.kind")
    if not isinstance(dis["shared"], bool):
        _bad("disorder.shared")
    if not isinstance(dis["seed"], int) or not 0 <= dis["seed"] < 2**64:
        _bad("disorder.seed")

    ens = cfg["ensemble"]
    if not isinstance(ens["realizations"], int) or ens["realizations"] < 1:
        _bad("ensemble.realizations")
    if not isinstance(ens["compute_cfi"], bool):
        _bad("ensemble.compute_cfi")

    th = cfg["theta"]
    if not isinstance(th["grid_points"], int) or th["grid_points"] < 8:
        _bad("theta.grid_points")
    if not _is_num(th["refine_tol"]) or th["refine_tol"] <= 0:
        _bad("theta.refine_tol")
    if th["theta"] is not None and (not _is_num(th["theta"]) or not np.isfinite(th["theta"])):
        _bad("theta.theta")
    if not _is_num(th["delta_theta"]) or not 0 < th["delta_theta"] <= 0.1:
        _bad("theta.delta_theta")

    if not _is_num(cfg["truncation"]["mass_tol"]) or not 0 < cfg["truncation"]["mass_tol"] <= 1e-6:
        _bad("truncation.mass_tol")

    pm = cfg["prob_map"]
    if pm["block"] is not None and (not isinstance(pm["block"], int) or pm["block"] < 0):
        _bad("prob_map.block")
    if not isinstance(pm["theta_points"], int) or pm["theta_points"] < 2:
        _bad("prob_map.theta_points")

    out = cfg["output"]
    if not isinstance(out["directory"], str) or not out["directory"]:
        _bad("output.directory")
    if out["format"] != "csv":
        _bad("output.format")
    return cfg


def parse_config(text):
    """Parse and validate a JSON config document; defaults are filled in."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return _validate(_merge(_DEFAULTS, raw))


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _sha256(path):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _generator_tag(cfg):
    return "x" if cfg["physics"]["generator"] == "jx" else "y"


def _source_distribution(cfg, sigma=None):
    phys = cfg["physics"]
    if phys["envelope"] == "gaussian":
        return build_distribution(
            "gaussian", mu=phys["n_bar"] / 2.0, sigma=sigma if sigma is not None else _scalar(phys["sigma"], "physics.sigma"),
        )
    table = phys["table"]
    return build_distribution("table", values=table["values"], start=table.get("start", 0))


def _scalar(value, path):
    if isinstance(value, list):
        if len(value) != 1:
            raise ConfigError(f"invalid value at {path} (expected a single number)")
        return value[0]
    return value


def _single_spectrum(cfg):
    """Clean or single-realization disordered spectrum for one-shot commands."""
    eps = _scalar(cfg["physics"]["epsilon"], "physics.epsilon")
    dist = _source_distribution(cfg)
    warnings = []
    if eps == 0.0:
        return block_spectra(dist, dist), eps, warnings
    real_a, real_b = disorder_pair(
        dist.window, eps, cfg["disorder"]["seed"], realization=0,
        shared=cfg["disorder"]["shared"],
    )
    da, db = apply_disorder(dist, real_a), apply_disorder(dist, real_b)
    clamped = da.clamped + db.clamped
    if clamped:
        warnings.append(f"clamped {clamped} negative probabilities to zero")
    return block_spectra(da, db), eps, warnings


def _sweep_config(cfg, threads):
    return SweepConfig(
        n_bar=cfg["physics"]["n_bar"],
        sigmas=tuple(_as_list(cfg["physics"]["sigma"])),
        epsilons=tuple(_as_list(cfg["physics"]["epsilon"])),
        realizations=cfg["ensemble"]["realizations"],
        base_seed=cfg["disorder"]["seed"],
        generator=_generator_tag(cfg),
        grid_points=cfg["theta"]["grid_points"],
        refine_tol=cfg["theta"]["refine_tol"],
        shared_disorder=cfg["disorder"]["shared"],
        compute_cfi=cfg["ensemble"]["compute_cfi"],
        threads=threads,
        mass_tol=cfg["truncation"]["mass_tol"],
    )


def _run_qfi(cfg, threads):
    spec, eps, warnings = _single_spectrum(cfg)
    gen = _generator_tag(cfg)
    phys = cfg["physics"]
    sigma = _scalar(phys["sigma"], "physics.sigma") if phys["envelope"] == "gaussian" else float("nan")
    n_bar = spec.n_bar
    rows = []
    exact = qfi_exact(spec, gen)
    rows.append(["exact", n_bar, sigma, eps, exact.value, exact.over_snl])
    if phys["envelope"] == "gaussian":
        dist = _source_distribution(cfg)
        cont = qfi_continuum(dist, dist)
        rows.append(["continuum", n_bar, sigma, eps, cont.value, cont.over_snl])
        rows.append(["gaussian-closed-form", n_bar, sigma, eps, cont.closed_form,
                     cont.closed_form / n_bar])
        if eps > 0:
            plat = plateau_prediction(n_bar, sigma, eps)
            rows.append(["plateau", n_bar, sigma, eps, plat.value, plat.over_snl])
    return [("qfi.csv", QFI_COLUMNS, rows)], warnings, True


def _run_fisher(cfg, threads):
    spec, _, warnings = _single_spectrum(cfg)
    gen = _generator_tag(cfg)
    theta = cfg["theta"]["theta"]
    if theta is None:
        rep = optimize_fisher(
            spec, gen, grid_points=cfg["theta"]["grid_points"],
            refine_tol=cfg["theta"]["refine_tol"],
            min_block_mass=cfg["truncation"]["mass_tol"],
        )
    else:
        rep = fisher_information(spec, float(theta), gen,
                                 min_block_mass=cfg["truncation"]["mass_tol"])
    rows = [[rep.theta, rep.value, rep.over_snl, rep.qfi, rep.vs_qfi]]
    return [("fisher.csv", FISHER_COLUMNS, rows)], warnings, True


def _run_sweep(cfg, threads):
    if cfg["physics"]["envelope"] != "gaussian":
        raise ConfigError("invalid value at physics.envelope (sweep needs gaussian)")
    result = sweep_sigma(_sweep_config(cfg, threads))
    rows = []
    for cell in result.cells:
        rows.append([
            cell.sigma, cell.epsilon, cell.qfi_mean, cell.qfi_std,
            cell.cfi_mean, cell.cfi_std,
            cell.qfi_mean / cell.n_bar, cell.cfi_mean / cell.n_bar,
            cell.plateau,
        ])
    return [("sweep.csv", SWEEP_COLUMNS, rows)], [], True


def _run_prob_map(cfg, threads):
    if cfg["physics"]["envelope"] != "gaussian":
        raise ConfigError("invalid value at physics.envelope (prob-map needs gaussian)")
    sweep = _sweep_config(cfg, threads)
    block = cfg["prob_map"]["block"]
    if block is None:
        block = int(round(cfg["physics"]["n_bar"]))
    thetas = np.linspace(0.0, 2.0 * np.pi, cfg["prob_map"]["theta_points"], endpoint=False)
    pmap = probability_map(sweep, block, thetas)
    rows = []
    for i, theta in enumerate(pmap.thetas):
        for j, n in enumerate(pmap.imbalances):
            rows.append([float(theta), float(n), float(pmap.values[i, j])])
    return [("probmap.csv", PROBMAP_COLUMNS, rows)], [], True


def _run_hellinger(cfg, threads):
    spec, _, warnings = _single_spectrum(cfg)
    gen = _generator_tag(cfg)
    theta = cfg["theta"]["theta"]
    if theta is None:
        theta = optimize_fisher(
            spec, gen, grid_points=cfg["theta"]["grid_points"],
            refine_tol=cfg["theta"]["refine_tol"],
            min_block_mass=cfg["truncation"]["mass_tol"],
        ).theta
    delta = cfg["theta"]["delta_theta"]
    est = hellinger_fisher(spec, float(theta), float(delta), gen)
    ref = fisher_information(spec, float(theta), gen,
                             min_block_mass=cfg["truncation"]["mass_tol"]).value
    rows = [[float(theta), float(delta), est, ref]]
    return [("hellinger.csv", HELLINGER_COLUMNS, rows)], warnings, True


def _run_validate(cfg, threads):
    checks = []

    def record(name, passed, detail):
        checks.append([name, bool(passed), detail])

    phys = cfg["physics"]
    n_bar = phys["n_bar"] if phys["envelope"] == "gaussian" else 40.0
    sigma = _scalar(phys["sigma"], "physics.sigma") if phys["envelope"] == "gaussian" else 3.0
    dist = build_distribution("gaussian", mu=n_bar / 2.0, sigma=sigma)
    err = abs(dist.total() - 1.0)
    record("distribution-normalization", err < 1e-12, f"|sum-1|={err:.3e}")

    spec = block_spectra(dist, dist)
    err = abs(spec.block_masses().sum() - 1.0)
    record("spectrum-trace", err < 1e-12, f"|trace-1|={err:.3e}")

    worst = 0.0
    for n in (4, 21, 60):
        for theta in np.linspace(0.0, 2 * np.pi, 5, endpoint=False):
            kern = rotation_kernel(n, float(theta))
            worst = max(
                worst,
                np.abs(kern.matrix.sum(axis=0) - 1).max(),
                np.abs(kern.matrix.sum(axis=1) - 1).max(),
            )
    record("kernel-unitarity", worst < 1e-10, f"max |rowsum-1|={worst:.3e}")

    h = 1e-5
    kern = rotation_kernel(20, 0.3)
    fd = (rotation_kernel(20, 0.3 + h).matrix - rotation_kernel(20, 0.3 - h).matrix) / (2 * h)
    err = np.abs(kern.derivative - fd).max()
    record("kernel-derivative", err < 1e-6, f"max |K'-fd|={err:.3e}")

    rng = np.random.default_rng(20240401)
    worst = 0.0
    for _ in range(10):
        na, nb = rng.integers(2, 9, size=2)
        pa = rng.uniform(0.0, 1.0, na)
        pb = rng.uniform(0.0, 1.0, nb)
        da = build_distribution("table", values=pa, start=int(rng.integers(0, 5)))
        db = build_distribution("table", values=pb, start=int(rng.integers(0, 5)))
        small = block_spectra(da, db)
        fe = qfi_exact(small).value
        fo = qfi_oracle_general(small).value
        worst = max(worst, abs(fe - fo) / max(fo, 1e-30))
    record("oracle-equivalence", worst < 1e-10, f"max rel dev={worst:.3e}")

    tiny = block_spectra(
        build_distribution("gaussian", mu=20, sigma=3),
        build_distribution("gaussian", mu=20, sigma=3),
    )
    fq = qfi_exact(tiny).value
    cf = optimize_fisher(tiny, grid_points=16, refine_tol=1e-3).value
    record("information-hierarchy", cf <= fq * (1 + 1e-6), f"cfi/qfi={cf / fq:.6f}")
    record("crlb", abs(crlb_bound(fq, 4) - 0.5 / np.sqrt(fq)) < 1e-15,
           f"dtheta={crlb_bound(fq, 4):.3e}")

    rows = [[name, passed, detail] for name, passed, detail in checks]
    ok = all(c[1] for c in checks)
    return [("validate.csv", VALIDATE_COLUMNS, rows)], [], ok


_RUNNERS = {
    "qfi": _run_qfi,
    "fisher": _run_fisher,
    "sweep": _run_sweep,
    "prob-map": _run_prob_map,
    "hellinger": _run_hellinger,
    "validate": _run_validate,
}


def execute(cfg, command=None, out_dir=None, seed=None, threads=None):
    """Dispatch a validated config and write outputs plus the manifest.

    Returns (manifest, exit_code). CSV files are written first, the
    manifest last; on failure partial outputs are removed and the manifest
    records the error.
    """
    cfg = json.loads(json.dumps(cfg))  # private copy
    if command is None:
        command = cfg.get("command")
    if command not in COMMANDS:
        raise ConfigError("invalid value at command")
    if cfg.get("command") is not None and cfg["command"] != command:
        raise ConfigError("invalid value at command")
    cfg["command"] = command
    if seed is not None:
        cfg["disorder"]["seed"] = int(seed)
    if out_dir is not None:
        cfg["output"]["directory"] = str(out_dir)
    if threads is None:
        threads = int(os.environ.get("TWIN_METROLOGY_THREADS", "1"))
    _validate(cfg)

    directory = Path(cfg["output"]["directory"])
    directory.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    outputs, warnings, error = [], [], None
    ok = True
    written = []
    try:
        files, warnings, ok = _RUNNERS[command](cfg, max(1, int(threads)))
        for name, columns, rows in files:
            path = directory / name
            _write_csv(path, columns, rows)
            written.append(path)
        for path in written:
            outputs.append(
                {"path": path.name, "sha256": _sha256(path), "bytes": path.stat().st_size}
            )
    except Exception as exc:  # noqa: BLE001 - reported in the manifest
        for path in written:
            path.unlink(missing_ok=True)
        outputs = []
        error = f"{type(exc).__name__}: {exc}"

    manifest = {
        "schema": 1,
        "tool": {"name": "twin-metrology", "version": __version__},
        "command": command,
        "config": cfg,
        "seed": cfg["disorder"]["seed"],
        "duration_s": round(time.perf_counter() - started, 6),
        "warnings": warnings,
        "outputs": outputs,
        "status": "error" if error else "ok",
        "error": error,
    }
    with open(directory / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    exit_code = 0 if error is None and ok else 1
    return manifest, exit_code


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="twin-metrology",
        description="Interferometer sensitivity of two independent bosonic sources",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="disorder seed override")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (falls back to TWIN_METROLOGY_THREADS)")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(Path(args.config).read_text())
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest, code = execute(
            cfg, command=args.command, out_dir=args.out, seed=args.seed, threads=args.threads
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if manifest["status"] == "error":
        print(f"error: {manifest['error']}", file=sys.stderr)
    else:
        for entry in manifest["outputs"]:
            print(f"wrote {Path(cfg['output']['directory']) / entry['path']}")
        if manifest["command"] == "validate":
            print("validation:", "ok" if code == 0 else "FAILED")
    return code


if __name__ == "__main__":
    raise SystemExit(main())

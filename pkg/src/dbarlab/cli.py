"""Command line front end.

Usage::

    dbarlab COMMAND [CONFIG.toml] [--strict] [--no-cache] [--workers N]
                    [--section.key=value ...]

Commands: ``weights-check``, ``eigs``, ``solve``, ``diagnose``, ``scan-mu``
and ``report``.  Exit status is 0 on success, 1 for configuration errors,
2 for numerical failures and 3 for an inconclusive diagnosis under
``--strict``.  Errors are also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import weights as wt
from .compactness import DiagnoseParams, Verdict, classify, mu_profile
from .config import RunConfig, load_config
from .dbar_solver import builtin_rhs, canonical_solve, minimality_probe
from .errors import ConfigError, DbarlabError
from .grid import build_grid, read_field_csv, write_field_csv
from .operators import assemble_H
from .spectra import read_eigen_csv, smallest_eigs, write_eigen_csv

log = logging.getLogger("dbarlab")

COMMANDS = ("weights-check", "eigs", "solve", "diagnose", "scan-mu", "report")
ARTIFACTS = {
    "weights-check": "weights-check.json",
    "eigs": "eigs.json",
    "solve": "solve.json",
    "diagnose": "diagnose.json",
    "scan-mu": "scan-mu.json",
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 1, 2, 3


# helpers ----------------------------------------------------------------------


def save_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_dat(path: Path, columns, header: str) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, header=header, fmt="%.17g")


def make_weight(cfg: RunConfig) -> wt.WeightModel:
    if cfg.weight.kind == "monomial":
        return wt.WeightModel.monomial(cfg.weight.m)
    return wt.WeightModel.from_csv(cfg.weight.table_path)


def make_grid(cfg: RunConfig):
    return build_grid(cfg.grid.R, cfg.grid.h, cfg.grid.shape)


def cache_dir() -> Path:
    env = os.environ.get("DBARLAB_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "dbarlab"


def eigs_cache_key(cfg: RunConfig, weight: wt.WeightModel) -> str:
    payload = {
        "weight": weight.describe(),
        "grid": [cfg.grid.R, cfg.grid.h, cfg.grid.shape],
        "penalty": cfg.operator.penalty,
        "k": cfg.eigs.k,
        "tol": cfg.eigs.tol,
        "max_restarts": cfg.eigs.max_restarts,
        "seed": cfg.seed,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _base(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "config_hash": cfg.hash(), "tool_version": __version__}


# commands -----------------------------------------------------------------------


def cmd_weights_check(cfg: RunConfig, out: Path, args) -> tuple[dict, str]:
    weight = make_weight(cfg)
    grid = make_grid(cfg)
    wc = cfg.weights_check
    centers = [complex(a, b) for a, b in wc.centers]
    rep = wt.doubling_report(weight, centers, wc.radii, wc.resolution)
    lap = wt.laplacian(weight, grid.z)
    r = np.linspace(0.0, grid.R, 61)
    result = _base(cfg, "weights-check")
    result.update({
        "doubling": rep.to_dict(),
        "laplacian_min": float(lap.min()),
        "laplacian_max": float(lap.max()),
        "phi_max": float(wt.evaluate(weight, grid.z).max()),
        "subharmonic": bool(lap.min() >= 0),
    })
    if "dat" in cfg.output.formats:
        save_dat(out / "laplacian.dat", [r, wt.laplacian(weight, r + 0j)], "r laplacian")
    return result, f"C_hat={rep.C_hat:.4g} delta_hat={rep.delta_hat:.4g} min Delta phi={lap.min():.4g}"


def cmd_eigs(cfg: RunConfig, out: Path, args) -> tuple[dict, str]:
    weight = make_weight(cfg)
    key = eigs_cache_key(cfg, weight)
    entry = cache_dir() / key
    hit = False
    if not args.no_cache and (entry / "eigs.csv").exists():
        payload = (entry / "eigs.csv").read_bytes()
        hit = True
        meta = json.loads((entry / "meta.json").read_text())
        iterations = meta["iterations"]
    else:
        grid = make_grid(cfg)
        H = assemble_H(grid, weight, cfg.operator.penalty)
        e = smallest_eigs(H, cfg.eigs.k, cfg.eigs.tol,
                          max_restarts=cfg.eigs.max_restarts, seed=cfg.seed)
        tmp = out / ".eigs.csv.tmp"
        write_eigen_csv(tmp, e)
        payload = tmp.read_bytes()
        tmp.unlink()
        iterations = e.iterations
        if not args.no_cache:
            entry.mkdir(parents=True, exist_ok=True)
            (entry / "eigs.csv").write_bytes(payload)
            save_json(entry / "meta.json", {
                "tool_version": __version__,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "iterations": iterations,
                "key": key,
            })
    (out / "eigs.csv").write_bytes(payload)
    lam, res, conv = read_eigen_csv(out / "eigs.csv")
    sigma = 1.0 / np.sqrt(lam)
    result = _base(cfg, "eigs")
    result.update({
        "cache_key": key,
        "k": int(lam.size),
        "lambda_1": float(lam[0]),
        "C_h": float(1.0 / lam[0]),
        "lambdas": lam.tolist(),
        "residuals": res.tolist(),
        "converged": int(conv.sum()),
        "iterations": iterations,
        "sigma": sigma.tolist(),
        "partial_trace": np.cumsum(sigma**2).tolist(),
    })
    if "dat" in cfg.output.formats:
        save_dat(out / "eigs.dat", [np.arange(1, lam.size + 1), lam], "index lambda")
    if "csv" not in cfg.output.formats:
        (out / "eigs.csv").unlink()
    src = "cache" if hit else "solver"
    return result, f"lambda_1={lam[0]:.6g} converged {int(conv.sum())}/{lam.size} ({src})"


def cmd_solve(cfg: RunConfig, out: Path, args) -> tuple[dict, str]:
    weight = make_weight(cfg)
    grid = make_grid(cfg)
    rhs = cfg.solve.rhs
    if rhs.endswith(".csv"):
        f = read_field_csv(rhs, grid).values
    else:
        try:
            f = builtin_rhs(rhs, grid)
        except DbarlabError as exc:
            raise ConfigError(str(exc)) from exc
    report = canonical_solve(grid, weight, f, cfg.solver.tol, penalty=cfg.operator.penalty,
                             max_iter=cfg.solver.max_iter, K=cfg.solve.K)
    probe = minimality_probe(grid, weight, report, cfg.solve.trials, seed=cfg.seed)
    result = _base(cfg, "solve")
    result.update(report.to_dict())
    result.update({"rhs": rhs, "minimality_probe": probe})
    pts = report.u.points
    if "csv" in cfg.output.formats:
        write_field_csv(out / "u.csv", pts, report.u.values)
    if "dat" in cfg.output.formats:
        row = (pts.j == 0) & (pts.x >= 0)
        save_dat(out / "u_axis.dat", [pts.x[row], np.abs(report.u.values[row])], "x |u(x)|")
    return result, (f"|u|_phi^2={report.weighted_norm**2:.6g} residual={report.residual_rel:.2e} "
                    f"orthogonality={report.ortho_defect:.2e}")


def _diagnose_params(cfg: RunConfig) -> DiagnoseParams:
    d = cfg.diagnose
    return DiagnoseParams(
        radii=d.radii, samples_per_ring=d.samples_per_ring, ball_radius=d.ball_radius,
        flat_band=d.flat_band, laplacian_ratio=d.laplacian_ratio, laplacian_min=d.laplacian_min,
        mu_rel_slope=d.mu_rel_slope, degeneracy_radii=d.degeneracy_radii,
        degeneracy_h=d.degeneracy_h, degeneracy_growth=d.degeneracy_growth,
        cluster_halfwidth=d.cluster_halfwidth, degeneracy_k=d.degeneracy_k,
        penalty=cfg.operator.penalty, eig_tol=cfg.eigs.tol, seed=cfg.seed, workers=cfg.workers,
    )


def cmd_diagnose(cfg: RunConfig, out: Path, args) -> tuple[dict, str]:
    weight = make_weight(cfg)
    grid = make_grid(cfg)
    rep = classify(grid, weight, _diagnose_params(cfg))
    result = _base(cfg, "diagnose")
    result.update(rep.to_dict())
    if "dat" in cfg.output.formats:
        mp = rep.mu_profile
        save_dat(out / "mu_profile.dat", [mp["radii"], mp["mu_hat"]], "r mu_hat")
        lp = np.array(rep.laplacian_profile)
        save_dat(out / "laplacian_profile.dat", [lp[:, 0], lp[:, 1]], "r min_laplacian")
        mg = np.array(rep.magnetic_profile)
        save_dat(out / "magnetic.dat", [mg[:, 0], mg[:, 1]], "|w| magnetic_integral")
        if rep.degeneracy:
            save_dat(out / "degeneracy.dat",
                     [[d["R"] for d in rep.degeneracy], [d["count"] for d in rep.degeneracy]],
                     "R count")
    fired = ",".join(rep.criteria_fired) or "none"
    return result, f"verdict={rep.verdict.value} fired={fired}"


def cmd_scan_mu(cfg: RunConfig, out: Path, args) -> tuple[dict, str]:
    weight = make_weight(cfg)
    grid = make_grid(cfg)
    d = cfg.diagnose
    H = assemble_H(grid, weight, cfg.operator.penalty)
    mp = mu_profile(grid, weight, d.radii, d.samples_per_ring, ball_radius=d.ball_radius,
                    H=H, workers=cfg.workers)
    result = _base(cfg, "scan-mu")
    result.update(mp.to_dict())
    if "dat" in cfg.output.formats:
        save_dat(out / "mu_profile.dat", [mp.radii, mp.values], "r mu_hat")
    vals = " ".join(f"{v:.4g}" for v in mp.values)
    return result, f"mu_hat={vals} slope={mp.slope:.4g}"


def cmd_report(cfg: RunConfig, out: Path, args) -> tuple[dict | None, str]:
    found = {}
    missing = []
    for command, name in ARTIFACTS.items():
        path = out / name
        if path.exists():
            found[command] = json.loads(path.read_text())
        else:
            missing.append(name)
    if not found:
        raise ConfigError(f"no run artifacts in {out}; missing: {', '.join(missing)}")
    runs: dict = {}
    for command, payload in sorted(found.items()):
        runs.setdefault(payload.get("config_hash", "unknown"), {})[command] = payload
    report = {
        "generated": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "tool_version": __version__,
        "missing": missing,
        "runs": runs,
    }
    save_json(out / "report.json", report)
    lines = [f"{'config':<18}{'command':<16}summary"]
    for h, cmds in sorted(runs.items()):
        for command, payload in sorted(cmds.items()):
            lines.append(f"{h:<18}{command:<16}{_summary(command, payload)}")
    if missing:
        lines.append("missing: " + ", ".join(missing))
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    return None, f"report for {len(runs)} configuration(s), {len(found)} artifact(s)"


def _summary(command: str, p: dict) -> str:
    if command == "eigs":
        return f"lambda_1={p['lambda_1']:.6g} C_h={p['C_h']:.4g} k={p['k']}"
    if command == "solve":
        return f"|u|^2={p['weighted_norm_sq']:.6g} orth={p['orthogonality_defect']:.2e}"
    if command == "diagnose":
        return f"verdict={p['verdict']} fired={','.join(p['criteria_fired']) or 'none'}"
    if command == "scan-mu":
        return "mu_hat=" + " ".join(f"{v:.4g}" for v in p["mu_hat"])
    if command == "weights-check":
        return f"C_hat={p['doubling']['C_hat']:.4g} delta_hat={p['doubling']['delta_hat']:.4g}"
    return ""


HANDLERS = {
    "weights-check": cmd_weights_check,
    "eigs": cmd_eigs,
    "solve": cmd_solve,
    "diagnose": cmd_diagnose,
    "scan-mu": cmd_scan_mu,
    "report": cmd_report,
}


# entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dbarlab",
        description="Weighted dbar problems, magnetic Schroedinger spectra and compactness diagnostics.",
        epilog="Override any config key with --section.key=value, e.g. --grid.R=8.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", nargs="?", help="TOML configuration file")
    p.add_argument("--strict", action="store_true", help="exit 3 when the diagnosis is inconclusive")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not write the result cache")
    p.add_argument("--workers", type=int, help="parallel ball eigenproblems")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _emit_error(exc: BaseException, code: int) -> None:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("residual", "radius"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")


def run(command: str, config_path=None, flags: list[str] | None = None) -> int:
    """Run one command; returns the exit status."""
    return main([command] + ([str(config_path)] if config_path else []) + list(flags or []))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = []
        for flag in extra:
            if not flag.startswith("--"):
                raise ConfigError(f"unexpected argument {flag!r}")
            overrides.append(flag)
        cfg = load_config(args.config, overrides)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg.workers = args.workers
        out = Path(cfg.output.directory)
        if args.command == "report" and not out.is_dir():
            raise ConfigError(f"output directory {out} does not exist")
        out.mkdir(parents=True, exist_ok=True)
        result, summary = HANDLERS[args.command](cfg, out, args)
        if result is not None:
            save_json(out / ARTIFACTS[args.command], result)
        print(f"{args.command}: {summary}")
        if (args.command == "diagnose" and args.strict
                and result["verdict"] == Verdict.INCONCLUSIVE.value):
            return EXIT_INCONCLUSIVE
        return EXIT_OK
    except DbarlabError as exc:
        _emit_error(exc, exc.exit_code)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        _emit_error(exc, EXIT_NUMERIC)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

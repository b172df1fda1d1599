"""Command line entry point: ``twisted-nls run|validate|print-defaults``.

Exit codes: 0 success, 1 assertion failure, 2 missing config file,
3 schema violation, 4 unsupported regime, 5 compute failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import traceback
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, fd
from .basis import Tolerances, cached_build_basis
from .config import (
    ConfigFileMissing,
    RunConfig,
    SchemaError,
    defaults_text,
    parse_config,
)
from .errors import ConfigurationError, TwistedNLSError, UnsupportedRegimeError
from .io import trace_columns, write_csv, write_json
from .norms import canonical_pair, mixed_norm
from .solver import limit_solution, solve, split_step_solve, strichartz_pair
from .spectral import SpectralField
from .verification import (
    RandomFieldSpec,
    blowup_monitor,
    conservation_report,
    loglog_slope,
    random_fields,
    random_traces,
    stability_experiment,
    verify_derivative_bound,
    verify_difference_estimate,
    verify_embedding,
    verify_truncation_gap,
)

EXIT_OK, EXIT_ASSERT, EXIT_MISSING, EXIT_SCHEMA, EXIT_REGIME, EXIT_COMPUTE = range(6)


@dataclass
class Outcome:
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def check(self, name, passed, detail):
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})


def initial_datum(cfg: RunConfig, basis) -> SpectralField:
    amp = float(cfg.data["amplitude"])
    if amp == 0:
        return SpectralField.zeros(basis)
    if cfg.data["kind"] == "ground":
        return SpectralField.unit(basis, [0] * basis.n, [0] * basis.n) * amp
    rs = RandomFieldSpec(seed=cfg.seed, amplitude_law="fixed", amp_min=amp,
                         decay=float(cfg.data["decay"]), count=1)
    return random_fields(rs, basis, stream=0)[0]


def _basis(cfg: RunConfig):
    return cached_build_basis(cfg.model, Tolerances())


def run_basis_check(cfg: RunConfig, out: Outcome):
    t = time.perf_counter()
    b = _basis(cfg)
    v = b.validation
    n = b.n
    ground = b.index_of([0] * n, [0] * n)
    points = b.nodes[b.weights * np.abs(b.phi[:, ground]) ** 2 > 1e-3]
    lam_fd = fd.stencil_eigenvalue(lambda p: b.evaluate(p, [ground])[:, 0], points, n)
    out.summary.update({
        "orthonormality_residual": v["orthonormality_residual"],
        "eigen_composition_residual": v["eigen_composition_residual"],
        "ground_state_fd_eigenvalue": float(np.real(lam_fd)),
        "size": b.size, "build_seconds": time.perf_counter() - t,
    })
    idx = b.indices
    cols = {f"mu{j + 1}": idx[:, j] for j in range(n)}
    cols.update({f"nu{j + 1}": idx[:, n + j] for j in range(n)})
    cols["eigenvalue"] = b.eigenvalues
    out.tables["eigenvalues"] = cols
    tol = cfg.checks["orthonormality"]
    out.check("orthonormality", v["orthonormality_residual"] <= tol,
              f"{v['orthonormality_residual']:.3e} <= {tol:g}")
    out.check("ladder_composition", v["eigen_composition_residual"] <= tol,
              f"{v['eigen_composition_residual']:.3e} <= {tol:g}")
    err = abs(float(np.real(lam_fd)) - n)
    out.check("ground_state_stencil", err <= 1e-4, f"|{np.real(lam_fd):.8f} - {n}| <= 1e-4")


def _trace_checks(cfg, tr, out):
    if tr.meta.get("scheme") == "splitstep":
        ch = tr.charge()
        drift = float(np.max(np.abs(ch - ch[0])) / ch[0]) if ch[0] > 0 else 0.0
        tol = cfg.checks["charge_drift"]
        out.check("charge_drift", drift <= tol, f"{drift:.3e} <= {tol:g}")
    else:
        res = tr.meta["residuals"][-1]
        tol = cfg.solver.tol_fixed_point
        out.check("fixed_point_residual", res <= 2 * tol, f"{res:.3e} <= {2 * tol:g}")


def run_simulate(cfg: RunConfig, out: Outcome):
    b = _basis(cfg)
    f = initial_datum(cfg, b)
    tr = solve(f, cfg.nonlinearity, cfg.solver)
    out.tables["trace"] = trace_columns(tr)
    out.summary.update({"iterations": tr.meta.get("iterations", 0),
                        "contraction_factors": tr.meta.get("contraction_factors", [])})
    if b.n > 1:
        g, r = strichartz_pair(b.n)
        out.summary["mixed_norm"] = json.loads(mixed_norm(tr, g, r).to_json())
    out.warnings += tr.meta.get("warnings", [])
    _trace_checks(cfg, tr, out)


def run_conserve(cfg: RunConfig, out: Outcome):
    b = _basis(cfg)
    f = initial_datum(cfg, b)
    tr = split_step_solve(f, cfg.nonlinearity, cfg.solver)
    rep = conservation_report(tr)
    out.tables["trace"] = trace_columns(tr)
    out.tables["drift"] = {k: rep[k] for k in ("t", "charge_drift", "energy_drift", "energy_m_drift")}
    out.summary.update({k: v for k, v in rep.items() if k.startswith("max_")})
    out.summary.update({"iterations": 0, "contraction_factors": []})
    tol = cfg.checks["charge_drift"]
    out.check("charge_drift", rep["max_charge_drift"] <= tol,
              f"{rep['max_charge_drift']:.3e} <= {tol:g}")


def run_truncation_study(cfg: RunConfig, out: Outcome):
    b = _basis(cfg)
    f = initial_datum(cfg, b)
    schedule = [int(m) for m in cfg.study["m_schedule"]]
    tr, table = limit_solution(f, cfg.nonlinearity, cfg.solver.replace(scheme="picard"), schedule)
    gaps = [row["gap"] for row in table]
    ms = [row["m"] for row in table]
    slope = loglog_slope(ms, gaps)
    n = b.n
    target = -1.0 / (n * (n - 1))
    out.tables["gaps"] = {"m": ms, "m_next": [r["m_next"] for r in table], "gap": gaps}
    out.summary.update({"gap_table": table, "fitted_slope": slope, "target_slope": target,
                        "iterations": tr.meta["iterations"],
                        "contraction_factors": tr.meta["contraction_factors"]})
    decreasing = all(a > c for a, c in zip(gaps, gaps[1:]))
    out.check("gaps_strictly_decreasing", decreasing, " > ".join(f"{g:.3e}" for g in gaps))
    bound = target + cfg.checks["slope_margin"]
    out.check("decay_slope", math.isfinite(slope) and slope <= bound, f"{slope:.3f} <= {bound:.3f}")


def run_verify_estimates(cfg: RunConfig, out: Outcome):
    b = _basis(cfg)
    n = b.n
    count = int(cfg.study["samples"])
    rs = RandomFieldSpec(seed=cfg.seed, amp_max=float(cfg.study["sample_amplitude_max"]),
                         count=count)
    m_list = [int(m) for m in cfg.study["m_list"]]
    lam = cfg.nonlinearity.lam
    reports = {
        # Sobolev endpoint 2n p1/(2n - p1) at p1 = 2
        "embedding": verify_embedding(rs, 2, Fraction(4 * n, 2 * n - 2), b),
        "difference": verify_difference_estimate(rs, m_list, b, lam=lam),
        "derivative": verify_derivative_bound(rs, m_list, b, lam=lam),
    }
    big = RandomFieldSpec(seed=cfg.seed, amplitude_law="fixed",
                          amp_min=float(cfg.study["gap_amplitude"]), count=max(2, count // 4))
    reports["truncation_gap"] = verify_truncation_gap(random_traces(big, b, stream=6), m_list, b,
                                                      cfg.nonlinearity)
    for name, rep in reports.items():
        out.tables[name] = {"sample": list(range(rep.sample_count)), "lhs": rep.lhs,
                            "rhs_structure": rep.rhs_structure, "ratio": rep.ratios}
        out.check(f"{name}_violations", rep.violation_count == 0,
                  f"{rep.violation_count} violations at C = {rep.fitted_constant:.4e}")
    out.summary["reports"] = {k: {"fitted_constant": r.fitted_constant,
                                  "sample_count": r.sample_count, "extras": r.extras,
                                  "notes": r.notes} for k, r in reports.items()}
    spread = reports["difference"].extras["m_spread"]
    out.check("difference_m_uniformity", spread <= cfg.checks["m_spread"],
              f"spread {spread:.3f} <= {cfg.checks['m_spread']:g}")
    tg = reports["truncation_gap"].extras
    if tg["worst_decay_slope"] is not None:
        bound = tg["target_slope"] + cfg.checks["slope_margin"]
        out.check("truncation_decay_slope", tg["worst_decay_slope"] <= bound,
                  f"{tg['worst_decay_slope']:.3f} <= {bound:.3f}")
    if tg["max_halving_factor"] is not None:
        bound = tg["halving_bound"] * 1.3
        out.check("truncation_interval_scaling", tg["max_halving_factor"] <= bound,
                  f"{tg['max_halving_factor']:.3f} <= {bound:.3f}")


def run_stability(cfg: RunConfig, out: Outcome):
    b = _basis(cfg)
    f = initial_datum(cfg, b)
    eps = [float(e) for e in cfg.study["epsilon_list"]]
    res = stability_experiment(f, eps, cfg.nonlinearity, cfg.solver, seed=cfg.seed)
    rows = [r for r in res["rows"] if not r.get("failed")]
    keys = ["eps", "data_distance", "diff_canonical", "ratio_canonical", "diff_energy", "ratio_energy"]
    out.tables["stability"] = {k: [r[k] for r in rows] for k in keys}
    out.summary.update({"stability": res["summary"], "flags": res["flags"],
                        "iterations": 0, "contraction_factors": []})
    out.warnings += res["flags"]
    for name, s in res["summary"].items():
        out.check(f"{name}_monotone", s["monotone"], "differences decrease with eps")
        sp = s["ratio_spread"]
        out.check(f"{name}_ratio_spread", sp is not None and sp <= cfg.checks["spread"],
                  f"spread {sp} <= {cfg.checks['spread']:g}")


def run_blowup(cfg: RunConfig, out: Outcome):
    b = _basis(cfg)
    f = initial_datum(cfg, b)
    pair = canonical_pair(b.n)
    res = blowup_monitor(f, cfg.nonlinearity, cfg.solver, (pair.q, pair.p),
                         threshold=float(cfg.study["blowup_threshold"]))
    out.tables["running_norm"] = {"t": res["t"], "space_norm": res["space_norm"],
                                  "running": res["running"]}
    out.summary.update({"flags": res["flags"], "growth": res["growth"], "pair": res["pair"],
                        "iterations": 0, "contraction_factors": []})
    out.warnings += [json.dumps(fl) for fl in res["flags"]]
    run = res["running"]
    out.check("running_norm_nondecreasing", bool(np.all(np.diff(run) >= 0)), "monotone")


DRIVERS = {
    "simulate": run_simulate,
    "truncation-study": run_truncation_study,
    "verify-estimates": run_verify_estimates,
    "conserve": run_conserve,
    "stability": run_stability,
    "blowup": run_blowup,
    "basis-check": run_basis_check,
}


def _config_summary(cfg: RunConfig):
    return dict(cfg.raw)


def execute(cfg: RunConfig, output_dir=None) -> int:
    """Run the configured experiment and write its artifacts; returns the exit code."""
    outdir = Path(output_dir or cfg.output_dir)
    h = cfg.config_hash
    started = time.time()
    out = Outcome()
    try:
        DRIVERS[cfg.experiment](cfg, out)
    except UnsupportedRegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (TwistedNLSError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        err = {"config_hash": h, "experiment": cfg.experiment, "error": type(exc).__name__,
               "message": str(exc), "traceback": traceback.format_exc()}
        if hasattr(exc, "residuals"):
            err["residuals"] = exc.residuals
        if hasattr(exc, "partial_table"):
            err["partial_table"] = exc.partial_table
        write_json(outdir / "error.json", err)
        print(json.dumps({k: err[k] for k in ("error", "message", "config_hash")}), file=sys.stderr)
        return EXIT_COMPUTE
    files = []
    for name, cols in out.tables.items():
        path = write_csv(outdir / f"{cfg.experiment}-{name}-{h}.csv", cols)
        files.append(path.name)
    failed = [c for c in out.checks if not c["passed"]] if cfg.checks["enabled"] else []
    summary = {
        "config": _config_summary(cfg), "config_hash": h, "seed": cfg.seed,
        "experiment": cfg.experiment, "version": __version__,
        "iterations": out.summary.pop("iterations", 0),
        "contraction_factors": out.summary.pop("contraction_factors", []),
        "warnings": out.warnings, "checks": out.checks, "results": out.summary,
        "files": files, "passed": not failed,
        "meta": {"started": started, "elapsed_seconds": time.time() - started},
    }
    write_json(outdir / "summary.json", summary)
    lines = [f"twisted-nls {__version__}  experiment={cfg.experiment}  config_hash={h}  seed={cfg.seed}", ""]
    for c in out.checks:
        lines.append(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['detail']}")
    for w in out.warnings:
        lines.append(f"warning: {w}")
    lines += ["", "files: " + ", ".join(files)]
    (outdir / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if failed:
        print("assertion failed: " + ", ".join(c["name"] for c in failed), file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def _load(path):
    try:
        return parse_config(path), EXIT_OK
    except ConfigFileMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_MISSING
    except UnsupportedRegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return None, EXIT_REGIME
    except (SchemaError, ConfigurationError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return None, EXIT_SCHEMA


def build_parser():
    p = argparse.ArgumentParser(prog="twisted-nls",
                                description="Spectral solver and estimate checks for the twisted NLS.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output-dir", help="override output_dir from the config")
    v = sub.add_parser("validate", help="parse and validate a config without computing")
    v.add_argument("config")
    sub.add_parser("print-defaults", help="print the default config with comments")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "print-defaults":
        sys.stdout.write(defaults_text())
        return EXIT_OK
    cfg, code = _load(args.config)
    if cfg is None:
        return code
    if args.command == "validate":
        print(f"ok {cfg.experiment} config_hash={cfg.config_hash}")
        return EXIT_OK
    return execute(cfg, args.output_dir)


if __name__ == "__main__":
    sys.exit(main())

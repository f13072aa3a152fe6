"""Command-line front end: predict, simulate, verify, sweep.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError
from .model import EntryLaw, Prediction, SystemConfig
from .montecarlo import default_workers, independence_test, normality_test, run_experiment
from .predict import predict, predict_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
SEED_ENV = "SIR_ASYMPTOTICS_SEED"
ERROR_TOKEN = "ERROR"

SWEEP_FIELDS = ["axis", "value", "b", "variance_coefficient", "G_atoms", "mu", "rho", "mu1", "rho1",
                "variant", "assumption_d_pass", "assumption_d_residual1", "assumption_d_residual2", "error"]


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_config(args) -> SystemConfig:
    if not args.config:
        raise UsageError("--config FILE is required")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    config = SystemConfig.from_json(text)
    seed = config.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: expected an integer, got {env!r}") from None
    if args.seed is not None:
        seed = args.seed
    return config.replace(seed=seed)


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text)


# ------------------------------------------------------------------ commands

def cmd_predict(args) -> int:
    config = load_config(args)
    pred = predict_config(config)
    _emit(json.dumps(pred.to_dict(), indent=2) + "\n", args.out, "prediction.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_config(args)
    out = Path(args.out or "sir_run")
    m = min(args.tracked_users, config.K)
    result = run_experiment(config, args.reps, m, workers=args.workers or default_workers())
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "result.json": result.to_json() + "\n",
        "samples.csv": result.to_csv(),
        "config.json": config.to_json() + "\n",
    }
    for name, text in files.items():
        (out / name).write_text(text)
    manifest = {
        "command_line": sys.argv,
        "config": config.to_dict(),
        "code_version": __version__,
        "seed": config.seed,
        "R": args.reps,
        "tracked_users": m,
        "timestamp_utc": dt.datetime.now(dt.timezone.utc).isoformat(),
        "outputs": {name: {"sha256": _sha256(out / name)} for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {', '.join(files)} and manifest.json to {out}")
    return EXIT_OK


def _check(name, law, observed, predicted, passed, **extra) -> dict:
    return {"check": name, "law": law, "observed": observed, "predicted": predicted,
            "passed": bool(passed), **extra}


def cmd_verify(args) -> int:
    config = load_config(args)
    gaussian = config.entry_law is EntryLaw.NORMAL
    if args.sum_clt and not gaussian and not args.force:
        raise UsageError("the sum-SIR CLT assumes E v^4 = 3 (Gaussian entries); "
                         f"entry law {config.entry_law.value} has E v^4 = {config.entry_law.fourth_moment}. "
                         "Pass --force to run the comparison anyway")
    run_sum = gaussian or args.sum_clt
    m = min(args.tracked_users, config.K)
    pred = predict_config(config, finite=True)
    coeff = pred.var_coeff if args.override_var is None else args.override_var
    res = run_experiment(config, args.reps, m, workers=args.workers or default_workers())
    checks = []

    for k in range(m):
        p = float(res.tracked_powers[k])
        if p == 0:
            continue
        rep = normality_test(res.per_user_fluctuations[:, k], 0.0, coeff * p * p)
        checks.append(_check(f"user {k} fluctuation sqrt(N)(beta - p b_N)", "individual SIR CLT",
                             {"z_mean": rep.z_mean, "var_ratio": rep.var_ratio, "ks_pvalue": rep.ks_pvalue},
                             {"mean": 0.0, "variance": coeff * p * p}, rep.passes()))
    if m >= 2 and np.all(np.std(res.per_user_fluctuations, axis=0) > 0):
        ind = independence_test(res.per_user_fluctuations)
        checks.append(_check("max off-diagonal correlation", "asymptotic independence of users",
                             ind.max_abs_correlation, f"<= {ind.threshold:.4g}", ind.passed))

    # the sup distance to an atomic law cannot shrink below half an atom mass
    # while the SIRs spread around the atoms, so the pass criterion is Levy
    spread = max(p * math.sqrt(pred.var_coeff / config.N) for p, _ in pred.limiting_sir_dist)
    levy_tol = 4.0 * spread + 0.01
    levy = float(np.mean(res.levy_to_G))
    checks.append(_check("Levy distance of SIR ECDF to G", "limiting SIR distribution", levy,
                         f"<= {levy_tol:.4g}", levy <= levy_tol, ks_sup_distance=float(np.mean(res.ks_to_G))))

    if run_sum:
        if not pred.assumption_d["pass"]:
            checks.append(_check("sum-SIR CLT", "sum SIR CLT", None, None, True,
                                 note="skipped: moment assumption on the power profile fails",
                                 residuals=pred.assumption_d["residuals"]))
        else:
            for label, samples, mu, rho in (("sum", res.sum_fluctuations, pred.mu, pred.rho),
                                            ("log-sum", res.logsum_fluctuations, pred.mu1, pred.rho1)):
                if rho <= 0:
                    continue
                rep = normality_test(samples, mu, rho)
                checks.append(_check(f"{label} fluctuation", "sum SIR CLT" if label == "sum" else "sum mutual information CLT",
                                     {"mean": float(np.mean(samples)), "var": float(np.var(samples, ddof=1)),
                                      "z_mean": rep.z_mean, "ks_pvalue": rep.ks_pvalue},
                                     {"mean": mu, "variance": rho}, rep.passes(), variant=pred.variant))

    ok = all(c["passed"] for c in checks)
    report = {"passed": ok, "config": config.to_dict(), "R": args.reps, "checks": checks}
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"[{status}] {c['law']}: {c['check']}: observed {c['observed']} predicted {c['predicted']}")
    if args.out:
        _emit(json.dumps(report, indent=2) + "\n", args.out, "verify.json")
    return EXIT_OK if ok else EXIT_FAIL


def parse_grid(text: str, axis: str) -> list[float]:
    if not text.strip():
        return []
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--grid: expected comma-separated numbers, got {text!r}") from None
    bad = [v for v in vals if not (v > 0 and math.isfinite(v))]
    if bad:
        raise UsageError(f"--grid: {axis} values must be positive and finite, got {bad}")
    return vals


def sweep_rows(config: SystemConfig, axis: str, grid: list[float]) -> list[dict]:
    rows = []
    for v in grid:
        c, sigma2 = (v, config.sigma2) if axis == "c" else (config.c, v)
        row = {"axis": axis, "value": v}
        try:
            pred: Prediction = predict(c, config.profile, sigma2, config.entry_law.fourth_moment)
        except (NumericalError, ValueError) as exc:
            row.update({f: ERROR_TOKEN for f in SWEEP_FIELDS[2:-1]})
            row["error"] = str(exc).replace("\n", " ")
        else:
            d = pred.to_dict()
            row.update({k: d[k] for k in ("b", "variance_coefficient", "mu", "rho", "mu1", "rho1", "variant")})
            row["G_atoms"] = json.dumps(d["G_atoms"])
            row["assumption_d_pass"] = d["assumption_d"]["pass"]
            row["assumption_d_residual1"], row["assumption_d_residual2"] = d["assumption_d"]["residuals"]
            row["error"] = ""
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    config = load_config(args)
    grid = parse_grid(args.grid, args.axis)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in sweep_rows(config, args.axis, grid):
        w.writerow({k: _fmt(v) for k, v in row.items()})
    _emit(buf.getvalue(), args.out, "sweep.csv")
    return EXIT_OK


# ------------------------------------------------------------------- parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="system configuration (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory (predict and sweep default to stdout)")
    common.add_argument("--seed", type=int, help=f"override the config seed (wins over ${SEED_ENV})")
    common.add_argument("--workers", type=int, default=None, help="worker processes (default: available CPUs)")
    common.add_argument("--reps", type=int, default=2000, help="Monte Carlo replications R")
    common.add_argument("--tracked-users", type=int, default=4, help="users whose fluctuations are recorded")
    common.add_argument("--sum-clt", action="store_true", help="request the sum-SIR CLT comparison")
    common.add_argument("--force", action="store_true", help="run the sum-SIR CLT check for non-Gaussian entries")
    common.add_argument("--override-var", type=float, default=None, metavar="X",
                        help="replace the predicted variance coefficient (harness self-test)")

    ap = argparse.ArgumentParser(prog="sir-asymptotics", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", parents=[common], help="limiting quantities as JSON").set_defaults(func=cmd_predict)
    sub.add_parser("simulate", parents=[common], help="run replications, write JSON, CSV and a manifest"
                   ).set_defaults(func=cmd_simulate)
    sub.add_parser("verify", parents=[common], help="simulate and test against the predictions"
                   ).set_defaults(func=cmd_verify)
    sw = sub.add_parser("sweep", parents=[common], help="predictions over a grid of c or sigma2 as CSV")
    sw.add_argument("--axis", choices=("c", "sigma2"), required=True)
    sw.add_argument("--grid", default="", help="comma-separated values, e.g. 0.25,0.5,1")
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.reps < 2:
        print("error: --reps must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    if args.tracked_users < 1 or (args.workers is not None and args.workers < 1):
        print("error: --tracked-users and --workers must be positive", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

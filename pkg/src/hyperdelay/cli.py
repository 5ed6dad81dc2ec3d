"""Command-line front end: ``hyperdelay {kernels,simulate,roots,sweep,verify}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from . import __version__
from .config import SWEEP_KEYS, RunConfig, load_config
from .errors import (CommensurabilityError, ConfigError, ContourError, ConvergenceError,
                     GridMismatchError, PreconditionError, SimulationError,
                     UnsupportedLawError)
from .kernels import (KernelSet, check_boundary_data, compute_feedback_gains, design,
                      solve_inverse_kernels, solve_kernels, verify_kernel_residual)
from .laws import needs_kernels
from .model import classify_open_loop_gain
from .neutral import History, reduce_closed_loop, simulate_neutral
from .pde_sim import (consistent_initial_state, inverse_transform, simulate, transform_state)
from .spectral import build_characteristic, count_rhp_roots, positivity_certificate

log = logging.getLogger("hyperdelay")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
NONDETERMINISTIC = {"timings.csv"}

PLOT_SCRIPT = '''"""Plot the L2 norm of a trace CSV written by ``hyperdelay simulate``."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "trace.csv"
with open(path) as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
l2 = [float(r["l2"]) for r in rows]
plt.semilogy(t, l2)
plt.xlabel("t")
plt.ylabel("L2 norm of (u, v)")
plt.title({title!r})
plt.grid(True, which="both", alpha=0.3)
out = path.rsplit(".", 1)[0] + ".png"
plt.savefig(out, dpi=150)
print(out)
'''


class _Run:
    """Output directory bookkeeping: config echo and manifest."""

    def __init__(self, cfg: RunConfig, out: str, command: str):
        self.cfg, self.out, self.command = cfg, out, command
        os.makedirs(out, exist_ok=True)
        self.files = []
        self.write_text("config.txt", cfg.echo())

    def path(self, name):
        if name not in self.files:
            self.files.append(name)
        return os.path.join(self.out, name)

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)

    def write_json(self, name, obj):
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def finish(self, status):
        entries = []
        for name in sorted(self.files):
            entry = {"file": name}
            if name in NONDETERMINISTIC:
                entry["deterministic"] = False
            else:
                with open(os.path.join(self.out, name), "rb") as fh:
                    entry["sha256"] = hashlib.sha256(fh.read()).hexdigest()
            entries.append(entry)
        manifest = {"command": self.command, "version": __version__, "status": status,
                    "files": entries}
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _kernels_for(cfg: RunConfig, plant, need_inverse: bool = False):
    """Kernel set from file or solver; inverse kernels and gains when requested."""
    tol = float(cfg["numerics.tolerance"])
    iters = int(cfg["numerics.max_iterations"])
    path = cfg.kernel_file
    if path is not None:
        K = KernelSet.from_csv(path)
    else:
        K = solve_kernels(plant, cfg.n, tol=tol, max_iterations=iters)
    if not need_inverse:
        return K, None, None
    L = solve_inverse_kernels(K, plant, tol=tol, max_iterations=iters)
    return K, L, compute_feedback_gains(K, L, plant)


def cmd_kernels(cfg: RunConfig, run: _Run, args) -> int:
    plant = cfg.plant
    K, _, _ = _kernels_for(cfg, plant)
    K.to_csv(run.path("kernels.csv"))
    report = {"n": K.n, "iterations": K.iterations, "last_update": K.last_update,
              "residual": verify_kernel_residual(K, plant),
              "boundary": check_boundary_data(K, plant)}
    run.write_json("residuals.json", report)
    print(json.dumps(report["residual"], sort_keys=True))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, run: _Run, args) -> int:
    plant, law = cfg.plant, cfg.law
    K = _kernels_for(cfg, plant)[0] if needs_kernels(law) or not plant.uncoupled else None
    tr = simulate(plant, law, K, cfg.delta, cfg["numerics.u0"], cfg["numerics.v0"],
                  cfg.horizon, cfg.n, int(cfg["output.stride"]))
    tr.to_csv(run.path("trace.csv"))
    run.write_text("plot_trace.py", PLOT_SCRIPT.replace(
        "{title!r}", repr(f"{law.name}, delta={cfg.delta:g}, n={cfg.n}")))
    summary = {"dt": tr.dt, "samples": len(tr), "l2_initial": float(tr.l2[0]),
               "l2_final": float(tr.l2[-1]), "l2_max": float(tr.l2.max()),
               "tail_rate": tail_rate(tr.t, tr.l2)}
    run.write_json("summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def tail_rate(t, l2) -> Optional[float]:
    """Least-squares slope of ``log L2`` over the second half of the run."""
    t = np.asarray(t)
    l2 = np.asarray(l2)
    mask = (t >= 0.5 * t[-1]) & (l2 > 0)
    if mask.sum() < 2:
        return None
    return float(np.polyfit(t[mask], np.log(l2[mask]), 1)[0])


def _roots_verdict(cfg: RunConfig):
    plant, law = cfg.plant, cfg.law
    gains = None
    if not plant.uncoupled:
        gains = _kernels_for(cfg, plant, need_inverse=True)[2]
    F = build_characteristic(plant, gains, law, cfg.delta)
    spacing = cfg.get("scan.spacing")
    res = count_rhp_roots(F, cfg.region, spacing=spacing, refine=bool(cfg["scan.refine"]),
                          max_refine=int(cfg["scan.max_refine"]))
    verdict = res.verdict()
    verdict["cap"] = float(cfg["scan.cap"]) if cfg.get("scan.region") is None else verdict["cap"]
    verdict["open_loop_class"] = classify_open_loop_gain(plant.rho, plant.q).value
    if cfg["scan.certificate"] and not F.has_polynomial_weights:
        cert = positivity_certificate(F, verdict["cap"])
        verdict["certificate"] = {"margin": cert.margin, "sup_distributed": cert.sup_distributed,
                                  "certified": cert.certified}
    return res, verdict


def cmd_roots(cfg: RunConfig, run: _Run, args) -> int:
    res, verdict = _roots_verdict(cfg)
    res.roots_to_csv(run.path("roots.csv"))
    run.write_json("verdict.json", verdict)
    print(json.dumps(verdict, sort_keys=True))
    return EXIT_OK


def _sweep_row(cfg: RunConfig, key: str, value):
    """One sweep point; failures are reported in the row."""
    row = {"value": value, "verdict": "error", "rhp_count": "", "tail_rate": "", "error": ""}
    t0 = time.perf_counter()
    try:
        c = cfg.with_value(SWEEP_KEYS[key], value)
        _, verdict = _roots_verdict(c)
        row["rhp_count"] = verdict["count"]
        row["verdict"] = "stable" if verdict["count"] == 0 else "unstable"
        plant, law = c.plant, c.law
        K = _kernels_for(c, plant)[0] if needs_kernels(law) or not plant.uncoupled else None
        tr = simulate(plant, law, K, c.delta, c["numerics.u0"], c["numerics.v0"], c.horizon,
                      c.n, int(c["output.stride"]))
        rate = tail_rate(tr.t, tr.l2)
        row["tail_rate"] = "" if rate is None else f"{rate:.10g}"
    except (ConfigError, PreconditionError, ConvergenceError, ContourError, SimulationError,
            CommensurabilityError, UnsupportedLawError, GridMismatchError, ValueError) as err:
        row["verdict"] = "error"
        row["error"] = f"{type(err).__name__}: {err}"
    return row, time.perf_counter() - t0


def cmd_sweep(cfg: RunConfig, run: _Run, args) -> int:
    key = cfg.get("sweep.key")
    values = cfg["sweep.values"]
    if values and key is None:
        raise ConfigError("missing required key sweep.key", key="sweep.key")
    workers = max(1, int(args.workers or 1))
    if workers == 1 or len(values) <= 1:
        results = [_sweep_row(cfg, key, v) for v in values]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_row, [cfg] * len(values), [key] * len(values), values))
    cols = ("value", "verdict", "rhp_count", "tail_rate", "error")
    with open(run.path("summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row, _ in results:
            w.writerow([json.dumps(row["value"])] + [row[c] for c in cols[1:]])
    with open(run.path("timings.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("value", "runtime_s"))
        for row, elapsed in results:
            w.writerow((json.dumps(row["value"]), f"{elapsed:.3f}"))
    for row, _ in results:
        print(f"{key}={row['value']}: {row['verdict']} {row['error']}".rstrip())
    return EXIT_OK


def _verify_checks(cfg: RunConfig):
    plant, law = cfg.plant, cfg.law
    n = cfg.n
    checks = []
    try:
        K = _kernels_for(cfg, plant)[0]
    except (ValueError, KeyError, OSError) as exc:
        log.error("kernel file unreadable: %s", exc)
        return [("kernel_file_readable", math.inf, 0.0)]
    n = K.n
    resid = verify_kernel_residual(K, plant)
    bdry = check_boundary_data(K, plant)
    worst = max(resid.values())
    checks.append(("kernel_residual", worst, 1e-8))
    checks.append(("kernel_boundary_data", max(bdry.values()), 1e-8))

    L = solve_inverse_kernels(K, plant, tol=float(cfg["numerics.tolerance"]),
                              max_iterations=int(cfg["numerics.max_iterations"]))
    gains = compute_feedback_gains(K, L, plant)
    state, *_ = consistent_initial_state(plant, law, cfg["numerics.u0"], cfg["numerics.v0"],
                                         n, K, cfg.delta)
    alpha, beta = transform_state(state, K)
    u_back, v_back = inverse_transform(alpha, beta, L)
    err = float(max(np.abs(u_back - state.u).max(), np.abs(v_back - state.v).max()))
    checks.append(("round_trip_transform", err, 5.0 / n))

    try:
        spec = reduce_closed_loop(plant, gains, law, cfg.delta)
    except UnsupportedLawError as exc:
        log.warning("beta trace comparison skipped: %s", exc)
    else:
        tr = simulate(plant, law, K, cfg.delta, cfg["numerics.u0"], cfg["numerics.v0"],
                      cfg.horizon, n)
        hist = History.from_transformed(alpha, beta, plant, tr.dt, spec.max_delay)
        nt = simulate_neutral(spec, hist, cfg.horizon)
        disc = float(np.max(np.abs(nt.beta - tr.beta1)))
        checks.append(("beta_trace", disc, 1e-12 if plant.uncoupled else 5.0 / n))
    return checks


def cmd_verify(cfg: RunConfig, run: _Run, args) -> int:
    checks = _verify_checks(cfg)
    ok = True
    with open(run.path("verify.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("check", "measured", "threshold", "passed"))
        for name, measured, threshold in checks:
            passed = bool(math.isfinite(measured) and measured <= threshold)
            ok &= passed
            w.writerow((name, f"{measured:.6e}", f"{threshold:.6e}", "pass" if passed else "fail"))
            print(f"{'PASS' if passed else 'FAIL'} {name}: {measured:.3e} (<= {threshold:.3e})")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"kernels": cmd_kernels, "simulate": cmd_simulate, "roots": cmd_roots,
            "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperdelay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


cmd_kernels.__doc__ = "Solve the kernel equations and report residuals."
cmd_simulate.__doc__ = "Simulate the closed loop and write an L2 trace."
cmd_roots.__doc__ = "Count right-half-plane zeros of the characteristic function."
cmd_sweep.__doc__ = "Sweep delta, K or rho and summarize stability."
cmd_verify.__doc__ = "Cross-check simulator, neutral equation and kernels."


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or cfg["output.dir"]
        if not os.path.isabs(out) and args.out is None:
            out = os.path.join(cfg.base_dir, out)
        cfg.plant, cfg.law  # validate before creating output
        run = _Run(cfg, out, args.command)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = COMMANDS[args.command](cfg, run, args)
    except (ConfigError, CommensurabilityError) as err:
        print(f"config error: {err}", file=sys.stderr)
        status = EXIT_CONFIG
    except (ConvergenceError, ContourError, SimulationError, GridMismatchError,
            PreconditionError, UnsupportedLawError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        status = EXIT_NUMERIC
    run.finish(status)
    return status


if __name__ == "__main__":
    sys.exit(main())

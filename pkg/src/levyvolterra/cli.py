"""Scenario runner: simulate paths, validate kernels, tabulate characteristic
functions, run S-transform batteries, and verify the change-of-variable
identity, writing all artifacts under a run directory named by config hash
and seed.

Exit codes: 0 pass, 1 verification fail, 2 usage/config error, 3 numerical
failure.  In deterministic mode repeated runs with the same configuration
and seed produce byte-identical report.json files (timings go to log.txt).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from .config import (ConfigError, Scenario, apply_override, config_hash,
                     dump_toml, parse_config)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levy-volterra",
        description="simulation and verification toolkit for Levy-driven "
                    "Volterra processes")
    p.add_argument("--config", type=Path, help="TOML scenario file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted keys)")
    p.add_argument("--seed", type=int, help="override mc.seed")
    p.add_argument("--workers", type=int, help="worker threads for path groups")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded reductions; byte-stable reports")
    p.add_argument("--out-dir", type=Path, default=Path("runs"),
                   help="base directory for run outputs")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="simulate driver and Volterra paths to CSV")
    vk = sub.add_parser("validate-kernel", help="class-membership evidence")
    vk.add_argument("--kernel", help="kernel spec like frac:d=0.25 or indicator")
    cf = sub.add_parser("charfn", help="characteristic-function lattice to CSV")
    cf.add_argument("--kernel", help="kernel spec like frac:d=0.25")
    cf.add_argument("--sigma", type=float, help="override model.sigma")
    cf.add_argument("--nu", choices=["none", "config"],
                    help="drop or keep the configured jump part")
    cf.add_argument("--t", type=float, action="append",
                    help="evaluation times (repeatable)")
    sub.add_parser("s-transform", help="signed-measure battery diagnostics")
    sub.add_parser("verify-ito", help="verify the change-of-variable identity")
    sub.add_parser("print-config", help="print the resolved configuration "
                                        "(the reference for every default)")
    return p


def _kernel_from_spec(spec: str):
    from .kernels import frac_kernel, indicator_kernel
    if spec == "indicator":
        return indicator_kernel()
    name, _, params = spec.partition(":")
    if name == "frac":
        kv = dict(item.split("=", 1) for item in params.split(",") if item)
        return frac_kernel(float(kv.get("d", "0.25")))
    raise ConfigError(f"unknown kernel spec {spec!r}")


def _run_dir(base: Path, cfg: dict) -> Path:
    d = base / f"{config_hash(cfg)}_s{cfg['mc']['seed']}"
    (d / "tables").mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=float) + "\n")


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


class _Log:
    def __init__(self, path: Path):
        self.path = path
        self.lines = []

    def __call__(self, msg: str) -> None:
        stamp = time.strftime("%Y-%m-%d %H:%M:%S")
        self.lines.append(f"[{stamp}] {msg}")

    def flush(self) -> None:
        self.path.write_text("\n".join(self.lines) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(scn: Scenario, rundir: Path, log) -> int:
    import numpy as np

    from .levy import export_levy_csv, path_seed, simulate_path
    from .volterra import export_volterra_csv, simulate_M
    model = scn.model()
    kernel = scn.kernel()
    n = min(scn.n_paths, 64)
    log(f"simulating {n} paths on window {scn.window} with {scn.n_cells} cells")
    for i in range(n):
        lp = simulate_path(model, scn.window, scn.n_cells, path_seed(scn.seed, i))
        export_levy_csv(lp, rundir / "tables" / f"levy_{i:04d}.csv")
        vp = simulate_M(kernel, lp)
        export_volterra_csv(vp, rundir / "tables" / f"volterra_{i:04d}.csv")
    _write_json(rundir / "report.json",
                {"command": "simulate", "n_paths_written": n,
                 "kernel": kernel.label})
    return EXIT_PASS


def _cmd_validate_kernel(scn: Scenario, rundir: Path, log, kernel_spec) -> int:
    from .kernels import ProbeConfig, validate_class_K
    kernel = _kernel_from_spec(kernel_spec) if kernel_spec else scn.kernel()
    log(f"validating kernel {kernel.label}")
    rep = validate_class_K(kernel, ProbeConfig(horizon=scn.window[1]))
    (rundir / "report.txt").write_text(rep.to_text() + "\n")
    _write_json(rundir / "report.json", rep.to_dict())
    log(f"accepted: {rep.accepted}")
    return EXIT_PASS if rep.accepted else EXIT_FAIL


def _cmd_charfn(scn: Scenario, rundir: Path, log, args) -> int:
    import numpy as np

    from .charfn import cf_M
    from .levy import LevyModel, NoJumps
    kernel = _kernel_from_spec(args.kernel) if args.kernel else scn.kernel()
    model = scn.model()
    if args.sigma is not None or args.nu == "none":
        model = LevyModel(sigma=args.sigma if args.sigma is not None else model.sigma,
                          jumps=NoJumps() if args.nu == "none" else model.jumps,
                          small_jump_cutoff=model.small_jump_cutoff,
                          gauss_compensation=model.gauss_compensation)
    c = scn.cfg["charfn"]
    ts = args.t if args.t else [float(x) for x in c["t"]]
    us = np.arange(float(c["u_min"]), float(c["u_max"]) + 1e-12, float(c["u_step"]))
    rows = [("t", "u", "re", "im", "error_bound")]
    for t in ts:
        for u in us:
            r = cf_M(kernel, model, float(t), float(u), scn.quad(),
                     window_a=scn.window[0])
            rows.append((repr(float(t)), repr(float(u)), repr(float(np.real(r.value))),
                         repr(float(np.imag(r.value))), repr(float(r.error))))
    _write_csv(rundir / "tables" / "charfn.csv", rows)
    _write_json(rundir / "report.json",
                {"command": "charfn", "kernel": kernel.label,
                 "n_points": (len(rows) - 1)})
    log(f"wrote {len(rows) - 1} lattice points")
    return EXIT_PASS


def _cmd_s_transform(scn: Scenario, rundir: Path, log) -> int:
    import numpy as np

    from .levy import simulate_paths
    from .stransform import WeightMaker, s_M, weight_diagnostics
    from .volterra import batch_values
    model, kernel = scn.model(), scn.kernel()
    T = scn.window[1]
    log(f"{scn.n_paths} paths for the S-transform battery")
    paths = simulate_paths(model, scn.window, scn.n_cells, scn.n_paths, scn.seed)
    mt = batch_values(kernel, paths, np.array([T]))[:, 0]
    out = []
    ok = True
    for g in scn.g_battery():
        wm = WeightMaker(g, model, paths[0].grid, scn.quad())
        w = wm.weights(paths)
        diag = weight_diagnostics(w)
        se_w = float(np.std(w, ddof=1) / np.sqrt(len(w)))
        prods = w * mt
        se_p = float(np.std(prods, ddof=1) / np.sqrt(len(prods)))
        quad_val = s_M(kernel, model, g, T, scn.quad(), window_a=scn.window[0])
        cell = {
            "g": g.label,
            "weight_mean": diag["mean"], "weight_se": se_w,
            "weight_diagnostics": diag,
            "s_M_mc": float(prods.mean()), "s_M_mc_se": se_p,
            "s_M_quadrature": quad_val.value,
            "s_M_quadrature_error": quad_val.error,
        }
        cell["weight_mean_ok"] = bool(abs(diag["mean"] - 1.0) <= 3.0 * se_w)
        cell["cross_ok"] = bool(abs(cell["s_M_mc"] - quad_val.value)
                                <= 3.0 * se_p + quad_val.error)
        ok = ok and cell["weight_mean_ok"] and cell["cross_ok"]
        out.append(cell)
    _write_json(rundir / "report.json",
                {"command": "s-transform", "passed": ok, "battery": out})
    log(f"battery passed: {ok}")
    return EXIT_PASS if ok else EXIT_FAIL


def _cmd_verify_ito(scn: Scenario, rundir: Path, log, workers: int) -> int:
    import numpy as np

    from .itoverify import (VerificationEngine, pathwise_rms_study,
                            verification_report)
    model, kernel, quad = scn.model(), scn.kernel(), scn.quad()
    A, T = scn.window
    modes = scn.modes
    Gts = scn.G_battery()
    report = {"command": "verify-ito", "modes": modes}
    exit_code = EXIT_PASS

    if "pathwise" in modes:
        log("pathwise refinement study")
        section = []
        for Gt in Gts:
            study = pathwise_rms_study(Gt, kernel, model, T=T,
                                       n_cells=scn.n_cells,
                                       n_paths=min(scn.n_paths, 1000),
                                       seed=scn.seed, n_levels=4)
            rel = study["rms_residuals"][0] / study["rms_G"]
            passed = rel <= 5e-2 and all(r >= 1.3 for r in study["ratios"])
            section.append({"G": Gt.label, **study,
                            "relative_rms": rel, "passed": passed})
            if not passed:
                exit_code = EXIT_FAIL
        report["pathwise"] = section

    cells = []
    if "expectation" in modes or "stransform" in modes:
        battery = scn.g_battery() if "stransform" in modes else []
        fourier_Gts = [G for G in Gts if G.fourier is not None]
        log(f"preparing ensemble: {scn.n_paths} paths x {scn.n_cells} cells")
        eng = VerificationEngine(kernel, model, scn.window, scn.n_cells,
                                 scn.n_paths, scn.seed, quad,
                                 n_groups=scn.n_groups, workers=workers)
        eng.prepare(Gts, battery)
        if "expectation" in modes:
            for Gt in Gts:
                log(f"expectation cell: {Gt.label}")
                cells.append(eng.expectation_terms(Gt))
        if "stransform" in modes:
            for Gt in fourier_Gts:
                for g in battery:
                    log(f"stransform cell: {Gt.label} x {g.label}")
                    cells.append(eng.stransform_terms(Gt, g))
    if cells:
        rep = verification_report(cells)
        report["identity"] = rep.to_dict()
        (rundir / "report.txt").write_text(rep.to_text() + "\n")
        _write_csv(rundir / "tables" / "cells.csv", rep.to_csv_rows())
        term_rows = [("label", "term", "value", "se", "error", "reference")]
        for ts in cells:
            term_rows.append((ts.label, "lhs", ts.lhs.value, ts.lhs.se,
                              ts.lhs.error, ts.lhs.reference))
            term_rows += [(ts.label, name, tv.value, tv.se, tv.error, tv.reference)
                          for name, tv in ts.terms.items()]
        _write_csv(rundir / "tables" / "terms.csv", term_rows)
        if not rep.passed:
            exit_code = EXIT_FAIL

    report["passed"] = exit_code == EXIT_PASS
    _write_json(rundir / "report.json", report)
    log(f"verdict: {'PASS' if exit_code == EXIT_PASS else 'FAIL'}")
    return exit_code


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.deterministic:
        # pin BLAS thread counts before numpy spins up its pools
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, "1")

    try:
        text = args.config.read_text() if args.config else None
        cfg = parse_config(text)
        for assignment in args.set:
            apply_override(cfg, assignment)
        if args.seed is not None:
            cfg["mc"]["seed"] = args.seed
        if args.workers is not None:
            cfg["run"]["workers"] = args.workers
        if args.deterministic:
            cfg["run"]["deterministic"] = True
        scn = Scenario(cfg)
        scn.validate()
    except (ConfigError, OSError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "print-config":
        print(dump_toml(cfg), end="")
        return EXIT_PASS

    workers = 1 if cfg["run"].get("deterministic") else int(cfg["run"]["workers"])
    rundir = _run_dir(args.out_dir, cfg)
    (rundir / "config.snapshot").write_text(dump_toml(cfg))
    log = _Log(rundir / "log.txt")
    log(f"command: {args.command}; run dir: {rundir}")

    try:
        if args.command == "simulate":
            code = _cmd_simulate(scn, rundir, log)
        elif args.command == "validate-kernel":
            code = _cmd_validate_kernel(scn, rundir, log, args.kernel)
        elif args.command == "charfn":
            code = _cmd_charfn(scn, rundir, log, args)
        elif args.command == "s-transform":
            code = _cmd_s_transform(scn, rundir, log)
        elif args.command == "verify-ito":
            code = _cmd_verify_ito(scn, rundir, log, workers)
        else:  # pragma: no cover - argparse guards this
            return EXIT_USAGE
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        from .quadrature import QuadratureError
        log(f"numerical failure: {exc}")
        log.flush()
        print(f"numerical failure: {exc}", file=sys.stderr)
        if isinstance(exc, (QuadratureError, FloatingPointError, ArithmeticError,
                            NotImplementedError, ValueError)):
            return EXIT_NUMERICAL
        raise
    log.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import equivalence_suite, gradient_suite, hora_init_suite, zero_adapter_suite
from .config import COMMANDS, RunConfig, load_config, parse_config
from .errors import HoraError, InvalidConfigError
from .experiments import param_audit_report, run_rate_sweep, sample_efficiency_report
from .results import base_summary, write_results, write_summary, write_table

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("hora")


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hora", description="Attention/mixture equivalence checks and rate sweeps.")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON config; omitted means all defaults")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: ./results)")
    p.add_argument("--seed", type=_u64, help="override master_seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _check_rows_out(out: Path, cfg: RunConfig, rows) -> int:
    write_table(out / "records.csv", ("check", "case", "value", "tol", "passed"),
                [(r.check, r.case, r.value, r.tol, r.passed) for r in rows])
    summary = base_summary(cfg.command, cfg.values)
    groups = {}
    for r in rows:
        g = groups.setdefault(r.check, {"cases": 0, "failed": 0, "max_value": 0.0})
        g["cases"] += 1
        g["failed"] += not r.passed
        g["max_value"] = max(g["max_value"], r.value)
    summary["checks"] = groups
    summary["passed"] = all(r.passed for r in rows)
    write_summary(out / "summary.json", summary)
    for name, g in groups.items():
        log.info("%-16s %3d cases  %d failed  max %.3g", name, g["cases"], g["failed"], g["max_value"])
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def run(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    v, seed = cfg.values, cfg.master_seed
    if cfg.command == "verify-equivalence":
        b = v["bounds"]
        rows = (equivalence_suite(v["cases"], seed, v["tol"], **b)
                + zero_adapter_suite(v["zero_adapter_cases"], seed, v["zero_adapter_tol"], **b)
                + hora_init_suite(v["hora_init_cases"], seed, **b)
                + gradient_suite(v["grad_points"], seed, v["grad_tol"]))
        return _check_rows_out(out, cfg, rows)
    if cfg.command == "grad-check":
        return _check_rows_out(out, cfg, gradient_suite(v["points"], seed, v["tol"], tuple(v["kinds"])))
    if cfg.command == "rate-sweep":
        progress = lambda r: log.debug("n=%d trial=%d loss=%.4g", r.n, r.trial, r.loss)
        main = run_rate_sweep(cfg.sweep, progress)
        other = None
        if v["compare"]:
            kind = "nonshared" if cfg.sweep.kind == "shared" else "shared"
            other = run_rate_sweep(cfg.sweep.replace(kind=kind), progress)
        write_results(main, out, v, cfg.command, other)
        for res in (main, other):
            if res is not None and res.loss_fit is not None:
                log.info("%s: loss slope %.3f (se %.3f)", res.config.kind, res.loss_fit.slope, res.loss_fit.stderr)
        return EXIT_OK
    if cfg.command == "sample-efficiency":
        rows, sweeps = sample_efficiency_report(cfg.sweep, v["fractions"], v["n_max"])
        write_table(out / "records.csv",
                    ("fraction", "n", "shared_loss", "nonshared_loss", "shared_l2", "nonshared_l2", "gap"),
                    [(r.fraction, r.n, r.shared_loss, r.nonshared_loss, r.shared_l2, r.nonshared_l2, r.gap)
                     for r in rows])
        summary = base_summary(cfg.command, v)
        summary["rows"] = [{"fraction": r.fraction, "n": r.n, "gap": r.gap} for r in rows]
        write_summary(out / "summary.json", summary)
        return EXIT_OK
    rows = param_audit_report(v["grid"])
    write_table(out / "records.csv", ("d", "H", "r", "d_e", "d_hid", "lora", "hora", "difference", "ratio"),
                [(r.d, r.H, r.r, r.d_e, r.d_hid, r.lora, r.hora, r.difference, r.ratio) for r in rows])
    summary = base_summary(cfg.command, v)
    summary["rows"] = len(rows)
    write_summary(out / "summary.json", summary)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.config is None:
            cfg = load_config(args.command, None, args.seed)
        else:
            cfg = parse_config(args.config, args.command, args.seed)
    except InvalidConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, args.out)
    except InvalidConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HoraError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

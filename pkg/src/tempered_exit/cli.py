"""Command-line front end.

Subcommands: exit, pdf, solve, verify, converge.  Exit codes: 0 success,
1 usage or configuration error, 2 runtime failure, 3 failed verification.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bounds import CHECK_IDS, FAIL, SuiteConfig, run_suite, summarize
from .dirichlet import BoundaryData, convergence, error_model, solve
from .errors import ConfigError, ParseError, TemperedExitError
from .paths import ExitRecords, run_ensemble
from .statistics import (
    default_position_range,
    default_tau_range,
    estimate_pdf,
    mean_with_ci,
    normality_check,
    tail_fit,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _header(cfg: dict) -> str:
    return "# config: " + json.dumps(cfgmod.provenance(cfg), sort_keys=True, separators=(",", ":"))


def write_csv(path: Path, cfg: dict, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_json(path: Path, cfg: dict, payload: dict) -> None:
    body = {"config": cfgmod.provenance(cfg), **payload}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def read_exits(path) -> ExitRecords:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    data = np.genfromtxt(lines, delimiter=",", names=True)
    data = np.atleast_1d(data)
    coords = sorted((c for c in data.dtype.names if c.startswith("x")), key=lambda c: int(c[1:]))
    return ExitRecords(
        np.asarray(data["tau"], dtype=float),
        np.column_stack([data[c] for c in coords]).astype(float),
        np.asarray(data["f_integral"], dtype=float),
        np.asarray(data["steps"], dtype=np.int64),
        np.asarray(data["censored"], dtype=bool),
        np.asarray(data["jump_exit"], dtype=bool),
    )


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["outputs"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _simulate(run: cfgmod.Run) -> ExitRecords:
    cfg = run.cfg
    return run_ensemble(run.params, run.domain, run.x0, cfg["n"], f=cfgmod.build_expr(cfg["f"]),
                        seed=cfg["seed"], workers=cfg["workers"])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_exit(run: cfgmod.Run, args) -> int:
    rec = _simulate(run)
    out = _out_dir(run.cfg)
    dim = run.params.dim
    cols = ["index", "tau"] + [f"x{k + 1}" for k in range(dim)] + ["f_integral", "steps", "censored", "jump_exit"]
    rows = (
        [i, rec.tau[i], *rec.exit_pos[i], rec.f_integral[i], rec.steps[i], rec.censored[i], rec.jump_exit[i]]
        for i in range(len(rec))
    )
    write_csv(out / "exits.csv", run.cfg, cols, rows)
    kept = rec.uncensored()
    summary = {"n": len(rec), "censored_fraction": rec.censored_fraction}
    if len(kept) >= 2:
        summary["mean_tau"] = mean_with_ci(kept.tau).as_dict()
        summary["mean_exit_radius"] = mean_with_ci(kept.exit_radius(run.domain.center)).as_dict()
    write_json(out / "summary.json", run.cfg, summary)
    print(f"wrote {out / 'exits.csv'} ({len(rec)} paths)")
    return EXIT_OK


def _histogram_payload(samples, lo, hi, bins, tail_from):
    hist = estimate_pdf(samples, lo, hi, bins)
    inside = samples[(samples > lo) & (samples <= hi)]
    if tail_from is None:
        tail_from = float(np.median(inside)) if inside.size else lo
    payload = {"bins": bins, "range": [lo, hi], "n": hist.n, "out_of_range": hist.out_of_range,
               "tail_from": tail_from}
    try:
        fit = tail_fit(hist, tail_from)
        payload["tail_fit"] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                               "bins_used": fit.bins_used}
    except TemperedExitError as exc:
        payload["tail_fit"] = {"error": str(exc)}
    return hist, payload


def cmd_pdf(run: cfgmod.Run, args) -> int:
    cfg = run.cfg
    rec = read_exits(args.input) if args.input else _simulate(run)
    kept = rec.uncensored()
    hcfg = cfg["histogram"]
    which = ("tau", "pos") if hcfg["which"] == "both" else (hcfg["which"],)
    out = _out_dir(cfg)
    for kind in which:
        if kind == "tau":
            samples = kept.tau
            lo, hi = hcfg["tau_range"] or default_tau_range(samples)
        else:
            samples = kept.exit_radius(run.domain.center)
            lo, hi = hcfg["pos_range"] or default_position_range(samples, run.domain.enclosing_radius)
        hist, payload = _histogram_payload(samples, float(lo), float(hi), hcfg["bins"], hcfg["tail_from"])
        rows = zip(hist.edges[:-1], hist.edges[1:], hist.density)
        write_csv(out / f"histogram_{kind}.csv", cfg, ["bin_lo", "bin_hi", "density"], rows)
        write_json(out / f"histogram_{kind}.json", cfg, payload)
        slope = payload["tail_fit"].get("slope")
        print(f"{kind}: tail slope {slope if slope is not None else 'n/a'}")
    return EXIT_OK


def _boundary(cfg) -> BoundaryData:
    return BoundaryData(cfgmod.build_expr(cfg["g"]), cfgmod.build_expr(cfg["f"]), cfg["growth_check"])


def cmd_solve(run: cfgmod.Run, args) -> int:
    cfg = run.cfg
    rep = solve(run.params, run.domain, run.x0, _boundary(cfg), cfg["n"], seed=cfg["seed"],
                workers=cfg["workers"])
    payload = {"report": rep.as_dict(), "error_model": {str(k): error_model(rep, k) for k in (rep.n, 4 * rep.n)}}
    out = _out_dir(cfg)
    write_json(out / "solve.json", cfg, payload)
    print(f"u_hat = {rep.u_hat!r} +/- {rep.ci!r} (n={rep.n})")
    return EXIT_OK


def cmd_verify(run: cfgmod.Run, args) -> int:
    cfg = run.cfg
    m, v = cfg["model"], cfg["verify"]
    ids = [s for s in (args.ids.split(",") if args.ids is not None else v["ids"]) if s]
    unknown = [s for s in ids if s not in CHECK_IDS]
    if unknown:
        raise ConfigError(f"unknown check ids {unknown}; known: {', '.join(CHECK_IDS)}")
    if cfg["domain"]["kind"] != "ball":
        raise ConfigError("verify runs on a ball domain")
    suite = SuiteConfig(
        alpha=float(m["alpha"]), lam=float(m["lambda"]),
        epsilon=float(m["epsilon"]) if m["epsilon"] is not None else 0.3,
        radius=float(cfg["domain"]["radius"]), n=cfg["n"], seed=cfg["seed"], workers=cfg["workers"],
        times=tuple(v["times"]), xi_list=tuple(v["xi"]), q_list=tuple(v["q"]), c2=v["c2"], beta=v["beta"],
    )
    checks = run_suite(suite, ids)
    out = _out_dir(cfg)
    write_json(out / "verdicts.json", cfg, {"checks": [c.as_dict() for c in checks]})
    print(summarize(checks))
    return EXIT_VERIFY if any(c.verdict == FAIL for c in checks) else EXIT_OK


def cmd_converge(run: cfgmod.Run, args) -> int:
    cfg = run.cfg
    c = cfg["converge"]
    truth = c["truth"]
    if truth is None:
        raise ConfigError("converge needs a known truth (converge.truth)")
    table = convergence(run.params, run.domain, run.x0, _boundary(cfg), c["n_list"], c["repeats"], truth,
                        seed=cfg["seed"], workers=cfg["workers"])
    out = _out_dir(cfg)
    write_csv(out / "convergence.csv", cfg, ["n", "mean_abs_error", "repeats"],
              ((n, e, c["repeats"]) for n, e in zip(table.n_list, table.mean_abs_error)))
    payload = {"slope": table.slope, "intercept": table.intercept}
    if c["dump_errors"]:
        write_csv(out / "errors.csv", cfg, ["n", "repeat", "error"],
                  ((n, j, e) for n, errs in zip(table.n_list, table.errors) for j, e in enumerate(errs)))
        payload["normality"] = {}
        for n, errs in zip(table.n_list, table.errors):
            if errs.size >= 3:
                chk = normality_check(errs)
                payload["normality"][str(n)] = {"ks_statistic": chk.statistic, "pvalue": chk.pvalue,
                                                "mean": chk.mean, "std": chk.std, "passed": chk.passed}
    write_json(out / "convergence.json", cfg, payload)
    print(f"log-log slope {table.slope!r}")
    return EXIT_OK


COMMANDS = {"exit": cmd_exit, "pdf": cmd_pdf, "solve": cmd_solve, "verify": cmd_verify, "converge": cmd_converge}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--alpha", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--mode", choices=["timestep", "cp_event"])
    common.add_argument("--epsilon", type=float)

    parser = _Parser(prog="tempered-exit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("exit", parents=[common], help="simulate exits, write exits.csv and summary.json")
    p = sub.add_parser("pdf", parents=[common], help="histogram of exit times or positions")
    p.add_argument("--which", choices=["tau", "pos", "both"])
    p.add_argument("--bins", type=int)
    p.add_argument("--tail-from", type=float)
    p.add_argument("--input", help="exits.csv from a previous run instead of simulating")
    sub.add_parser("solve", parents=[common], help="Feynman-Kac estimate of the Dirichlet solution")
    p = sub.add_parser("verify", parents=[common], help="run bound and identity checks")
    p.add_argument("--ids", help="comma-separated check ids; empty runs all")
    p = sub.add_parser("converge", parents=[common], help="error versus sample size study")
    p.add_argument("--n-list", help="comma-separated sample sizes")
    p.add_argument("--repeats", type=int)
    p.add_argument("--dump-errors", action="store_true", default=None)
    return parser


def _overrides(args) -> dict:
    o: dict = {}
    model = {k: v for k, v in (("alpha", args.alpha), ("lambda", args.lam), ("dt", args.dt),
                                ("mode", args.mode), ("epsilon", args.epsilon)) if v is not None}
    if model:
        o["model"] = model
    for key in ("seed", "n", "workers"):
        if getattr(args, key) is not None:
            o[key] = getattr(args, key)
    if args.out_dir is not None:
        o["outputs"] = {"out_dir": args.out_dir}
    hist = {k: getattr(args, a) for k, a in (("which", "which"), ("bins", "bins"), ("tail_from", "tail_from"))
            if getattr(args, a, None) is not None}
    if hist:
        o["histogram"] = hist
    conv = {}
    if getattr(args, "n_list", None):
        try:
            conv["n_list"] = [int(s) for s in args.n_list.split(",")]
        except ValueError:
            raise ConfigError(f"bad --n-list {args.n_list!r}") from None
    if getattr(args, "repeats", None) is not None:
        conv["repeats"] = args.repeats
    if getattr(args, "dump_errors", None):
        conv["dump_errors"] = True
    if conv:
        o["converge"] = conv
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = cfgmod.load_file(args.config) if args.config else None
        cfg = cfgmod.resolve(args.preset, file_cfg, _overrides(args))
        run = cfgmod.Run.from_config(cfg)
    except (ConfigError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](run, args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TemperedExitError, ArithmeticError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

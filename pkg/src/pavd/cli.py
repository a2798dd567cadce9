"""Command-line entry points.

Subcommands: ``rates inspect``, ``malthus solve``, ``simulate
discrete|cmj``, ``experiment run``, ``verify``.  Configs and models are
JSON; outputs are CSV and JSON.  Exit codes: 0 ok, 2 config error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiment as xp
from . import malthus, sim_discrete, verify
from .rates import DerivedSequences, assumption_report, model_from_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _load_model(path: str):
    try:
        with open(path) as fh:
            return model_from_json(json.load(fh))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise SystemExit2(f"bad model file {path}: {exc}")


class SystemExit2(Exception):
    """Config-level failure mapped to exit code 2."""


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_rates_inspect(args) -> int:
    model = _load_model(args.model)
    seqs = DerivedSequences(model)
    report = assumption_report(model)
    ks = args.k if args.k else [0, 1, 2, 5, 10, 100]
    values = {
        str(k): {
            "b": model.rate("birth", int(k)),
            "d": model.rate("death", int(k)),
            "phi1": seqs.phi1(float(k)),
            "phi2": seqs.phi2(float(k)),
            "rho1": seqs.rho1(float(k)),
            "rho2": seqs.rho2(float(k)),
        }
        for k in ks
    }
    out = {"assumptions": report.as_dict(), "derived": values}
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_malthus_solve(args) -> int:
    model = _load_model(args.model)
    seqs = DerivedSequences(model)
    try:
        sol = malthus.solve_malthusian(seqs, tol=args.tol)
    except (malthus.NoBracket, malthus.Subcritical) as exc:
        raise SystemExit2(f"no Malthusian parameter: {exc}")
    out = {
        "lambda_star": sol.lambda_star,
        "residual": sol.residual,
        "lambda_underline": sol.lambda_underline,
    }
    _emit(json.dumps(out, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    if args.engine == "discrete":
        n = args.steps
        stride = args.stride or max(1, n // 100)
        grid = sorted(set(list(range(stride, n + 1, stride)) + [n]))
        rng = xp.replicate_rng(args.seed, 0)
        res = sim_discrete.run_chain_fast(model, n, grid, rng=rng)
        lines = [",".join(xp.RAW_HEADER)]
        for j in range(len(res.n)):
            row = (0, int(res.n[j]), int(res.survived[j]), int(res.alive_count[j]),
                   int(res.o_n[j]), int(res.i_n[j]), int(res.max_deg_alive[j]),
                   int(res.max_deg_all[j]))
            lines.append(",".join(str(x) for x in row))
        _emit("\n".join(lines) + "\n", args.out)
        return EXIT_OK
    n = args.events
    stride = args.stride or max(1, n // 100)
    grid = tuple(sorted(set(list(range(stride, n + 1, stride)) + [n])))
    seqs = DerivedSequences(model)
    lam = None
    try:
        lam = malthus.solve_malthusian(seqs).lambda_star
    except (malthus.NoBracket, malthus.Subcritical):
        pass
    _, rows = xp._run_cmj_replicate((model, seqs, grid, args.seed, 0, lam))
    lines = [",".join(xp.RAW_HEADER_CMJ)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_experiment_run(args) -> int:
    try:
        cfg = xp.parse_config(args.config)
    except xp.ParseError as exc:
        raise SystemExit2(str(exc))
    summary, raw = xp.run_experiment(cfg)
    out_dir = args.out or cfg.output_dir or "."
    header = xp.RAW_HEADER if cfg.mode == "discrete" else xp.RAW_HEADER_CMJ
    paths = xp.emit_results(summary, raw, out_dir, header=header)
    sys.stdout.write(json.dumps({"written": paths}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify.run_suite(args.suite, seed=args.seed)
    text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    _emit(text, args.out)
    return EXIT_OK if report["pass"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pavd")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("rates", help="inspect rate models")
    prs = pr.add_subparsers(dest="sub", required=True)
    pi = prs.add_parser("inspect", help="assumption report and derived values")
    pi.add_argument("--model", required=True)
    pi.add_argument("--k", type=int, nargs="*", default=None)
    pi.add_argument("--out")
    pi.set_defaults(fn=cmd_rates_inspect)

    pm = sub.add_parser("malthus", help="transform analytics")
    pms = pm.add_subparsers(dest="sub", required=True)
    ps = pms.add_parser("solve", help="solve for the Malthusian parameter")
    ps.add_argument("--model", required=True)
    ps.add_argument("--tol", type=float, default=1e-10)
    ps.add_argument("--out")
    ps.set_defaults(fn=cmd_malthus_solve)

    ps2 = sub.add_parser("simulate", help="run one simulation")
    pss = ps2.add_subparsers(dest="engine", required=True)
    pd = pss.add_parser("discrete", help="discrete chain")
    pd.add_argument("--model", required=True)
    pd.add_argument("--steps", type=int, required=True)
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--stride", type=int)
    pd.add_argument("--out")
    pd.set_defaults(fn=cmd_simulate, engine="discrete")
    pc = pss.add_parser("cmj", help="continuous-time embedding")
    pc.add_argument("--model", required=True)
    pc.add_argument("--events", type=int, required=True)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--stride", type=int)
    pc.add_argument("--out")
    pc.set_defaults(fn=cmd_simulate, engine="cmj")

    pe = sub.add_parser("experiment", help="replicated experiments")
    pes = pe.add_subparsers(dest="sub", required=True)
    per = pes.add_parser("run")
    per.add_argument("--config", required=True)
    per.add_argument("--out")
    per.set_defaults(fn=cmd_experiment_run)

    pv = sub.add_parser("verify", help="statistical verification suites")
    pv.add_argument("--suite", required=True, choices=sorted(verify.SUITES))
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--out")
    pv.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit2 as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except xp.ParseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

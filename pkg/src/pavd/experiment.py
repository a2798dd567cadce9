"""Experiment orchestration: replicated runs, summaries, result emission.

A config names a rate model, a mode (discrete chain or continuous-time
embedding), a grid of step counts, and replication/seed settings.
Replicates run on independent generator streams spawned from
(base_seed, replicate_index), so aggregation is order independent and a
fixed seed reproduces byte-identical outputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import malthus, sim_cmj, sim_discrete
from .rates import (
    HOLDS,
    DerivedSequences,
    RateModel,
    assumption_report,
    model_from_json,
    model_to_json,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentSummary",
    "ParseError",
    "parse_config",
    "run_experiment",
    "emit_results",
    "replicate_rng",
    "RAW_HEADER",
    "RAW_HEADER_CMJ",
]

RAW_HEADER = [
    "replicate",
    "n",
    "survived",
    "alive_count",
    "O_n",
    "I_n",
    "max_deg_alive",
    "max_deg_all",
]
RAW_HEADER_CMJ = RAW_HEADER + ["t", "tau_n", "O_t_cont", "I_t_cont", "W_hat"]


class ParseError(ValueError):
    """Config rejected, with a field diagnostic."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: RateModel
    mode: str = "discrete"
    n_grid: tuple = ()
    replicates: int = 100
    base_seed: int = 0
    condition_on_survival: bool = True
    observer_stride: Optional[int] = None
    output_dir: Optional[str] = None

    def stride(self) -> int:
        if self.observer_stride is not None:
            return self.observer_stride
        return max(1, max(self.n_grid) // 100)


_CONFIG_KEYS = {
    "model",
    "mode",
    "n_grid",
    "t_grid",
    "replicates",
    "base_seed",
    "condition_on_survival",
    "observer_stride",
    "output_dir",
}


def parse_config(path_or_obj) -> ExperimentConfig:
    """Load and validate a config; unknown keys are rejected."""
    if isinstance(path_or_obj, dict):
        obj = path_or_obj
    else:
        try:
            with open(path_or_obj) as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    extra = set(obj) - _CONFIG_KEYS
    if extra:
        raise ParseError(f"unknown config keys: {sorted(extra)}")
    if "model" not in obj:
        raise ParseError("config requires a 'model'")
    try:
        model = model_from_json(obj["model"])
    except ValueError as exc:
        raise ParseError(f"field 'model': {exc}") from exc
    mode = obj.get("mode", "discrete")
    if mode not in ("discrete", "cmj"):
        raise ParseError(f"field 'mode': expected 'discrete' or 'cmj', got {mode!r}")
    grid = obj.get("n_grid", obj.get("t_grid"))
    if not grid:
        raise ParseError("config requires a non-empty 'n_grid'")
    grid = tuple(int(x) for x in grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParseError("field 'n_grid': must be strictly increasing")
    if grid[0] < 1:
        raise ParseError("field 'n_grid': entries must be >= 1")
    reps = int(obj.get("replicates", 100))
    if reps < 1:
        raise ParseError("field 'replicates': must be >= 1")
    stride = obj.get("observer_stride")
    if stride is not None:
        stride = int(stride)
        if stride < 1:
            raise ParseError("field 'observer_stride': must be >= 1")
    return ExperimentConfig(
        model=model,
        mode=mode,
        n_grid=grid,
        replicates=reps,
        base_seed=int(obj.get("base_seed", 0)),
        condition_on_survival=bool(obj.get("condition_on_survival", True)),
        observer_stride=stride,
        output_dir=obj.get("output_dir"),
    )


def replicate_rng(base_seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate, derived from (base_seed, index)."""
    return np.random.default_rng(np.random.SeedSequence((base_seed, replicate)))


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------


def _run_discrete_replicate(args):
    model, seqs, n_grid, base_seed, rep = args
    rng = replicate_rng(base_seed, rep)
    res = sim_discrete.run_chain_fast(model, max(n_grid), n_grid, rng=rng, seqs=seqs)
    rows = []
    for j in range(len(res.n)):
        rows.append(
            (
                rep,
                int(res.n[j]),
                int(res.survived[j]),
                int(res.alive_count[j]),
                int(res.o_n[j]),
                int(res.i_n[j]),
                int(res.max_deg_alive[j]),
                int(res.max_deg_all[j]),
            )
        )
    return rep, rows


def _run_cmj_replicate(args):
    model, seqs, n_grid, base_seed, rep, lam_star = args
    rng = replicate_rng(base_seed, rep)
    bp = sim_cmj.BPState(model, seqs=seqs)
    rows = []
    for n in n_grid:
        bp.run_until_events(n, rng)
        if bp.alive_count == 0:
            rows.append((rep, n, 0, 0, -1, -1, -1, _max_children(bp), bp.t, bp.taus[-1] if bp.taus else float("nan"), float("nan"), float("nan"), float("nan")))
            continue
        obs = bp.continuous_observables(lam_star)
        # labels are creation order + 1
        o_lab = min(v for v in range(len(bp.alive)) if bp.alive[v]) + 1
        maxdeg = obs.max_children
        i_lab = min(v for v in range(len(bp.alive)) if bp.alive[v] and bp.degree[v] == maxdeg) + 1
        rows.append(
            (
                rep,
                n,
                1,
                bp.alive_count,
                o_lab,
                i_lab,
                maxdeg,
                _max_children(bp),
                bp.t,
                bp.taus[n - 1],
                obs.o_t,
                obs.i_t,
                obs.w_hat if obs.w_hat is not None else float("nan"),
            )
        )
    return rep, rows


def _max_children(bp) -> int:
    return max(bp.degree)


def _worker_count(replicates: int) -> int:
    env = os.environ.get("PAVD_THREADS")
    if env:
        return max(1, min(int(env), replicates))
    return max(1, min(os.cpu_count() or 1, replicates))


def run_experiment(cfg: ExperimentConfig, solve_malthus: bool = True) -> tuple:
    """Run all replicates; returns (summary dict, raw rows).

    Raw rows follow RAW_HEADER (discrete) or RAW_HEADER_CMJ.  The summary
    aggregates per grid point over surviving replicates (when
    conditioning) and attaches the predicted constants when the
    Malthusian parameter is solvable.
    """
    model = cfg.model
    report = assumption_report(model)
    if report.non_explosion != HOLDS:
        raise ParseError("model fails the non-explosion requirement")
    seqs = DerivedSequences(model)
    sol = None
    predicted: dict = {}
    if solve_malthus:
        try:
            sol = malthus.solve_malthusian(seqs, tol=1e-10)
            pc = malthus.predicted_constants(sol, seqs, report, float(max(cfg.n_grid)))
            predicted = pc.as_dict()
            predicted["lambda_star"] = sol.lambda_star
        except (malthus.NoBracket, malthus.Subcritical, malthus.MissingR) as exc:
            predicted = {"error": str(exc)}

    workers = _worker_count(cfg.replicates)
    if cfg.mode == "discrete":
        runner = _run_discrete_replicate
        tasks = [(model, seqs, cfg.n_grid, cfg.base_seed, r) for r in range(cfg.replicates)]
    else:
        lam = sol.lambda_star if sol else None
        runner = _run_cmj_replicate
        tasks = [(model, seqs, cfg.n_grid, cfg.base_seed, r, lam) for r in range(cfg.replicates)]

    results: dict = {}
    if workers == 1:
        for t in tasks:
            rep, rows = runner(t)
            results[rep] = rows
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for rep, rows in pool.map(runner, tasks):
                results[rep] = rows
    raw = [row for rep in sorted(results) for row in results[rep]]

    summary = _summarise(cfg, raw, predicted, report)
    return summary, raw


def _summarise(cfg: ExperimentConfig, raw, predicted, report) -> dict:
    per_n = []
    medians = []
    for j, n in enumerate(cfg.n_grid):
        rows = [r for r in raw if r[1] == n]
        surv = [r for r in rows if r[2] == 1]
        frac = len(surv) / len(rows) if rows else 0.0
        entry = {
            "n": n,
            "replicates": len(rows),
            "survivors": len(surv),
            "survival_fraction": frac,
        }
        use = surv if cfg.condition_on_survival else rows
        if use and all(r[2] == 1 for r in use):
            ln = math.log(n)
            logO = np.array([math.log(r[4]) for r in use]) / ln
            logI = np.array([math.log(r[5]) for r in use]) / ln
            md = np.array([r[6] for r in use], dtype=float) / ln
            ratio = np.array([r[5] / r[4] for r in use])
            entry.update(
                {
                    "mean_logO_over_logn": float(np.mean(logO)),
                    "sd_logO_over_logn": float(np.std(logO, ddof=1)) if len(use) > 1 else 0.0,
                    "mean_logI_over_logn": float(np.mean(logI)),
                    "sd_logI_over_logn": float(np.std(logI, ddof=1)) if len(use) > 1 else 0.0,
                    "mean_maxdeg_over_logn": float(np.mean(md)),
                    "sd_maxdeg_over_logn": float(np.std(md, ddof=1)) if len(use) > 1 else 0.0,
                    "median_I_over_O": float(np.median(ratio)),
                }
            )
            medians.append(float(np.median(ratio)))
        else:
            entry.update({"mean_logO_over_logn": None, "median_I_over_O": None})
            medians.append(None)
        per_n.append(entry)

    trend = {}
    good = [(j, m) for j, m in enumerate(medians) if m is not None]
    if len(good) >= 2:
        xs = [j for j, _ in good]
        ys = [m for _, m in good]
        if len(set(ys)) > 1:
            tau, pval = sps.kendalltau(xs, ys)
            trend = {"kendall_tau": float(tau), "p_value": float(pval)}
        else:
            trend = {"kendall_tau": 0.0, "p_value": 1.0}
        trend["medians_increasing"] = all(b > a for a, b in zip(ys, ys[1:]))

    return {
        "config": {
            "model": model_to_json(cfg.model),
            "mode": cfg.mode,
            "n_grid": list(cfg.n_grid),
            "replicates": cfg.replicates,
            "base_seed": cfg.base_seed,
            "condition_on_survival": cfg.condition_on_survival,
        },
        "assumptions": report.as_dict(),
        "predicted": predicted,
        "per_n": per_n,
        "persistence_trend": trend,
    }


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_results(
    summary: dict,
    raw,
    out_dir: str,
    formats=("csv", "json"),
    header=None,
) -> dict:
    """Write the summary, the raw rows, and plot-data files; returns paths.

    The per-n CSV is round-tripped through the csv reader as a schema
    self-check.  All numbers are emitted with full repr so a fixed seed
    reproduces byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if "json" in formats:
        p = os.path.join(out_dir, "summary.json")
        with open(p, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        paths["summary"] = p
    if "csv" in formats:
        p = os.path.join(out_dir, "raw.csv")
        hdr = header if header is not None else RAW_HEADER
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(hdr)
            for row in raw:
                wr.writerow([_fmt(x) for x in row])
        paths["raw"] = p
        p2 = os.path.join(out_dir, "per_n.csv")
        cols = sorted({k for e in summary["per_n"] for k in e})
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(cols)
        for e in summary["per_n"]:
            wr.writerow([_fmt(e.get(c, "")) for c in cols])
        text = buf.getvalue()
        # schema self-check: the CSV must parse back to the same table
        parsed = list(csv.reader(io.StringIO(text)))
        if parsed[0] != cols or len(parsed) != len(summary["per_n"]) + 1:
            raise OSError("per-n CSV failed its round-trip self-check")
        with open(p2, "w", newline="") as fh:
            fh.write(text)
        paths["per_n"] = p2
        # plot data: x, y, err columns per tracked observable
        for key, err in (
            ("mean_logO_over_logn", "sd_logO_over_logn"),
            ("mean_logI_over_logn", "sd_logI_over_logn"),
            ("mean_maxdeg_over_logn", "sd_maxdeg_over_logn"),
        ):
            rows = [
                (e["n"], e.get(key), e.get(err, 0.0))
                for e in summary["per_n"]
                if e.get(key) is not None
            ]
            if not rows:
                continue
            p3 = os.path.join(out_dir, f"plot_{key}.csv")
            with open(p3, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["x", "y", "err"])
                for r in rows:
                    wr.writerow([_fmt(v) for v in r])
            paths[key] = p3
    return paths

"""Replica orchestration, aggregation and report files for every experiment kind.

Each kind supplies a unit function producing CSV rows and a summarizer.  A
unit is one replica, except for the vectorized renewal kinds (``dl`` and
``gap``) whose unit is a fixed-size block of replicas; a block always draws
all of its samples and then drops the ones past ``replicas``, so raising
the replica count never changes earlier rows.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Sequence

import numpy as np

from .. import streams
from ..engine import Rates, init, run, wilson_interval
from ..errors import ConfigInvalid, IoFailure
from ..finitegraph import extinction_recursion, recursion_streams
from ..percolation import choose_s_sequence, coupling_check, iterate, s_sequence_until
from ..renewal import ParetoTail, dl_cdf, dl_ks_distance, excess_ratios, first_point_after, law_from_config
from ..topology import build
from .config import ExperimentConfig, set_path, validate

BLOCK = 4096


@dataclass
class Report:
    config: ExperimentConfig
    header: list[str]
    rows: list[list]
    summary: dict[str, Any]
    runtime: float
    paths: dict[str, str]


def rates_from(d: dict) -> Rates:
    kw = {k: float(v) for k, v in d.items() if k != "recovery_law"}
    rec = d.get("recovery_law")
    return Rates(**kw, recovery_law=law_from_config(rec) if rec else None)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _stat(name: str, value, lo=None, hi=None) -> dict:
    return {"name": name, "value": value, "lo": lo, "hi": hi}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _initial(top, p, infected_default: str):
    infected = p.get("initial_infected", infected_default)
    inf = [top.origin if top.origin is not None else 0] if infected == "origin" else range(top.n)
    active = None if p.get("initial_active", "all") == "all" else []
    return init(top, inf, active)


# -- units -----------------------------------------------------------------

def _growth_unit(p: dict, seed: int, i: int) -> list[list]:
    s = streams.replica_seed(seed, i)
    rates, law = rates_from(p["rates"]), law_from_config(p["wake_law"])
    spec = dict(p["topology"])
    cps = [float(c) for c in p["checkpoints"]]
    while True:
        top = build(spec)
        res = run(top, rates, law, _initial(top, p, "origin"), float(p["horizon"]), cps, seed=s,
                  stop_at_boundary=True)
        if not res.boundary_hit or 2 * spec["radius"] > p["max_radius"]:
            break
        # clocks are keyed by coordinates, so the larger box replays the same realization
        spec["radius"] *= 2
    seen = {c.time: c for c in res.checkpoints}
    rows = []
    for t in cps:
        c = seen.get(t)
        if c is None:
            rows.append([i, t, None, None, res.boundary_hit])
        else:
            rows.append([i, t, c.infected_count, c.range or 0, res.boundary_hit])
    return rows


def _survival_unit(p: dict, seed: int, i: int) -> list[list]:
    top = build(p["topology"])
    res = run(top, rates_from(p["rates"]), law_from_config(p["wake_law"]), _initial(top, p, "all"),
              float(max(p["times"])), seed=streams.replica_seed(seed, i))
    return [[i, res.extinction_time, res.censored]]


def _coupling_unit(p: dict, seed: int, i: int) -> list[list]:
    s = streams.replica_seed(seed, i)
    top = build(p["topology"])
    rates, law = rates_from(p["rates"]), law_from_config(p["wake_law"])
    consts = choose_s_sequence(law.alpha, rates.sigma, top.params["d"], float(p["p_c"]))
    times = s_sequence_until(consts["t0"], consts["c"], float(p["horizon"]))
    config = _initial(top, p, "origin")
    res = run(top, rates, law, config, times[len(times) - 1], seed=s, record_history=True)
    rep = coupling_check(top, rates, law, config, times, seed=s, result=res)
    return [[i, rep.ok, rep.steps_checked, rep.first_violation, rep.saturated_at]]


def _block_rng(seed: int, b: int) -> np.random.Generator:
    return streams.generator(streams.derive(seed, streams.REPLICA, b))


def _dl_unit(p: dict, seed: int, b: int, replicas: int) -> list[list]:
    law = ParetoTail(float(p["alpha"]), float(p["xm"]))
    ratios = excess_ratios(law, float(p["t"]), BLOCK, _block_rng(seed, b))
    lo = b * BLOCK
    return [[lo + j, float(r)] for j, r in enumerate(ratios[:replicas - lo])]


def _gap_unit(p: dict, seed: int, b: int, replicas: int) -> list[list]:
    law = ParetoTail(float(p["alpha"]), float(p["xm"]))
    rng = _block_rng(seed, b)
    lo = b * BLOCK
    m = min(BLOCK, replicas - lo)
    eps = float(p["eps"])
    hits = [first_point_after(law, float(t), BLOCK, rng, inclusive=True) <= t + t ** eps for t in p["times"]]
    return [[lo + j, float(t), bool(h[j])] for j in range(m) for t, h in zip(p["times"], hits)]


def _percolation_unit(p: dict, seed: int, i: int) -> list[list]:
    d = int(p["d"])
    res = iterate(np.zeros((1, d), dtype=np.int64), float(p["p"]), int(p["n"]),
                  streams.generator(streams.replica_seed(seed, i)), cap=int(p["cap"]))
    return [[i, k, r, c] for k, (r, c) in enumerate(zip(res.radii, res.cells), 1)]


def _recursion_unit(p: dict, seed: int, i: int) -> list[list]:
    law = ParetoTail(float(p["alpha"]), float(p["xm"]))
    wake = recursion_streams(law, int(p["V_size"]), streams.replica_seed(seed, i), float(p["max_time"]))
    st = extinction_recursion(wake, float(p["t_hat"]), n_max=int(p["steps"]))
    rows = [[i, s.n, s.S, s.X, s.argmax, False] for s in st.steps]
    if st.truncated:
        rows.append([i, None, None, None, None, True])
    return rows


# -- summaries ---------------------------------------------------------------

def _growth_summary(cfg, rows):
    alpha = cfg["wake_law"].get("alpha")
    stats, per_t = [], {}
    for r in rows:
        if r[2] is not None:
            per_t.setdefault(r[1], []).append(r)
    for t in cfg["checkpoints"]:
        rs = per_t.get(float(t), [])
        if not rs:
            continue
        stats.append(_stat(f"mean_infected@{t}", _mean([r[2] for r in rs])))
        stats.append(_stat(f"median_r_t@{t}", float(statistics.median(r[3] for r in rs))))
        if alpha:
            stats.append(_stat(f"median_r_t_over_t^alpha@{t}",
                               float(statistics.median(r[3] / float(t) ** alpha for r in rs))))
    breaches = len({r[0] for r in rows if r[4]})
    return stats, {"cap_breaches": breaches}


def _survival_summary(cfg, rows):
    n = len(rows)
    stats = []
    for T in cfg["times"]:
        alive = [0.0 if (r[1] is not None and r[1] <= T) else 1.0 for r in rows]
        lo, hi = wilson_interval(int(sum(alive)), n)
        stats.append(_stat(f"p_hat@{T}", _mean(alive), lo, hi))
    return stats, {}


def _coupling_summary(cfg, rows):
    ok = [1.0 if r[1] else 0.0 for r in rows]
    return [_stat("fraction_ok", _mean(ok))], {"all_ok": all(r[1] for r in rows)}


def _dl_summary(cfg, rows):
    ratios = [r[1] for r in rows]
    alpha = float(cfg["alpha"])
    dist = dl_ks_distance(alpha, ratios)
    stats = [_stat("sup_distance", dist), _stat("median_ratio", float(np.median(ratios)))]
    return stats, {"dl_cdf_at_1": dl_cdf(alpha, 1.0)}


def _gap_summary(cfg, rows):
    eps = float(cfg["eps"])
    stats, checks = [], {}
    for t in cfg["times"]:
        hits = [1.0 if r[2] else 0.0 for r in rows if r[1] == float(t)]
        lo, hi = wilson_interval(int(sum(hits)), len(hits))
        est = _mean(hits)
        stats.append(_stat(f"gap_prob@{t}", est, lo, hi))
        checks[f"within_bound@{t}"] = est <= float(t) ** -eps
    return stats, checks


def _percolation_summary(cfg, rows):
    n = int(cfg["n"])
    finals = [r[2] for r in rows if r[1] == n]
    lower = all(r[2] >= r[1] for r in rows)
    upper = all(r[2] <= r[1] * math.log(r[1]) ** 1.5 for r in rows if r[1] >= 20)
    return ([_stat(f"mean_R@{n}", _mean(finals))],
            {"R_n_at_least_n": lower, "R_n_below_n_log_n_1.5": upper})


def _recursion_summary(cfg, rows):
    thr = float(cfg["threshold"])
    by_rep: dict[int, list] = {}
    truncated = 0
    for r in rows:
        if r[5]:
            truncated += 1
        else:
            by_rep.setdefault(r[0], []).append(r[3])
    # a truncated replica counts only through the steps it completed
    hit = [1.0 if xs and min(xs) < thr else 0.0 for xs in (by_rep.get(i, []) for i in range(cfg.replicas))]
    lo, hi = wilson_interval(int(sum(hit)), len(hit))
    return [_stat(f"fraction_min_X_below_{cfg['threshold']}", _mean(hit), lo, hi)], {"truncated": truncated}


_Kind = tuple[list[str], Callable, Callable, bool]
KIND_TABLE: dict[str, _Kind] = {
    "growth": (["replica", "t", "infected", "r_t", "boundary_hit"], _growth_unit, _growth_summary, False),
    "survival": (["replica", "extinction_time", "censored"], _survival_unit, _survival_summary, False),
    "coupling": (["replica", "ok", "steps_checked", "first_violation", "saturated_at"],
                 _coupling_unit, _coupling_summary, False),
    "dl": (["replica", "ratio"], _dl_unit, _dl_summary, True),
    "gap": (["replica", "t", "hit"], _gap_unit, _gap_summary, True),
    "percolation": (["replica", "n", "R_n", "cells"], _percolation_unit, _percolation_summary, False),
    "recursion": (["replica", "n", "S_n", "X_n", "x_n", "truncated"], _recursion_unit, _recursion_summary, False),
}


def _check_kind(cfg: ExperimentConfig):
    if cfg.kind in ("growth", "coupling"):
        if cfg["topology"]["kind"] != "lattice":
            raise ConfigInvalid("topology.kind", f"kind {cfg.kind} needs a lattice topology")
    if cfg.kind == "coupling":
        if cfg["wake_law"]["kind"] != "pareto":
            raise ConfigInvalid("wake_law.kind", "the coupling check needs a pareto wake law")
        if cfg["rates"].get("lambda_dd", 0) > 0:
            raise ConfigInvalid("rates.lambda_dd", "the coupling check needs lambda_dd = 0")
    if cfg.kind == "growth" and cfg["max_radius"] < cfg["topology"].get("radius", 0):
        raise ConfigInvalid("max_radius", "max_radius is below the starting radius")


def collect(cfg: ExperimentConfig, workers: int | None = None) -> list[list]:
    """All CSV rows, merged in unit order whatever the number of workers."""
    _check_kind(cfg)
    _, unit, _, blocked = KIND_TABLE[cfg.kind]
    if blocked:
        fn = partial(unit, cfg.params, cfg.seed, replicas=cfg.replicas)
        units = range(math.ceil(cfg.replicas / BLOCK))
    else:
        fn = partial(unit, cfg.params, cfg.seed)
        units = range(cfg.replicas)
    workers = workers or cfg.workers
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, units))
    else:
        parts = [fn(u) for u in units]
    return list(itertools.chain.from_iterable(parts))


def summarize(cfg: ExperimentConfig, rows: list[list]) -> dict[str, Any]:
    stats, checks = KIND_TABLE[cfg.kind][2](cfg, rows)
    return {"config": cfg.resolved(), "kind": cfg.kind, "seed": cfg.seed, "replicas": cfg.replicas,
            "statistics": stats, "checks": checks}


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out_dir: str, files: dict[str, str]) -> dict[str, str]:
    paths = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="") as fh:
                fh.write(text)
            paths[name] = path
    except OSError as exc:
        raise IoFailure(f"cannot write results to {out_dir}: {exc}") from exc
    return paths


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None, workers: int | None = None,
                   write: bool = True) -> Report:
    """Run all replicas of ``cfg`` and write ``<kind>.csv``, ``<kind>_summary.json``
    and ``<kind>_timing.json`` into ``out_dir`` (default ``cfg.out``).

    The CSV and summary depend only on the config; wall-clock time goes to
    the timing file so that reruns stay byte-identical.
    """
    t0 = time.perf_counter()
    rows = collect(cfg, workers)
    summary = summarize(cfg, rows)
    runtime = time.perf_counter() - t0
    header = KIND_TABLE[cfg.kind][0]
    paths = {}
    if write:
        paths = _write(out_dir or cfg.out, {
            f"{cfg.kind}.csv": csv_text(header, rows),
            f"{cfg.kind}_summary.json": json_text(summary),
            f"{cfg.kind}_timing.json": json_text({"runtime_s": runtime, "workers": workers or cfg.workers}),
        })
    return Report(cfg, header, rows, summary, runtime, paths)


def sweep(base: dict[str, Any], grid: dict[str, list], out_dir: str | None = None,
          workers: int | None = None) -> tuple[list[str], list[list]]:
    """Run ``base`` at every point of the product ``grid`` (dotted path -> values).

    Writes ``sweep.csv`` with one row per (grid point, statistic) and
    ``sweep_summary.json``.  Grid point ``k`` uses seed ``root_seed XOR k``.
    """
    if not isinstance(grid, dict) or not grid:
        raise ConfigInvalid("grid", "the parameter grid is empty")
    keys = list(grid)
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigInvalid(f"grid.{k}", "grid values must be a nonempty array")
    root = validate(base, "base config")
    header = ["point", *keys, "statistic", "value", "lo", "hi"]
    rows, points = [], []
    t0 = time.perf_counter()
    for idx, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        raw = root.to_dict()
        for k, v in zip(keys, values):
            raw = set_path(raw, k, v)
        raw["seed"] = root.seed ^ idx
        cfg = validate(raw, f"grid point {idx}")
        rep = run_experiment(cfg, workers=workers, write=False)
        points.append({"point": idx, "values": dict(zip(keys, values)), "seed": cfg.seed,
                       "statistics": rep.summary["statistics"], "checks": rep.summary["checks"]})
        for s in rep.summary["statistics"]:
            cells = [json.dumps(v) if isinstance(v, (list, dict)) else v for v in values]
            rows.append([idx, *cells, s["name"], s["value"], s["lo"], s["hi"]])
    runtime = time.perf_counter() - t0
    _write(out_dir or root.out, {
        "sweep.csv": csv_text(header, rows),
        "sweep_summary.json": json_text({"base": root.resolved(), "grid": grid, "points": points}),
        "sweep_timing.json": json_text({"runtime_s": runtime}),
    })
    return header, rows

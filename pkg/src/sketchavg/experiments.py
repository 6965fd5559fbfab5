"""Config-driven experiment runner.

An experiment file is TOML with [problem], [cluster], [solver], and optional
[output] sections plus top-level `trials` and `master_seed`. Optional
[[variants]] tables override any subset of the three main sections under a
label, producing one curve per variant from common per-trial randomness (the
worker streams depend only on master_seed, trial, and worker index, so
variants see identical sketch draws wherever their dimensions agree).

Outputs per run: per-trial trace CSVs, an aggregate CSV of means and
standard errors per iteration (wall time excluded, so aggregate bytes are
reproducible), and a summary JSON carrying both the theory-predicted
quantities and their observed counterparts.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import tomli

from . import moments
from .cluster import make_cluster
from .linalg import RngStream
from .matio import write_csv_table
from .problems import generate_problem
from .solvers import (dist_ihs, dist_newton_sketch, dist_ridge_average,
                      solve_direct)
from .svgplot import write_line_chart


class ConfigError(ValueError):
    """A config file failed validation; message names the offending field."""


_PROBLEM_KEYS = {"kind", "n", "d", "noise", "lambda1", "identical_sv",
                 "sigma0", "bound"}
_CLUSTER_KEYS = {"q", "m", "m_list", "kind", "s", "m2", "inner",
                 "partitioned"}
_SOLVER_KEYS = {"algorithm", "T", "mu", "correction", "steps", "eps",
                "max_iters", "sigma", "sigma_mode"}
_OUTPUT_KEYS = {"write_traces", "svg", "svg_logy"}
_TOP_KEYS = {"problem", "cluster", "solver", "output", "trials",
             "master_seed", "variants"}

_LABEL_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

AGGREGATE_COLUMNS = ("variant", "t", "cost_gap_mean", "cost_gap_se",
                     "errA_sq_mean", "errA_sq_se", "rel_x_err_mean",
                     "rel_x_err_se", "comm_scalars")


@dataclass
class ExperimentConfig:
    problem: dict
    cluster: dict
    solver: dict
    output: dict = field(default_factory=dict)
    trials: int = 1
    master_seed: int = 0
    variants: list = field(default_factory=list)
    source: str = "<config>"


def _check_keys(tbl: dict, allowed: set, where: str, source: str) -> None:
    for key in tbl:
        if key not in allowed:
            raise ConfigError(f"{source}: unknown key '{key}' in {where}")


def _need(tbl: dict, key: str, where: str, source: str):
    if key not in tbl:
        raise ConfigError(f"{source}: {where} is missing required key '{key}'")
    return tbl[key]


def config_from_dict(data: dict, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a table")
    _check_keys(data, _TOP_KEYS, "the top level", source)
    problem = dict(_need(data, "problem", "the top level", source))
    cluster = dict(_need(data, "cluster", "the top level", source))
    solver = dict(_need(data, "solver", "the top level", source))
    output = dict(data.get("output", {}))
    _check_keys(problem, _PROBLEM_KEYS, "[problem]", source)
    _check_keys(cluster, _CLUSTER_KEYS, "[cluster]", source)
    _check_keys(solver, _SOLVER_KEYS, "[solver]", source)
    _check_keys(output, _OUTPUT_KEYS, "[output]", source)
    for key in ("kind", "n", "d"):
        _need(problem, key, "[problem]", source)
    _need(cluster, "q", "[cluster]", source)
    if "m" not in cluster and "m_list" not in cluster:
        raise ConfigError(f"{source}: [cluster] needs 'm' or 'm_list'")
    _need(solver, "algorithm", "[solver]", source)

    trials = int(data.get("trials", 1))
    if trials < 1:
        raise ConfigError(f"{source}: trials must be >= 1, got {trials}")
    master_seed = int(data.get("master_seed", 0))

    variants = []
    raw_variants = data.get("variants", [])
    if not isinstance(raw_variants, list):
        raise ConfigError(f"{source}: variants must be an array of tables")
    seen = set()
    for i, entry in enumerate(raw_variants):
        where = f"[[variants]] #{i + 1}"
        if not isinstance(entry, dict):
            raise ConfigError(f"{source}: {where} must be a table")
        _check_keys(entry, {"label", "problem", "cluster", "solver"}, where,
                    source)
        label = _need(entry, "label", where, source)
        if not isinstance(label, str) or not _LABEL_RE.match(label):
            raise ConfigError(
                f"{source}: {where} label must match {_LABEL_RE.pattern}")
        if label in seen:
            raise ConfigError(f"{source}: duplicate variant label {label!r}")
        seen.add(label)
        for section, allowed in (("problem", _PROBLEM_KEYS),
                                 ("cluster", _CLUSTER_KEYS),
                                 ("solver", _SOLVER_KEYS)):
            sub = entry.get(section, {})
            if not isinstance(sub, dict):
                raise ConfigError(
                    f"{source}: {where} {section} override must be a table")
            _check_keys(sub, allowed, f"{where} {section}", source)
        variants.append({"label": label,
                         "problem": dict(entry.get("problem", {})),
                         "cluster": dict(entry.get("cluster", {})),
                         "solver": dict(entry.get("solver", {}))})

    return ExperimentConfig(problem=problem, cluster=cluster, solver=solver,
                            output=output, trials=trials,
                            master_seed=master_seed, variants=variants,
                            source=source)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, source=str(path))


def _toml_atom(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_atom(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def _toml_table_lines(tbl: dict) -> list:
    lines = []
    for key in sorted(tbl):
        value = tbl[key]
        if isinstance(value, dict):
            inner = ", ".join(f"{k} = {_toml_atom(v)}"
                              for k, v in sorted(value.items()))
            lines.append(f"{key} = {{ {inner} }}")
        else:
            lines.append(f"{key} = {_toml_atom(value)}")
    return lines


def config_to_toml(cfg: ExperimentConfig) -> str:
    """Serialize back to TOML; parsing the result reproduces the config."""
    parts = [f"trials = {cfg.trials}", f"master_seed = {cfg.master_seed}", ""]
    for name, tbl in (("problem", cfg.problem), ("cluster", cfg.cluster),
                      ("solver", cfg.solver), ("output", cfg.output)):
        if name == "output" and not tbl:
            continue
        parts.append(f"[{name}]")
        parts.extend(_toml_table_lines(tbl))
        parts.append("")
    for variant in cfg.variants:
        parts.append("[[variants]]")
        parts.append(f"label = {_toml_atom(variant['label'])}")
        for section in ("problem", "cluster", "solver"):
            if variant.get(section):
                parts.extend(_toml_table_lines({section: variant[section]}))
        parts.append("")
    return "\n".join(parts)


def _build_problem(prob: dict, seed: int):
    rng = RngStream(seed, 0).generator()
    return generate_problem(
        kind=prob["kind"], n=int(prob["n"]), d=int(prob["d"]), rng=rng,
        noise=float(prob.get("noise", 0.0)),
        lambda1=float(prob.get("lambda1", 0.0)),
        identical_sv=bool(prob.get("identical_sv", False)),
        sigma0=float(prob.get("sigma0", 1.0)),
        bound=float(prob.get("bound", 1.0)))


def _build_cluster(clus: dict, seed: int, trial: int):
    m = clus["m_list"] if "m_list" in clus else int(clus["m"])
    return make_cluster(
        q=int(clus["q"]), m=m, kind=clus.get("kind", "gaussian"), seed=seed,
        trial=trial, s=int(clus.get("s", 8)),
        m2=int(clus["m2"]) if "m2" in clus else None,
        inner=clus.get("inner", "sjlt"),
        partitioned=bool(clus.get("partitioned", False)))


def _run_solver(solv: dict, p, cluster, x_star, source: str):
    alg = solv["algorithm"]
    if alg == "ihs":
        if "T" not in solv:
            raise ConfigError(f"{source}: [solver] algorithm ihs needs 'T'")
        mu = solv.get("mu")
        return dist_ihs(p, cluster, T=int(solv["T"]),
                        mu=None if mu is None else float(mu), x_star=x_star)
    if alg == "ridge-average":
        sigma = solv.get("sigma")
        return dist_ridge_average(
            p, cluster, correction=solv.get("correction", "zero-bias"),
            sigma=None if sigma is None else float(sigma), x_star=x_star)
    if alg == "newton-sketch":
        return dist_newton_sketch(
            p, cluster, steps=solv.get("steps", "unbiased"),
            eps=float(solv.get("eps", 1e-8)),
            max_iters=int(solv.get("max_iters", 50)),
            correction=solv.get("correction", "zero-bias"),
            sigma_mode=solv.get("sigma_mode"), x_star=x_star)
    raise ConfigError(f"{source}: unknown solver algorithm {alg!r}")


def _predictions(solv: dict, clus: dict, prob: dict, report) -> dict:
    out: dict = {}
    alg = solv["algorithm"]
    d = int(prob["d"])
    q = int(clus["q"])
    m_vals = clus["m_list"] if "m_list" in clus else [clus["m"]]
    homogeneous = len(set(int(v) for v in m_vals)) == 1
    if alg == "ihs" and homogeneous:
        m = int(m_vals[0])
        try:
            out["rate"] = moments.ihs_rate(q, m, d)
        except moments.MomentUndefinedError:
            out["rate"] = None
        if "eps" in solv and out.get("rate") is not None:
            try:
                out["iterations"] = moments.predict_iterations(
                    float(solv["eps"]), q, m, d)
            except (moments.ContractionError, ValueError):
                out["iterations"] = None
    out["corrections"] = report.corrections
    return out


def run_experiment(cfg: ExperimentConfig, out_dir: str, threads: int = 1,
                   trials: int | None = None,
                   seed: int | None = None) -> dict:
    """Run every variant, write traces + aggregate.csv + summary.json.

    ``trials`` and ``seed`` override the config's values when given.
    Returns the summary dict.
    """
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    n_trials = cfg.trials if trials is None else int(trials)
    if n_trials < 1:
        raise ConfigError(f"trials must be >= 1, got {n_trials}")
    master_seed = cfg.master_seed if seed is None else int(seed)
    os.makedirs(out_dir, exist_ok=True)
    write_traces = bool(cfg.output.get("write_traces", True))

    variants = cfg.variants or [
        {"label": "base", "problem": {}, "cluster": {}, "solver": {}}]
    agg_rows = []
    summary_variants = {}
    problem_cache: dict = {}

    for variant in variants:
        label = variant["label"]
        prob = {**cfg.problem, **variant.get("problem", {})}
        clus = {**cfg.cluster, **variant.get("cluster", {})}
        solv = {**cfg.solver, **variant.get("solver", {})}

        pkey = json.dumps(prob, sort_keys=True)
        if pkey not in problem_cache:
            p = _build_problem(prob, master_seed)
            problem_cache[pkey] = (p, solve_direct(p))
        p, x_star = problem_cache[pkey]

        def run_trial(trial):
            cluster = _build_cluster(clus, master_seed, trial)
            return _run_solver(solv, p, cluster, x_star, cfg.source)

        reports = [None] * n_trials
        if threads == 1:
            for trial in range(n_trials):
                reports[trial] = run_trial(trial)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(run_trial, t) for t in range(n_trials)]
                for trial, fut in enumerate(futures):
                    reports[trial] = fut.result()

        if write_traces:
            trace_dir = os.path.join(out_dir, "traces", label)
            os.makedirs(trace_dir, exist_ok=True)
            for trial, rep in enumerate(reports):
                rows = [[r["t"], r["cost_gap"], r["errA_sq"], r["rel_x_err"],
                         r["comm_scalars"], r["wall_time_s"]]
                        for r in rep.trace.rows]
                write_csv_table(
                    os.path.join(trace_dir, f"trial_{trial:04d}.csv"),
                    ["t", "cost_gap", "errA_sq", "rel_x_err", "comm_scalars",
                     "wall_time_s"], rows)

        max_len = max(len(rep.trace.rows) for rep in reports)
        variant_rows = []
        for pos in range(max_len):
            present = [rep.trace.rows[pos] for rep in reports
                       if len(rep.trace.rows) > pos]
            row = [label, present[0]["t"]]
            for col in ("cost_gap", "errA_sq", "rel_x_err"):
                vals = np.array([r[col] for r in present])
                row.append(float(vals.mean()))
                se = float(vals.std(ddof=1) / np.sqrt(len(vals))) \
                    if len(vals) > 1 else 0.0
                row.append(se)
            row.append(present[0]["comm_scalars"])
            variant_rows.append(row)
        agg_rows.extend(variant_rows)

        observed: dict = {
            "final_cost_gap_mean": variant_rows[-1][2],
            "final_errA_sq_mean": variant_rows[-1][4],
            "final_rel_x_err_mean": variant_rows[-1][6],
        }
        if solv["algorithm"] == "ihs":
            e0 = np.array([rep.trace.rows[0]["errA_sq"] for rep in reports])
            e1 = np.array([rep.trace.rows[1]["errA_sq"] for rep in reports
                           if len(rep.trace.rows) > 1])
            if e1.size:
                observed["one_step_contraction"] = float(
                    np.mean(e1 / e0[:e1.size]))
            if "eps" in solv:
                eps = float(solv["eps"])
                means = np.array([row[4] for row in variant_rows])
                crossed = np.nonzero(means <= eps * means[0])[0]
                observed["iterations"] = (
                    int(variant_rows[int(crossed[0])][1]) if crossed.size
                    else None)
        if solv["algorithm"] == "newton-sketch":
            observed["iterations_mean"] = float(np.mean(
                [rep.observed["iterations"] for rep in reports]))

        summary_variants[label] = {
            "problem": prob,
            "cluster": clus,
            "solver": solv,
            "predicted": _predictions(solv, clus, prob, reports[0]),
            "observed": observed,
            "warnings": sum(len(rep.warnings) for rep in reports),
        }

    write_csv_table(os.path.join(out_dir, "aggregate.csv"),
                    list(AGGREGATE_COLUMNS), agg_rows)

    summary = {
        "trials": n_trials,
        "master_seed": master_seed,
        "variants": summary_variants,
    }
    with open(os.path.join(out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    svg_cols = cfg.output.get("svg", [])
    if isinstance(svg_cols, bool):
        svg_cols = ["cost_gap"] if svg_cols else []
    col_index = {"cost_gap": 2, "errA_sq": 4, "rel_x_err": 6}
    for col in svg_cols:
        if col not in col_index:
            raise ConfigError(
                f"{cfg.source}: [output] svg column {col!r} must be one of "
                + ", ".join(sorted(col_index)))
        series = {}
        for variant in variants:
            label = variant["label"]
            rows = [r for r in agg_rows if r[0] == label]
            series[label] = ([r[1] for r in rows],
                             [r[col_index[col]] for r in rows])
        write_line_chart(
            os.path.join(out_dir, f"{col}.svg"),
            title=col, series=series,
            logy=bool(cfg.output.get("svg_logy", False)))

    return summary

"""Pipeline glue: evaluate a fit against a gold standard, run one
(scenario, density, model, replicate) task end to end, and orchestrate sweep
grids with resumable, hash-checked per-task results.

Sweep tasks are sharded across worker processes and keyed by (cell,
replicate) RNG stream ids, so a sweep is reproducible regardless of worker
count or completion order, and a paired comparison of two models on the same
(scenario, density, replicate) sees identical data.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os

import numpy as np

from .data import AnnotationTensor, GoldStandard
from .errors import ConfigError, DataError
from .evaluate import (
    EvaluationReport,
    brier,
    expertise_coverage_mse,
    gold_scores,
    majority_vote,
    roc_auc,
)
from .models import MODEL_KINDS, validate_model_kind
from .priors import HyperParams, simulation_defaults
from .runner import DrawStore, McmcConfig, default_budget, run
from .simulate import DENSITY_GRID, ScenarioConfig, SimTruth, generate_scenario


def evaluate_fit(
    store: DrawStore,
    tensor: AnnotationTensor,
    gold: GoldStandard,
    truth: SimTruth | None = None,
) -> EvaluationReport:
    """Score one fitted model against a gold standard (or simulation truth).

    AUC/Brier use the pooled posterior label probabilities restricted to the
    gold cells; the majority-vote baseline is computed from the same tensor.
    Coverage/MSE of annotator TPRs require simulation truth.
    """
    scores_full = store.posterior_label_probabilities()
    scores, labels = gold_scores(scores_full, gold)
    auc, points = roc_auc(scores, labels)
    mv_scores, _ = gold_scores(majority_vote(tensor), gold)
    mv_auc, _ = roc_auc(mv_scores, labels)
    bs = brier(scores, labels)

    waic_terms = None
    if store.waic_accumulators:
        waic_terms = store.merged_waic()

    coverage = mse = None
    extra = {}
    if truth is not None:
        draws = store.pooled_expertise_draws(side="tpr")
        coverage, mse, _, _ = expertise_coverage_mse(draws, truth.avg_tpr)
        fpr_draws = store.pooled_expertise_draws(side="fpr")
        fpr_cov, fpr_mse, _, _ = expertise_coverage_mse(fpr_draws, truth.avg_fpr)
        extra = {"fpr_coverage": f"{fpr_cov:.4f}", "fpr_mse": f"{fpr_mse:.6e}"}

    return EvaluationReport(
        auc=auc,
        roc_points=points,
        waic=waic_terms,
        brier=bs,
        coverage=coverage,
        mse=mse,
        mv_auc=mv_auc,
        extra=extra or None,
    )


def _density_key(density: float) -> int:
    return int(round(density * 10))


def run_replicate(
    scenario: int,
    density: float,
    model_kind: str,
    replicate: int,
    seed: int,
    hypers: HyperParams | None = None,
    budget: tuple[int, int] | None = None,
    n_chains: int = 3,
    thin: int = 1,
    n_jobs: int = 1,
    record_loglik: bool = False,
    max_extensions: int = 0,
) -> dict:
    """Simulate one replicate, fit one model, evaluate; returns flat metrics.

    Data depend only on (seed, scenario, density, replicate), so different
    models on the same task key are paired on identical data.

    max_extensions > 0 applies the collect-until-converged stopping rule:
    whenever min ESS < 100 or max split-R-hat >= 1.1, iterations, burn-in and
    thinning all double (bounding memory while total sampling grows) up to
    that many times.
    """
    validate_model_kind(model_kind)
    hypers = hypers or simulation_defaults()
    scen_cfg = ScenarioConfig(scenario=scenario, density=density, seed=seed, replicate=replicate)
    tensor, expertise, truth = generate_scenario(scen_cfg)

    n_iterations, burn_in = budget or default_budget(model_kind)
    extensions = 0
    while True:
        config = McmcConfig(
            model_kind=model_kind,
            n_iterations=n_iterations,
            burn_in=burn_in,
            thin=thin,
            seed=seed,
            n_chains=n_chains,
            record_loglik=record_loglik,
            n_jobs=n_jobs,
            stream_key=(scenario, _density_key(density), MODEL_KINDS.index(model_kind), replicate),
        )
        store = run(model_kind, tensor, expertise, hypers, config)
        diag = store.diagnostics()
        if (diag.min_ess >= 100 and diag.max_rhat < 1.1) or extensions >= max_extensions:
            break
        n_iterations *= 2
        burn_in *= 2
        thin *= 2
        extensions += 1

    report = evaluate_fit(store, tensor, truth.gold(), truth)
    out = {
        "scenario": scenario,
        "density": density,
        "model": model_kind,
        "replicate": replicate,
        "seed": seed,
        "auc": report.auc,
        "mv_auc": report.mv_auc,
        "brier": report.brier,
        "tpr_coverage": report.coverage,
        "tpr_mse": report.mse,
        "min_ess": diag.min_ess,
        "max_rhat": diag.max_rhat,
        "min_ess_param": diag.min_ess_param,
        "max_rhat_param": diag.max_rhat_param,
        "budget_used": [n_iterations, burn_in],
        "extensions": extensions,
    }
    if report.extra:
        out["fpr_coverage"] = float(report.extra["fpr_coverage"])
        out["fpr_mse"] = float(report.extra["fpr_mse"])
    if report.waic is not None:
        out["lppd"], out["p_waic"], out["waic"] = report.waic
    return out


def _payload_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _task_filename(task: dict) -> str:
    return (
        f"s{task['scenario']}_d{_density_key(task['density']):02d}_"
        f"{task['model']}_r{task['replicate']:03d}.json"
    )


def _run_task_to_file(args):
    task, out_dir = args
    result = run_replicate(
        task["scenario"],
        task["density"],
        task["model"],
        task["replicate"],
        task["seed"],
        budget=tuple(task["budget"]),
        n_chains=task["n_chains"],
        thin=task["thin"],
        max_extensions=task.get("max_extensions", 0),
    )
    payload = {"task": task, "result": result}
    payload["hash"] = _payload_hash({"task": task, "result": result})
    path = os.path.join(out_dir, _task_filename(task))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return result


def _load_task_result(path, task):
    """Previously computed result, or None if absent/corrupt/mismatched."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("task") != task:
            return None
        if payload.get("hash") != _payload_hash(
            {"task": payload["task"], "result": payload["result"]}
        ):
            return None
        return payload["result"]
    except (OSError, ValueError, KeyError):
        return None


def run_sweep(
    out_dir,
    scenarios=(1, 2, 3, 4),
    densities=DENSITY_GRID,
    models=MODEL_KINDS,
    replicates: int = 20,
    seed: int = 0,
    workers: int = 1,
    budgets: dict | None = None,
    n_chains: int = 3,
    thin: int = 1,
    resume: bool = True,
    max_extensions: int = 0,
) -> list:
    """Run the (scenario x density x model x replicate) grid; returns results.

    Each task writes one hash-stamped JSON under out_dir/results; completed
    tasks are skipped on resume, corrupt or stale files are recomputed. Table
    CSVs (auc/coverage/mse, one row per scenario x density, one column per
    method) are rewritten at the end.
    """
    for m in models:
        validate_model_kind(m)
    results_dir = os.path.join(out_dir, "results")
    os.makedirs(results_dir, exist_ok=True)

    # the full sampling configuration is part of the task identity, so cached
    # results are invalidated when budgets or chain settings change
    tasks = [
        {
            "scenario": s, "density": d, "model": m, "replicate": r, "seed": seed,
            "budget": list((budgets or {}).get(m) or default_budget(m)),
            "n_chains": n_chains, "thin": thin, "max_extensions": max_extensions,
        }
        for s in scenarios
        for d in densities
        for m in models
        for r in range(replicates)
    ]
    done, todo = [], []
    for task in tasks:
        path = os.path.join(results_dir, _task_filename(task))
        prior_result = _load_task_result(path, task) if resume else None
        if prior_result is not None:
            done.append(prior_result)
        else:
            todo.append(task)

    args = [(t, results_dir) for t in todo]
    if workers > 1 and len(args) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(_run_task_to_file, args))
    else:
        fresh = [_run_task_to_file(a) for a in args]

    results = done + fresh
    write_sweep_tables(out_dir, results, models)
    return results


def write_sweep_tables(out_dir, results, models) -> None:
    """auc.csv / coverage.csv / mse.csv shaped rows=scenario x density,
    columns=methods, averaged over replicates."""
    cells = {}
    for r in results:
        cells.setdefault((r["scenario"], r["density"]), []).append(r)

    def mean_of(rs, model, key):
        vals = [r[key] for r in rs if r["model"] == model and r.get(key) is not None]
        return f"{np.mean(vals):.4f}" if vals else ""

    metrics = [
        ("auc.csv", "auc", True),
        ("coverage.csv", "tpr_coverage", False),
        ("mse.csv", "tpr_mse", False),
    ]
    for fname, key, with_mv in metrics:
        header = ["scenario", "density"] + (["mv"] if with_mv else []) + list(models)
        lines = [",".join(header)]
        for (scenario, density) in sorted(cells):
            rs = cells[(scenario, density)]
            row = [str(scenario), str(density)]
            if with_mv:
                mv_vals = [r["mv_auc"] for r in rs if r.get("mv_auc") is not None]
                row.append(f"{np.mean(mv_vals):.4f}" if mv_vals else "")
            row.extend(mean_of(rs, m, key) for m in models)
            lines.append(",".join(row))
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def run_paired_replicates(
    scenario: int,
    density: float,
    models: list,
    replicates: int,
    seed: int,
    workers: int = 1,
    budgets: dict | None = None,
    out_dir: str | None = None,
    max_extensions: int = 0,
) -> dict:
    """Fit several models on the same replicate datasets; returns
    {model: [per-replicate result dicts]} with replicates aligned."""
    if out_dir is None:
        raise ConfigError("run_paired_replicates needs an out_dir for resumable results")
    results = run_sweep(
        out_dir,
        scenarios=(scenario,),
        densities=(density,),
        models=models,
        replicates=replicates,
        seed=seed,
        workers=workers,
        budgets=budgets,
        max_extensions=max_extensions,
    )
    by_model = {m: [] for m in models}
    for r in results:
        by_model[r["model"]].append(r)
    for m in models:
        by_model[m].sort(key=lambda r: r["replicate"])
        if len(by_model[m]) != replicates:
            raise DataError(f"expected {replicates} replicates for {m}")
    return by_model

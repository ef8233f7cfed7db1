"""Command-line front end: simulate, fit, evaluate, sweep.

Configuration is layered: built-in defaults, then a JSON config file
(--config), then command-line flags; every effective value is echoed into the
run manifest so any run can be reconstructed from its outputs. When --out is
omitted the output directory is derived under the CHORUS_OUT root.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant breach.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from .data import load_annotations, load_expertise, load_gold
from .errors import ChorusError, ConfigError, DataError, InvariantError
from .evaluate import write_roc_csv
from .models import MODEL_KINDS
from .pipeline import evaluate_fit, run_sweep
from .priors import application_defaults, simulation_defaults, with_overrides
from .runner import DrawStore, McmcConfig, default_budget, run
from .simulate import DENSITY_GRID, ScenarioConfig, load_truth, write_scenario

_ENV_OUT_ROOT = "CHORUS_OUT"

_PRIOR_FLAGS = (
    "a_o", "b_o", "a_lambda", "b_lambda", "a_psi", "b_psi",
    "u1", "u2", "mu_lambda", "phi_lambda", "mu_psi", "phi_psi",
    "phi_lambda_star", "phi_psi_star", "phi_floor",
)
_MEAN_COUNT_PAIRS = (
    ("occurrence", "a_o", "b_o"),
    ("tpr", "a_lambda", "b_lambda"),
    ("fpr", "a_psi", "b_psi"),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="chorus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file layered under the flags")
    common.add_argument("--out", help=f"output directory (default derived under ${_ENV_OUT_ROOT})")
    common.add_argument("--seed", type=int, default=None)

    p_sim = sub.add_parser("simulate", parents=[common], help="generate one synthetic scenario")
    p_sim.add_argument("--scenario", type=int, default=None, help="1..4")
    p_sim.add_argument("--density", type=float, default=None, help="mean annotators per recording")
    p_sim.add_argument("--recordings", type=int, default=None)
    p_sim.add_argument("--annotators", type=int, default=None)
    p_sim.add_argument("--species", type=int, default=None)
    p_sim.add_argument("--replicate", type=int, default=None)

    p_fit = sub.add_parser("fit", parents=[common], help="run MCMC on an annotation file")
    p_fit.add_argument("--model", choices=MODEL_KINDS, default=None)
    p_fit.add_argument("--annotations", default=None)
    p_fit.add_argument("--expertise", default=None)
    p_fit.add_argument("--chains", type=int, default=None)
    p_fit.add_argument("--iters", type=int, default=None)
    p_fit.add_argument("--burn", type=int, default=None)
    p_fit.add_argument("--thin", type=int, default=None)
    p_fit.add_argument("--init", choices=("default", "prior"), default=None)
    p_fit.add_argument("--jobs", type=int, default=None, help="parallel chain workers")
    p_fit.add_argument("--priors", choices=("simulation", "application"), default=None)
    p_fit.add_argument("--waic-unit", choices=("entry", "cell"), default=None)
    p_fit.add_argument("--no-loglik", action="store_true", help="skip WAIC accumulation")
    for flag in _PRIOR_FLAGS:
        p_fit.add_argument(f"--{flag.replace('_', '-')}", type=float, default=None, dest=flag)
    for stem, _, _ in _MEAN_COUNT_PAIRS:
        p_fit.add_argument(f"--{stem}-mean", type=float, default=None, dest=f"{stem}_mean")
        p_fit.add_argument(f"--{stem}-count", type=float, default=None, dest=f"{stem}_count")

    p_eval = sub.add_parser("evaluate", parents=[common], help="score a fit against a gold standard")
    p_eval.add_argument("--fit", default=None, help="directory written by `chorus fit`")
    p_eval.add_argument("--annotations", default=None)
    p_eval.add_argument("--gold", default=None)
    p_eval.add_argument("--truth", default=None, help="truth.json from `chorus simulate`")

    p_sweep = sub.add_parser("sweep", parents=[common], help="scenario x density x model grid")
    p_sweep.add_argument("--scenarios", default=None, help="comma list, e.g. 1,2,3,4")
    p_sweep.add_argument("--densities", default=None, help="comma list, e.g. 0.8,1.6")
    p_sweep.add_argument("--models", default=None, help="comma list of model kinds")
    p_sweep.add_argument("--replicates", type=int, default=None)
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.add_argument("--iters", type=int, default=None, help="override every model's iterations")
    p_sweep.add_argument("--burn", type=int, default=None)
    p_sweep.add_argument("--no-resume", action="store_true")
    return parser


def _layer_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicitly-set CLI flags."""
    merged = dict(defaults)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config file: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            merged[key] = val
    return merged


def _resolve_out(args, payload: dict, command: str) -> str:
    if args.out:
        return args.out
    root = os.environ.get(_ENV_OUT_ROOT)
    if not root:
        raise ConfigError(f"--out not given and ${_ENV_OUT_ROOT} is not set")
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]
    return os.path.join(root, f"{command}-{digest}")


def _cmd_simulate(args) -> int:
    cfg = _layer_config(args, {
        "scenario": 1, "density": 4.0, "seed": 0, "recordings": 1000,
        "annotators": 20, "species": 25, "replicate": 0,
    })
    scen = ScenarioConfig(
        scenario=cfg["scenario"],
        density=cfg["density"],
        seed=cfg["seed"],
        n_recordings=cfg["recordings"],
        n_annotators=cfg["annotators"],
        n_species=cfg["species"],
        replicate=cfg["replicate"],
    )
    out = _resolve_out(args, scen.to_dict(), "simulate")
    write_scenario(out, scen)
    print(f"wrote annotations/expertise/gold/truth under {out}")
    return 0


def _hypers_from_config(cfg: dict):
    hypers = simulation_defaults() if cfg["priors"] == "simulation" else application_defaults()
    overrides = {}
    for stem, a_key, b_key in _MEAN_COUNT_PAIRS:
        mean, count = cfg.get(f"{stem}_mean"), cfg.get(f"{stem}_count")
        if (mean is None) != (count is None):
            raise ConfigError(f"--{stem}-mean and --{stem}-count must be given together")
        if mean is not None:
            from .priors import beta_from_mean_count

            overrides[a_key], overrides[b_key] = beta_from_mean_count(mean, count)
    for flag in _PRIOR_FLAGS:
        if cfg.get(flag) is not None:
            overrides[flag] = cfg[flag]
    return with_overrides(hypers, **overrides) if overrides else hypers


def _cmd_fit(args) -> int:
    defaults = {
        "model": "base", "annotations": None, "expertise": None, "chains": 3,
        "iters": None, "burn": None, "thin": 1, "seed": 0, "init": "default",
        "jobs": 1, "priors": "simulation", "waic_unit": "entry", "no_loglik": False,
    }
    defaults.update({flag: None for flag in _PRIOR_FLAGS})
    for stem, _, _ in _MEAN_COUNT_PAIRS:
        defaults[f"{stem}_mean"] = None
        defaults[f"{stem}_count"] = None
    cfg = _layer_config(args, defaults)
    if not cfg["annotations"]:
        raise ConfigError("fit needs --annotations")
    if not os.path.exists(cfg["annotations"]):
        raise DataError(f"annotation file not found: {cfg['annotations']}")
    if cfg["expertise"] and not os.path.exists(cfg["expertise"]):
        raise DataError(f"expertise file not found: {cfg['expertise']}")

    tensor = load_annotations(cfg["annotations"])
    expertise = load_expertise(cfg["expertise"], tensor) if cfg["expertise"] else None
    hypers = _hypers_from_config(cfg)
    iters, burn = default_budget(cfg["model"])
    if cfg["iters"] is not None:
        iters = cfg["iters"]
    if cfg["burn"] is not None:
        burn = cfg["burn"]
    mcmc = McmcConfig(
        model_kind=cfg["model"],
        n_iterations=iters,
        burn_in=burn,
        thin=cfg["thin"],
        seed=cfg["seed"],
        n_chains=cfg["chains"],
        init_strategy=cfg["init"],
        record_loglik=not cfg["no_loglik"],
        waic_unit=cfg["waic_unit"],
        n_jobs=cfg["jobs"],
    )
    out = _resolve_out(args, {**mcmc.to_dict(), "annotations": cfg["annotations"]}, "fit")
    store = run(cfg["model"], tensor, expertise, hypers, mcmc)
    manifest = store.save(out)

    try:
        diag = store.diagnostics()
        with open(os.path.join(out, "diagnostics.txt"), "w", encoding="utf-8") as fh:
            fh.write(diag.to_text())
        with open(os.path.join(out, "diagnostics.json"), "w", encoding="utf-8") as fh:
            json.dump(diag.to_dict(), fh, sort_keys=True)
            fh.write("\n")
        print(f"min ESS {diag.min_ess:.1f} ({diag.min_ess_param}); "
              f"max split-Rhat {diag.max_rhat:.4f} ({diag.max_rhat_param})")
    except DataError as exc:  # diagnostic failure is reported, not fatal
        print(f"diagnostics unavailable: {exc}", file=sys.stderr)

    print(f"wrote draws + manifest under {out}")
    print(f"chain hashes: {json.dumps(manifest['chain_hashes'], sort_keys=True)}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _layer_config(args, {"fit": None, "annotations": None, "gold": None,
                               "truth": None, "seed": 0})
    for key in ("fit", "annotations", "gold"):
        if not cfg[key]:
            raise ConfigError(f"evaluate needs --{key}")
        if not os.path.exists(cfg[key]):
            raise DataError(f"{key} path not found: {cfg[key]}")
    store = DrawStore.load(cfg["fit"])
    tensor = load_annotations(cfg["annotations"])
    gold = load_gold(cfg["gold"], tensor.n_recordings, tensor.n_species)
    truth = load_truth(cfg["truth"]) if cfg["truth"] else None
    report = evaluate_fit(store, tensor, gold, truth)

    out = _resolve_out(args, {"fit": cfg["fit"], "gold": cfg["gold"]}, "evaluate")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    write_roc_csv(report.roc_points, os.path.join(out, "roc.csv"))
    print(report.to_text(), end="")
    print(f"wrote report.txt and roc.csv under {out}")
    return 0


def _parse_list(text, cast):
    return tuple(cast(tok) for tok in str(text).split(",") if tok != "")


def _cmd_sweep(args) -> int:
    cfg = _layer_config(args, {
        "scenarios": "1,2,3,4", "densities": ",".join(str(d) for d in DENSITY_GRID),
        "models": ",".join(MODEL_KINDS), "replicates": 20, "workers": 1,
        "seed": 0, "iters": None, "burn": None, "no_resume": False,
    })
    scenarios = _parse_list(cfg["scenarios"], int)
    densities = _parse_list(cfg["densities"], float)
    models = _parse_list(cfg["models"], str)
    out = _resolve_out(args, {"scenarios": scenarios, "densities": densities,
                              "models": models, "replicates": cfg["replicates"],
                              "seed": cfg["seed"]}, "sweep")
    budgets = None
    if cfg["iters"] is not None:
        burn = cfg["burn"] if cfg["burn"] is not None else cfg["iters"] // 2
        budgets = {m: (cfg["iters"], burn) for m in models}
    results = run_sweep(
        out,
        scenarios=scenarios,
        densities=densities,
        models=models,
        replicates=cfg["replicates"],
        seed=cfg["seed"],
        workers=cfg["workers"],
        budgets=budgets,
        resume=not cfg["no_resume"],
    )
    print(f"{len(results)} replicate fits; tables under {out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return 4
    except ChorusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

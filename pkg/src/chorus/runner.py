"""Multi-chain MCMC orchestration: burn-in, thinning, draw storage,
persistence, and convergence diagnostics.

Chains are share-nothing workers over the immutable dataset, each driving its
own RngStream keyed by (seed, chain index), so a DrawStore is a deterministic
function of (data, config, seed) regardless of execution order or worker
count. Scalar and low-dimensional parameters keep full traces; the label
matrix is accumulated as an online mean (full snapshots only if configured).
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import gzip
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .data import AnnotationTensor, ExpertiseSets
from .diagnostics import DiagnosticsReport, diagnostics_from_series
from .errors import ConfigError, DataError
from .evaluate import WaicAccumulator
from .models import GATED_FAMILIES, is_hierarchical, make_driver, validate_model_kind
from .priors import HyperParams
from .rng import RngStream

DEFAULT_BUDGETS = {
    # (n_iterations, burn_in) at simulation scale / at real-data scale
    "base": ((2000, 1000), (3000, 1500)),
    "dp-bmm": ((2000, 1000), (3000, 1500)),
    "base-hier": ((5000, 2000), (7000, 2000)),
    "dp-bmm-hier": ((5000, 2000), (7000, 2000)),
}


def default_budget(model_kind: str, real_scale: bool = False) -> tuple[int, int]:
    validate_model_kind(model_kind)
    return DEFAULT_BUDGETS[model_kind][1 if real_scale else 0]


@dataclass(frozen=True)
class McmcConfig:
    model_kind: str
    n_iterations: int
    burn_in: int
    seed: int
    n_chains: int = 3
    thin: int = 1
    init_strategy: str = "default"
    adaptation_freeze_at: int | None = None  # defaults to burn_in
    record_loglik: bool = True
    waic_unit: str = "entry"  # or "cell"
    store_label_draws: bool = False
    store_loglik_draws: bool = False
    n_jobs: int = 1
    stream_key: tuple = ()  # extra RNG stream prefix, e.g. (cell, replicate) in sweeps
    s_gamma_init: float = 1.0  # initial concentration proposal scale (DP variants)

    def __post_init__(self):
        object.__setattr__(self, "stream_key", tuple(int(s) for s in self.stream_key))
        validate_model_kind(self.model_kind)
        if self.burn_in >= self.n_iterations:
            raise ConfigError("burn_in must be smaller than n_iterations")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be >= 1")
        if self.init_strategy not in ("default", "prior"):
            raise ConfigError(f"unknown init strategy {self.init_strategy!r}")
        if self.waic_unit not in ("entry", "cell"):
            raise ConfigError("waic_unit must be 'entry' or 'cell'")
        if self.s_gamma_init <= 0:
            raise ConfigError("s_gamma_init must be positive")

    @property
    def freeze_at(self) -> int:
        return self.burn_in if self.adaptation_freeze_at is None else self.adaptation_freeze_at

    @property
    def n_retained(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["stream_key"] = list(self.stream_key)
        return d


@dataclass
class DrawStore:
    """Thinned, burned posterior draws for all chains plus replay metadata."""

    model_kind: str
    config: McmcConfig
    hypers: dict
    dims: tuple
    iterations: np.ndarray  # retained global iteration indices (1-based)
    chains: list  # per chain: dict family -> (S,) or (S, d) or (S, d1, d2) array
    y_means: list  # per chain: (N1, N3) posterior mean of the labels
    waic_accumulators: list | None = None
    label_draws: list | None = None  # per chain: (S, N1, N3) snapshots, optional
    loglik_draws: list | None = None  # per chain: (S, units) matrices, optional

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_retained(self) -> int:
        return int(self.iterations.size)

    def families(self) -> list:
        return sorted(self.chains[0].keys())

    def parameter_paths(self, family: str) -> list:
        """Scalar paths under one family, e.g. lambda/3 or lambda_species/2/5."""
        arr = self.chains[0][family]
        if arr.ndim == 1:
            return [family]
        if arr.ndim == 2:
            return [f"{family}/{i}" for i in range(arr.shape[1])]
        return [
            f"{family}/{i}/{j}"
            for i in range(arr.shape[1])
            for j in range(arr.shape[2])
            if not np.isnan(arr[0, i, j])
        ]

    def series(self, path: str) -> list:
        """Per-chain 1-D traces for one scalar parameter path."""
        parts = path.split("/")
        family, idx = parts[0], tuple(int(p) for p in parts[1:])
        out = []
        for chain in self.chains:
            arr = chain[family]
            out.append(arr[(slice(None),) + idx])
        return out

    def gated_series(self) -> dict:
        """All (path -> per-chain traces) for the convergence-gated families."""
        out = {}
        for family in self.families():
            if family not in GATED_FAMILIES:
                continue
            for path in self.parameter_paths(family):
                out[path] = self.series(path)
        return out

    def diagnostics(self) -> DiagnosticsReport:
        return diagnostics_from_series(self.gated_series())

    def posterior_label_probabilities(self) -> np.ndarray:
        """Across-chain pooled posterior mean of the labels (the ROC score)."""
        return np.mean(self.y_means, axis=0)

    def pooled_expertise_draws(self, side: str = "tpr", probability_scale: bool = True) -> np.ndarray:
        """Pooled (draws, N2) expertise draws on the probability scale.

        Hierarchical models carry the overall parameter on the logit scale and
        sigmoid(lambda_j) stands in for the annotator's overall rate.
        """
        stem = "lambda" if side == "tpr" else "psi"
        key = f"{stem}_overall" if is_hierarchical(self.model_kind) else stem
        pooled = np.concatenate([chain[key] for chain in self.chains], axis=0)
        if is_hierarchical(self.model_kind) and probability_scale:
            pooled = 1.0 / (1.0 + np.exp(-pooled))
        return pooled

    def merged_waic(self):
        if not self.waic_accumulators:
            raise DataError("run was configured without log-likelihood recording")
        acc = self.waic_accumulators[0]
        for other in self.waic_accumulators[1:]:
            acc = acc.merge(other)
        return acc.result()

    # ------------------------------------------------------------------ io

    def save(self, out_dir) -> dict:
        os.makedirs(out_dir, exist_ok=True)
        chain_files = []
        for c, chain in enumerate(self.chains):
            path = os.path.join(out_dir, f"chain_{c:02d}.jsonl.gz")
            self._write_chain(chain, path)
            chain_files.append(path)
            ymean_path = os.path.join(out_dir, f"chain_{c:02d}_ymean.txt")
            np.savetxt(ymean_path, self.y_means[c], fmt="%.17g")
            if self.waic_accumulators:
                np.savez_compressed(
                    os.path.join(out_dir, f"chain_{c:02d}_waic.npz"),
                    **self.waic_accumulators[c].to_arrays(),
                )
        manifest = {
            "model_kind": self.model_kind,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "hypers": self.hypers,
            "dims": list(self.dims),
            "n_retained": self.n_retained,
            "chain_hashes": {os.path.basename(p): _sha256(p) for p in chain_files},
            "created_at": _now_iso(),
        }
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest

    def _write_chain(self, chain: dict, path: str) -> None:
        with gzip.GzipFile(path, "wb", mtime=0) as gz:
            for family in sorted(chain):
                arr = chain[family]
                for s, it in enumerate(self.iterations):
                    if arr.ndim == 1:
                        gz.write(_record(int(it), family, arr[s]))
                    elif arr.ndim == 2:
                        for i in range(arr.shape[1]):
                            gz.write(_record(int(it), f"{family}/{i}", arr[s, i]))
                    else:
                        for i in range(arr.shape[1]):
                            for j in range(arr.shape[2]):
                                v = arr[s, i, j]
                                if not np.isnan(v):
                                    gz.write(_record(int(it), f"{family}/{i}/{j}", v))

    @staticmethod
    def load(out_dir) -> "DrawStore":
        manifest_path = os.path.join(out_dir, "manifest.json")
        if not os.path.exists(manifest_path):
            raise DataError(f"no manifest.json under {out_dir}")
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        config = McmcConfig(**manifest["config"])
        dims = tuple(manifest["dims"])
        n1, _, n3 = dims
        chains, y_means, accs = [], [], []
        iterations = None
        for c in range(config.n_chains):
            path = os.path.join(out_dir, f"chain_{c:02d}.jsonl.gz")
            chain, its = _read_chain(path, dims)
            if iterations is None:
                iterations = its
            chains.append(chain)
            y_means.append(np.loadtxt(os.path.join(out_dir, f"chain_{c:02d}_ymean.txt")).reshape(n1, n3))
            waic_path = os.path.join(out_dir, f"chain_{c:02d}_waic.npz")
            if os.path.exists(waic_path):
                with np.load(waic_path) as data:
                    accs.append(WaicAccumulator.from_arrays(data))
        return DrawStore(
            model_kind=manifest["model_kind"],
            config=config,
            hypers=manifest["hypers"],
            dims=dims,
            iterations=iterations,
            chains=chains,
            y_means=y_means,
            waic_accumulators=accs or None,
        )


def _record(it: int, path: str, value) -> bytes:
    return (
        json.dumps({"iteration": it, "param_path": path, "value": float(value)})
        + "\n"
    ).encode()


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now_iso() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _read_chain(path, dims):
    n1, n2, n3 = dims
    values = {}
    iterations = []
    seen_it = set()
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            it = rec["iteration"]
            if it not in seen_it:
                seen_it.add(it)
                iterations.append(it)
            values.setdefault(rec["param_path"], {})[it] = rec["value"]
    iterations = sorted(iterations)
    index = {it: s for s, it in enumerate(iterations)}
    n_s = len(iterations)

    families = {}
    for path_key in values:
        family = path_key.split("/")[0]
        families.setdefault(family, []).append(path_key)

    chain = {}
    for family, paths in families.items():
        depth = paths[0].count("/")
        if depth == 0:
            arr = np.full(n_s, np.nan)
            for it, v in values[family].items():
                arr[index[it]] = v
        elif depth == 1:
            dim = max(int(p.split("/")[1]) for p in paths) + 1
            arr = np.full((n_s, dim), np.nan)
            for p in paths:
                i = int(p.split("/")[1])
                for it, v in values[p].items():
                    arr[index[it], i] = v
        else:
            arr = np.full((n_s, n2, n3), np.nan)
            for p in paths:
                _, i, j = p.split("/")
                for it, v in values[p].items():
                    arr[index[it], int(i), int(j)] = v
        chain[family] = arr
    return chain, np.asarray(iterations, dtype=np.int64)


def _unit_mapping(tensor: AnnotationTensor, unit: str):
    """Observation-unit ids per entry for WAIC: entries themselves, or the
    observed (recording, species) cells."""
    if unit == "entry":
        return np.arange(tensor.n_entries), tensor.n_entries
    codes = tensor.cell_codes
    unique, inverse = np.unique(codes, return_inverse=True)
    return inverse, unique.size


def run_chain(
    model_kind: str,
    tensor: AnnotationTensor,
    expertise: ExpertiseSets,
    hypers: HyperParams,
    config: McmcConfig,
    chain_idx: int,
):
    """Run one chain; deterministic in (seed, stream_key, chain_idx)."""
    driver = make_driver(model_kind, tensor, expertise, hypers)
    if hasattr(driver, "s_gamma_init"):
        driver.s_gamma_init = config.s_gamma_init
    rng = RngStream(config.seed, config.stream_key + (chain_idx,))
    state = driver.init_state(rng, config.init_strategy)

    traces = {}
    y_sum = np.zeros((tensor.n_recordings, tensor.n_species))
    retained = 0
    iterations = []
    label_draws = [] if config.store_label_draws else None
    loglik_draws = [] if config.store_loglik_draws else None

    acc = None
    unit_index = None
    if config.record_loglik and tensor.n_entries:
        unit_index, n_units = _unit_mapping(tensor, config.waic_unit)
        acc = WaicAccumulator(n_units)

    for it in range(1, config.n_iterations + 1):
        adapting = it <= config.freeze_at
        driver.sweep(rng, state, it, adapting)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            retained += 1
            iterations.append(it)
            for family, value in driver.tracked(state).items():
                traces.setdefault(family, []).append(value)
            y_sum += driver.labels(state)
            if acc is not None:
                ll_e = driver.entry_log_likelihood(state)
                ll_u = np.bincount(unit_index, weights=ll_e, minlength=acc.n_units)
                acc.update(ll_u)
                if loglik_draws is not None:
                    loglik_draws.append(ll_u)
            if label_draws is not None:
                label_draws.append(driver.labels(state).copy())

    stacked = {family: np.stack(vals) for family, vals in traces.items()}
    y_mean = y_sum / max(retained, 1)
    return {
        "traces": stacked,
        "y_mean": y_mean,
        "iterations": np.asarray(iterations, dtype=np.int64),
        "waic": acc,
        "label_draws": np.stack(label_draws) if label_draws else None,
        "loglik_draws": np.stack(loglik_draws) if loglik_draws else None,
    }


def _chain_worker(args):
    return run_chain(*args)


def run(
    model_kind: str,
    tensor: AnnotationTensor,
    expertise: ExpertiseSets | None,
    hypers: HyperParams,
    config: McmcConfig,
) -> DrawStore:
    """Fit one model variant with n_chains independent chains.

    expertise=None means every annotator covers all species. Raises
    ConfigError on a model/config mismatch.
    """
    validate_model_kind(model_kind)
    if model_kind != config.model_kind:
        raise ConfigError(
            f"config is for model {config.model_kind!r} but run was asked for {model_kind!r}"
        )
    if expertise is None:
        expertise = ExpertiseSets.full(tensor.n_annotators, tensor.n_species)
    if expertise.mask.shape != (tensor.n_annotators, tensor.n_species):
        raise ConfigError("expertise mask shape does not match the tensor")
    if is_hierarchical(model_kind) and not np.any(expertise.mask):
        raise ConfigError("hierarchical models need at least one expertise pair")

    args = [(model_kind, tensor, expertise, hypers, config, c) for c in range(config.n_chains)]
    if config.n_jobs > 1 and config.n_chains > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(config.n_jobs, config.n_chains)
        ) as pool:
            results = list(pool.map(_chain_worker, args))
    else:
        results = [run_chain(*a) for a in args]

    store = DrawStore(
        model_kind=model_kind,
        config=config,
        hypers=hypers.to_dict(),
        dims=(tensor.n_recordings, tensor.n_annotators, tensor.n_species),
        iterations=results[0]["iterations"],
        chains=[r["traces"] for r in results],
        y_means=[r["y_mean"] for r in results],
        waic_accumulators=[r["waic"] for r in results] if results[0]["waic"] else None,
        label_draws=[r["label_draws"] for r in results] if config.store_label_draws else None,
        loglik_draws=[r["loglik_draws"] for r in results] if config.store_loglik_draws else None,
    )
    return store

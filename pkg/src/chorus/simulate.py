"""Synthetic scenario generation with known ground truth.

Four scenarios on a 2x2 design: species occurrence independent (1, 3) or
correlated (2, 4), annotator expertise flat (1, 2) or species-varying (3, 4).
Defaults: 1000 recordings, 20 annotators, 25 species; per-recording annotation
density on the grid {0.8, 1.6, 2.4, 3.2, 4.0}.

Generation recipe:
  * occurrence probabilities o_k ~ Beta(2, 98); labels y_ik ~ Bernoulli(o_k);
    in correlated scenarios only the first 15 species are drawn and species
    15+k copies species k (k = 0..9), so those pairs always co-occur;
  * annotator pool of exactly 10% random / 70% normal / 20% excellent types
    (deterministic rounding), average TPRs from U(0.60, 0.70) / U(0.75, 0.85)
    / U(0.90, 0.95), average FPRs from U(0.001, 0.01) for everyone;
  * varying expertise lifts the averages to the logit scale and scatters
    species-specific values lambda_jk ~ N(logit(avg TPR), 2^2) and
    psi_jk ~ N(logit(avg FPR), 1^2);
  * each recording is annotated by A ~ Binomial(n_annotators,
    density/n_annotators) distinct annotators chosen uniformly, and an
    assigned annotator labels every species of the recording.

Emits the standard annotation/expertise/gold files so simulated and real data
flow through the same fitting path, plus a truth JSON for evaluation.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import (
    AnnotationTensor,
    ExpertiseSets,
    GoldStandard,
    make_tensor,
    write_annotations,
    write_expertise,
    write_gold,
)
from .errors import ConfigError
from .rng import RngStream, logistic, logit

DENSITY_GRID = (0.8, 1.6, 2.4, 3.2, 4.0)
SIM_PHI_LAMBDA = 2.0
SIM_PHI_PSI = 1.0
_TYPE_FRACTIONS = (("random", 0.10, 0.60, 0.70), ("normal", 0.70, 0.75, 0.85),
                   ("excellent", 0.20, 0.90, 0.95))
_N_CORRELATED_PAIRS = 10
_N_FREE_SPECIES = 15


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int
    density: float
    seed: int
    n_recordings: int = 1000
    n_annotators: int = 20
    n_species: int = 25
    replicate: int = 0

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4):
            raise ConfigError(f"scenario must be 1..4, got {self.scenario}")
        if not (0 < self.density <= self.n_annotators):
            raise ConfigError(
                f"density must be in (0, n_annotators]; got {self.density} with "
                f"{self.n_annotators} annotators"
            )
        if self.correlated and self.n_species != 25:
            raise ConfigError("correlated scenarios assume the 25-species layout")

    @property
    def correlated(self) -> bool:
        return self.scenario in (2, 4)

    @property
    def varying_expertise(self) -> bool:
        return self.scenario in (3, 4)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "density": self.density,
            "seed": self.seed,
            "n_recordings": self.n_recordings,
            "n_annotators": self.n_annotators,
            "n_species": self.n_species,
            "replicate": self.replicate,
        }


@dataclass
class SimTruth:
    """Everything the evaluation needs: labels, true rates, annotator types."""

    y_true: np.ndarray  # (N1, N3) int8
    occurrence: np.ndarray  # (N3,)
    annotator_types: list
    avg_tpr: np.ndarray  # (N2,) the drawn per-annotator average TPR
    avg_fpr: np.ndarray
    tpr_cells: np.ndarray  # (N2, N3) per-cell report probability given presence
    fpr_cells: np.ndarray
    varying: bool

    def gold(self) -> GoldStandard:
        """Full-truth gold standard over every (recording, species) cell."""
        n1, n3 = self.y_true.shape
        rec, spc = np.divmod(np.arange(n1 * n3), n3)
        return GoldStandard(
            recordings=rec.astype(np.int32),
            species=spc.astype(np.int32),
            labels=self.y_true.reshape(-1).astype(np.int8),
        )

    def to_dict(self) -> dict:
        return {
            "varying": bool(self.varying),
            "occurrence": self.occurrence.tolist(),
            "annotator_types": list(self.annotator_types),
            "avg_tpr": self.avg_tpr.tolist(),
            "avg_fpr": self.avg_fpr.tolist(),
            "tpr_cells": self.tpr_cells.tolist(),
            "fpr_cells": self.fpr_cells.tolist(),
            "y_true": self.y_true.astype(int).tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "SimTruth":
        return SimTruth(
            y_true=np.asarray(d["y_true"], dtype=np.int8),
            occurrence=np.asarray(d["occurrence"], dtype=float),
            annotator_types=list(d["annotator_types"]),
            avg_tpr=np.asarray(d["avg_tpr"], dtype=float),
            avg_fpr=np.asarray(d["avg_fpr"], dtype=float),
            tpr_cells=np.asarray(d["tpr_cells"], dtype=float),
            fpr_cells=np.asarray(d["fpr_cells"], dtype=float),
            varying=bool(d["varying"]),
        )


def gen_truth(rng: RngStream, config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """(y_true, occurrence probabilities) for the configured scenario."""
    n1, n3 = config.n_recordings, config.n_species
    if config.correlated:
        o_free = rng.gen.beta(2.0, 98.0, size=_N_FREE_SPECIES)
        y = np.zeros((n1, n3), dtype=np.int8)
        y[:, :_N_FREE_SPECIES] = rng.gen.random((n1, _N_FREE_SPECIES)) < o_free
        y[:, _N_FREE_SPECIES:] = y[:, :_N_CORRELATED_PAIRS]
        occurrence = np.concatenate([o_free, o_free[:_N_CORRELATED_PAIRS]])
    else:
        occurrence = rng.gen.beta(2.0, 98.0, size=n3)
        y = (rng.gen.random((n1, n3)) < occurrence[None, :]).astype(np.int8)
    return y.astype(np.int8), occurrence


def annotator_type_counts(n_annotators: int) -> dict:
    """Deterministic 10/70/20 split; remainders go to the 'normal' bucket."""
    counts = {name: int(round(frac * n_annotators)) for name, frac, _, _ in _TYPE_FRACTIONS}
    counts["normal"] += n_annotators - sum(counts.values())
    return counts


def gen_annotators(rng: RngStream, config: ScenarioConfig):
    """Annotator types, average rates, and per-cell report probabilities."""
    n2, n3 = config.n_annotators, config.n_species
    counts = annotator_type_counts(n2)
    types = []
    avg_tpr = np.empty(n2)
    for name, _, lo, hi in _TYPE_FRACTIONS:
        for _ in range(counts[name]):
            types.append(name)
    order = rng.gen.permutation(n2)
    types = [types[i] for i in order]
    bounds = {name: (lo, hi) for name, _, lo, hi in _TYPE_FRACTIONS}
    for j, name in enumerate(types):
        lo, hi = bounds[name]
        avg_tpr[j] = rng.gen.uniform(lo, hi)
    avg_fpr = rng.gen.uniform(0.001, 0.01, size=n2)

    if config.varying_expertise:
        lam = rng.gen.normal(logit(avg_tpr)[:, None], SIM_PHI_LAMBDA, size=(n2, n3))
        psi = rng.gen.normal(logit(avg_fpr)[:, None], SIM_PHI_PSI, size=(n2, n3))
        tpr_cells = logistic(lam)
        fpr_cells = logistic(psi)
    else:
        tpr_cells = np.tile(avg_tpr[:, None], (1, n3))
        fpr_cells = np.tile(avg_fpr[:, None], (1, n3))
    return types, avg_tpr, avg_fpr, tpr_cells, fpr_cells


def gen_annotations(rng: RngStream, config: ScenarioConfig, truth: SimTruth) -> AnnotationTensor:
    """Assign annotators per recording and emit their noisy species reports."""
    n1, n2, n3 = config.n_recordings, config.n_annotators, config.n_species
    p_assign = config.density / n2
    rows = []
    for i in range(n1):
        a = rng.gen.binomial(n2, p_assign)
        if a == 0:
            continue
        chosen = rng.gen.choice(n2, size=a, replace=False)
        chosen.sort()
        y_i = truth.y_true[i]
        for j in chosen:
            p = np.where(y_i == 1, truth.tpr_cells[j], truth.fpr_cells[j])
            labels = rng.gen.random(n3) < p
            rows.extend((i, int(j), k, int(labels[k])) for k in range(n3))
    return make_tensor(rows, dims=(n1, n2, n3))


def generate_scenario(config: ScenarioConfig):
    """(tensor, expertise, truth) for one scenario replicate, deterministically."""
    rng = RngStream(
        config.seed, (config.scenario, int(round(config.density * 10)), config.replicate)
    )
    y_true, occurrence = gen_truth(rng, config)
    types, avg_tpr, avg_fpr, tpr_cells, fpr_cells = gen_annotators(rng, config)
    truth = SimTruth(
        y_true=y_true,
        occurrence=occurrence,
        annotator_types=types,
        avg_tpr=avg_tpr,
        avg_fpr=avg_fpr,
        tpr_cells=tpr_cells,
        fpr_cells=fpr_cells,
        varying=config.varying_expertise,
    )
    tensor = gen_annotations(rng, config, truth)
    expertise = ExpertiseSets.full(config.n_annotators, config.n_species)
    return tensor, expertise, truth


def write_scenario(out_dir, config: ScenarioConfig):
    """Generate one replicate and write annotations/expertise/gold/truth files."""
    os.makedirs(out_dir, exist_ok=True)
    tensor, expertise, truth = generate_scenario(config)
    write_annotations(tensor, os.path.join(out_dir, "annotations.csv"))
    write_expertise(expertise, os.path.join(out_dir, "expertise.csv"))
    write_gold(truth.gold(), os.path.join(out_dir, "gold.csv"))
    with open(os.path.join(out_dir, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump({"config": config.to_dict(), "truth": truth.to_dict()}, fh, sort_keys=True)
        fh.write("\n")
    return tensor, expertise, truth


def load_truth(path) -> SimTruth:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return SimTruth.from_dict(payload["truth"])

"""Species-varying annotator expertise on the logit scale.

Each annotator j carries an overall location lambda_j (and psi_j for the
false-positive side) and species-level offsets lambda_{j,k} ~ N(lambda_j,
phi*^2) for k in their expertise set; the per-cell report probabilities are
sigmoid(lambda_{j,k}) / sigmoid(psi_{j,k}).

The species-level conditionals are sampled exactly by a two-step partially
collapsed scheme: one fresh PG(1, lambda_{j,k}) auxiliary per relevant
annotation (never persisted across sweeps), then a conjugate normal draw.
The species-level scales phi* are plugged in by closed-form maximum
likelihood after each species sweep when empirical Bayes is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnnotationTensor, ExpertiseSets
from .errors import ConfigError, DataError
from .polya_gamma import polya_gamma
from .priors import HierHypers
from .rng import RngStream, log_sigmoid, logistic


@dataclass
class HierExpertiseState:
    """Mutable logit-scale expertise state; entries outside l_j are NaN."""

    lam_overall: np.ndarray  # (N2,)
    psi_overall: np.ndarray  # (N2,)
    lam_species: np.ndarray  # (N2, N3), NaN outside the expertise mask
    psi_species: np.ndarray  # (N2, N3)
    phi_lambda: float  # current species-level scale phi*_lambda
    phi_psi: float
    mask: np.ndarray  # (N2, N3) bool, the expertise sets


def init_hier_state(
    rng: RngStream,
    expertise: ExpertiseSets,
    hypers: HierHypers,
    strategy: str = "default",
) -> HierExpertiseState:
    n2, n3 = expertise.mask.shape
    if strategy == "default":
        lam_o = np.full(n2, hypers.mu_lambda)
        psi_o = np.full(n2, hypers.mu_psi)
        lam_s = np.tile(lam_o[:, None], (1, n3)).astype(float)
        psi_s = np.tile(psi_o[:, None], (1, n3)).astype(float)
    elif strategy == "prior":
        lam_o = rng.gen.normal(hypers.mu_lambda, hypers.phi_lambda, size=n2)
        psi_o = rng.gen.normal(hypers.mu_psi, hypers.phi_psi, size=n2)
        lam_s = rng.gen.normal(lam_o[:, None], hypers.phi_lambda_star, size=(n2, n3))
        psi_s = rng.gen.normal(psi_o[:, None], hypers.phi_psi_star, size=(n2, n3))
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    lam_s[~expertise.mask] = np.nan
    psi_s[~expertise.mask] = np.nan
    return HierExpertiseState(
        lam_overall=lam_o,
        psi_overall=psi_o,
        lam_species=lam_s,
        psi_species=psi_s,
        phi_lambda=hypers.phi_lambda_star,
        phi_psi=hypers.phi_psi_star,
        mask=expertise.mask,
    )


def update_overall(rng: RngStream, state: HierExpertiseState, hypers: HierHypers):
    """Conjugate normal draw for each annotator's overall location.

    The posterior precision-weights the prior mean against the average of the
    K_j species-level values in the annotator's expertise set (K_j replaces
    N3 when l_j is a strict subset; K_j = 0 falls back to the prior).
    """
    for which in ("lam", "psi"):
        if which == "lam":
            species, mu0, phi0, phi_star = (
                state.lam_species, hypers.mu_lambda, hypers.phi_lambda, state.phi_lambda,
            )
        else:
            species, mu0, phi0, phi_star = (
                state.psi_species, hypers.mu_psi, hypers.phi_psi, state.phi_psi,
            )
        k_j = state.mask.sum(axis=1)
        sums = np.nansum(np.where(state.mask, species, 0.0), axis=1)
        prec = 1.0 / phi0**2 + k_j / phi_star**2
        mean = (mu0 / phi0**2 + sums / phi_star**2) / prec
        draw = mean + rng.gen.standard_normal(mean.size) / np.sqrt(prec)
        if which == "lam":
            state.lam_overall = draw
        else:
            state.psi_overall = draw
    return state.lam_overall, state.psi_overall


def _species_update(
    rng: RngStream,
    tensor: AnnotationTensor,
    y: np.ndarray,
    species_vals: np.ndarray,
    overall: np.ndarray,
    phi_star: float,
    mask: np.ndarray,
    on_positive: bool,
):
    """Two-step PG draw for all (j, k) values of one side (TPR or FPR).

    Step 1 draws one PG(1, value_{j,k}) auxiliary per annotation on a cell
    with y=1 (TPR side) or y=0 (FPR side); step 2 draws the conjugate normal
    with mean [overall_j/phi*^2 + (delta - delta_bar)/2] / [1/phi*^2 + sum w].
    """
    n2, n3 = mask.shape
    y_e = y[tensor.recordings, tensor.species]
    rel = y_e == 1 if on_positive else y_e == 0
    j = tensor.annotators[rel]
    k = tensor.species[rel]
    lab = tensor.labels[rel].astype(np.float64)
    jk = j.astype(np.int64) * n3 + k

    tilt = species_vals[j, k]
    omega = polya_gamma(rng, tilt)

    size = n2 * n3
    w_sum = np.bincount(jk, weights=omega, minlength=size)
    delta = np.bincount(jk, weights=lab, minlength=size)
    delta_bar = np.bincount(jk, weights=1.0 - lab, minlength=size)

    prec = 1.0 / phi_star**2 + w_sum.reshape(n2, n3)
    mean = (overall[:, None] / phi_star**2 + (delta - delta_bar).reshape(n2, n3) / 2.0) / prec
    draw = mean + rng.gen.standard_normal((n2, n3)) / np.sqrt(prec)
    draw[~mask] = np.nan
    return draw


def update_species_tpr(rng, state: HierExpertiseState, tensor: AnnotationTensor, y: np.ndarray):
    state.lam_species = _species_update(
        rng, tensor, y, state.lam_species, state.lam_overall, state.phi_lambda, state.mask, True
    )
    return state.lam_species


def update_species_fpr(rng, state: HierExpertiseState, tensor: AnnotationTensor, y: np.ndarray):
    state.psi_species = _species_update(
        rng, tensor, y, state.psi_species, state.psi_overall, state.phi_psi, state.mask, False
    )
    return state.psi_species


def empirical_bayes_phi(state: HierExpertiseState, hypers: HierHypers):
    """Replace phi* by its maximum-likelihood value, floored at phi_floor.

    (phi*)^2 = sum_j sum_{k in l_j} (value_{j,k} - overall_j)^2 / sum_j |l_j|.
    """
    total = int(state.mask.sum())
    if total == 0:
        raise DataError("empirical Bayes phi update needs at least one expertise pair")
    dev_l = np.where(state.mask, state.lam_species - state.lam_overall[:, None], 0.0)
    dev_p = np.where(state.mask, state.psi_species - state.psi_overall[:, None], 0.0)
    state.phi_lambda = max(float(np.sqrt(np.sum(dev_l**2) / total)), hypers.phi_floor)
    state.phi_psi = max(float(np.sqrt(np.sum(dev_p**2) / total)), hypers.phi_floor)
    return state.phi_lambda, state.phi_psi


def cell_probabilities(state: HierExpertiseState, j: int, k: int) -> tuple[float, float]:
    """(TPR, FPR) = (sigmoid(lambda_jk), sigmoid(psi_jk)) for one (j, k) cell."""
    if not state.mask[j, k]:
        raise ConfigError(f"species {k} is outside annotator {j}'s expertise set")
    return float(logistic(state.lam_species[j, k])), float(logistic(state.psi_species[j, k]))


def hier_vote_log_likelihoods(tensor: AnnotationTensor, state: HierExpertiseState):
    """Per-cell vote log likelihoods under y=1 / y=0 with species-level rates."""
    from .base_model import vote_log_likelihoods

    j = tensor.annotators
    k = tensor.species
    lam = state.lam_species[j, k]
    psi = state.psi_species[j, k]
    ls_lam = log_sigmoid(lam)
    ls_psi = log_sigmoid(psi)
    # log sigmoid(-x) = log sigmoid(x) - x
    return vote_log_likelihoods(tensor, ls_lam, ls_lam - lam, ls_psi, ls_psi - psi)


def hier_sweep(
    rng: RngStream,
    state: HierExpertiseState,
    tensor: AnnotationTensor,
    y: np.ndarray,
    hypers: HierHypers,
    iteration: int = 0,
):
    """One full expertise block: overall -> species (both sides) -> phi*."""
    update_overall(rng, state, hypers)
    update_species_tpr(rng, state, tensor, y)
    update_species_fpr(rng, state, tensor, y)
    if hypers.empirical_bayes and (iteration + 1) % hypers.eb_every == 0:
        empirical_bayes_phi(state, hypers)
    return state

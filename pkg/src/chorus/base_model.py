"""Gibbs updates for the flat model: independent species occurrence, one
TPR/FPR per annotator.

Sweep order is occurrence -> TPR -> FPR -> labels. All per-cell vote products
are accumulated in log space (FPRs near 0.005 underflow fast in linear space)
and every sufficient statistic ranges over observed cells only; missing cells
contribute nowhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnnotationTensor
from .priors import BaseHypers
from .rng import RngStream, logistic, logit


@dataclass
class BaseState:
    """Mutable per-chain state: occurrence o, TPR lambda, FPR psi, labels y."""

    o: np.ndarray  # (N3,)
    lam: np.ndarray  # (N2,)
    psi: np.ndarray  # (N2,)
    y: np.ndarray  # (N1, N3) int8


def majority_vote_labels(tensor: AnnotationTensor) -> np.ndarray:
    """Per-cell majority initialization; ties and unvoted cells go to 0."""
    pos = np.zeros(tensor.n_cells)
    tot = np.zeros(tensor.n_cells)
    np.add.at(pos, tensor.cell_codes, tensor.labels)
    np.add.at(tot, tensor.cell_codes, 1)
    y = (pos * 2 > tot).astype(np.int8)
    return y.reshape(tensor.n_recordings, tensor.n_species)


def init_base_state(
    rng: RngStream, tensor: AnnotationTensor, hypers: BaseHypers, strategy: str = "default"
) -> BaseState:
    """Build the starting state.

    "default": y from per-cell majority vote, parameters at prior means.
    "prior":   parameters drawn from their priors, y ~ Bernoulli(1/2)
               (overdispersed starts for convergence diagnostics).
    """
    n1, n2, n3 = tensor.n_recordings, tensor.n_annotators, tensor.n_species
    if strategy == "default":
        o = np.full(n3, hypers.a_o / (hypers.a_o + hypers.b_o))
        lam = np.full(n2, hypers.a_lambda / (hypers.a_lambda + hypers.b_lambda))
        psi = np.full(n2, hypers.a_psi / (hypers.a_psi + hypers.b_psi))
        y = majority_vote_labels(tensor)
    elif strategy == "prior":
        o = rng.gen.beta(hypers.a_o, hypers.b_o, size=n3)
        lam = rng.gen.beta(hypers.a_lambda, hypers.b_lambda, size=n2)
        psi = rng.gen.beta(hypers.a_psi, hypers.b_psi, size=n2)
        y = (rng.gen.random((n1, n3)) < 0.5).astype(np.int8)
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    return BaseState(o=o, lam=lam, psi=psi, y=y)


def update_occurrence(rng: RngStream, state: BaseState, tensor: AnnotationTensor, hypers) -> np.ndarray:
    """o_k ~ Beta(a_o + sum_i y_ik, b_o + sum_i (1 - y_ik)), independently per k."""
    pos = state.y.sum(axis=0)
    n1 = tensor.n_recordings
    state.o = rng.gen.beta(hypers.a_o + pos, hypers.b_o + (n1 - pos))
    return state.o


def _expertise_counts(tensor: AnnotationTensor, y: np.ndarray, on_positive: bool):
    """(success, failure) tallies per annotator over observed cells.

    on_positive=True restricts to cells with y=1 (TPR statistics), False to
    y=0 cells (FPR statistics); success counts reports of 1.
    """
    y_e = y[tensor.recordings, tensor.species].astype(np.float64)
    w = y_e if on_positive else 1.0 - y_e
    lab = tensor.labels.astype(np.float64)
    n2 = tensor.n_annotators
    succ = np.bincount(tensor.annotators, weights=w * lab, minlength=n2)
    fail = np.bincount(tensor.annotators, weights=w * (1.0 - lab), minlength=n2)
    return succ, fail


def update_tpr(rng: RngStream, state: BaseState, tensor: AnnotationTensor, hypers) -> np.ndarray:
    succ, fail = _expertise_counts(tensor, state.y, on_positive=True)
    state.lam = rng.gen.beta(hypers.a_lambda + succ, hypers.b_lambda + fail)
    return state.lam


def update_fpr(rng: RngStream, state: BaseState, tensor: AnnotationTensor, hypers) -> np.ndarray:
    succ, fail = _expertise_counts(tensor, state.y, on_positive=False)
    state.psi = rng.gen.beta(hypers.a_psi + succ, hypers.b_psi + fail)
    return state.psi


def vote_log_likelihoods(tensor: AnnotationTensor, log_p1, log_q1, log_p0, log_q0):
    """Per-cell log likelihood of the observed votes under y=1 and y=0.

    log_p1/log_q1 are per-entry log prob of reporting 1 / 0 given presence,
    log_p0/log_q0 given absence. Returns two (N1*N3,) arrays.
    """
    lab = tensor.labels.astype(np.float64)
    ll1_e = np.where(lab == 1, log_p1, log_q1)
    ll0_e = np.where(lab == 1, log_p0, log_q0)
    n_cells = tensor.n_cells
    ll1 = np.bincount(tensor.cell_codes, weights=ll1_e, minlength=n_cells)
    ll0 = np.bincount(tensor.cell_codes, weights=ll0_e, minlength=n_cells)
    return ll1, ll0


def flat_vote_log_likelihoods(tensor: AnnotationTensor, lam, psi):
    j = tensor.annotators
    return vote_log_likelihoods(
        tensor,
        np.log(lam[j]),
        np.log1p(-lam[j]),
        np.log(psi[j]),
        np.log1p(-psi[j]),
    )


def label_probabilities(state: BaseState, tensor: AnnotationTensor) -> np.ndarray:
    """Closed-form P(y_ik = 1 | votes, o, lambda, psi) for every cell.

    Cells nobody observed reduce to o_k (empty vote products).
    """
    ll1, ll0 = flat_vote_log_likelihoods(tensor, state.lam, state.psi)
    prior = logit(state.o)[None, :]
    n1, n3 = tensor.n_recordings, tensor.n_species
    return logistic(prior + (ll1 - ll0).reshape(n1, n3))


def update_labels(rng: RngStream, state: BaseState, tensor: AnnotationTensor, hypers=None) -> np.ndarray:
    p = label_probabilities(state, tensor)
    state.y = (rng.gen.random(p.shape) < p).astype(np.int8)
    return state.y


def base_sweep(rng: RngStream, state: BaseState, tensor: AnnotationTensor, hypers: BaseHypers):
    update_occurrence(rng, state, tensor, hypers)
    update_tpr(rng, state, tensor, hypers)
    update_fpr(rng, state, tensor, hypers)
    update_labels(rng, state, tensor)
    return state

"""The four model variants behind one sweep/record protocol.

Each driver owns: state construction, one full Gibbs sweep (in the fixed scan
order of its sampler), the tracked-parameter snapshot recorded per retained
draw, and the per-entry report log likelihood used for WAIC.

Variants:
    base          independent occurrence x flat expertise
    base-hier     independent occurrence x species-varying expertise
    dp-bmm        DP Bernoulli mixture x flat expertise
    dp-bmm-hier   DP Bernoulli mixture x species-varying expertise
"""

from __future__ import annotations

import numpy as np

from . import base_model as bm
from . import dp_model as dp
from .data import AnnotationTensor, ExpertiseSets
from .errors import ConfigError
from .expertise import (
    HierExpertiseState,
    hier_sweep,
    hier_vote_log_likelihoods,
    init_hier_state,
)
from .priors import HyperParams
from .rng import RngStream, log_sigmoid

MODEL_KINDS = ("base", "base-hier", "dp-bmm", "dp-bmm-hier")

# parameter families whose traces feed the convergence gate (continuous
# sampler parameters; the component count and phi* are recorded but not gated)
GATED_FAMILIES = (
    "o", "lambda", "psi", "gamma",
    "lambda_overall", "psi_overall", "lambda_species", "psi_species",
)


def is_hierarchical(model_kind: str) -> bool:
    return model_kind.endswith("hier")


def is_dp(model_kind: str) -> bool:
    return model_kind.startswith("dp")


def validate_model_kind(model_kind: str) -> str:
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    return model_kind


class BaseDriver:
    kind = "base"

    def __init__(self, tensor: AnnotationTensor, expertise: ExpertiseSets, hypers: HyperParams):
        self.tensor = tensor
        self.hypers = hypers.base()

    def init_state(self, rng: RngStream, strategy: str):
        return bm.init_base_state(rng, self.tensor, self.hypers, strategy)

    def sweep(self, rng: RngStream, state, iteration: int, adapting: bool):
        return bm.base_sweep(rng, state, self.tensor, self.hypers)

    def labels(self, state) -> np.ndarray:
        return state.y

    def tracked(self, state) -> dict:
        return {"o": state.o.copy(), "lambda": state.lam.copy(), "psi": state.psi.copy()}

    def entry_log_likelihood(self, state) -> np.ndarray:
        t = self.tensor
        y_e = state.y[t.recordings, t.species]
        p = np.where(y_e == 1, state.lam[t.annotators], state.psi[t.annotators])
        return np.where(t.labels == 1, np.log(p), np.log1p(-p))


class BaseHierDriver:
    kind = "base-hier"

    def __init__(self, tensor, expertise: ExpertiseSets, hypers: HyperParams):
        self.tensor = tensor
        self.expertise = expertise
        self.base_hypers = hypers.base()
        self.hier_hypers = hypers.hier()

    def init_state(self, rng: RngStream, strategy: str):
        flat = bm.init_base_state(rng, self.tensor, self.base_hypers, strategy)
        hier = init_hier_state(rng, self.expertise, self.hier_hypers, strategy)
        return {"o": flat.o, "y": flat.y, "hier": hier}

    def sweep(self, rng: RngStream, state, iteration: int, adapting: bool):
        o, y, hier = state["o"], state["y"], state["hier"]
        pos = y.sum(axis=0)
        n1 = self.tensor.n_recordings
        state["o"] = rng.gen.beta(self.base_hypers.a_o + pos, self.base_hypers.b_o + (n1 - pos))
        hier_sweep(rng, hier, self.tensor, y, self.hier_hypers, iteration)
        ll1, ll0 = hier_vote_log_likelihoods(self.tensor, hier)
        n3 = self.tensor.n_species
        logits = (
            np.log(state["o"]) - np.log1p(-state["o"])
        )[None, :] + (ll1 - ll0).reshape(n1, n3)
        state["y"] = (rng.gen.random((n1, n3)) < 1.0 / (1.0 + np.exp(-logits))).astype(np.int8)
        return state

    def labels(self, state) -> np.ndarray:
        return state["y"]

    def tracked(self, state) -> dict:
        hier: HierExpertiseState = state["hier"]
        return {
            "o": state["o"].copy(),
            "lambda_overall": hier.lam_overall.copy(),
            "psi_overall": hier.psi_overall.copy(),
            "lambda_species": hier.lam_species.copy(),
            "psi_species": hier.psi_species.copy(),
            "phi_lambda": np.float64(hier.phi_lambda),
            "phi_psi": np.float64(hier.phi_psi),
        }

    def entry_log_likelihood(self, state) -> np.ndarray:
        return _hier_entry_loglik(self.tensor, state["hier"], state["y"])


class DpDriver:
    kind = "dp-bmm"

    def __init__(self, tensor, expertise: ExpertiseSets, hypers: HyperParams):
        self.tensor = tensor
        self.base_hypers = hypers.base()
        self.dp_hypers = hypers.dp()
        self.s_gamma_init = 1.0

    def init_state(self, rng: RngStream, strategy: str):
        flat = bm.init_base_state(rng, self.tensor, self.base_hypers, strategy)
        dps = dp.init_dp_state(rng, self.tensor, self.dp_hypers, flat.y, self.s_gamma_init)
        return {"dp": dps, "lam": flat.lam, "psi": flat.psi}

    def sweep(self, rng: RngStream, state, iteration: int, adapting: bool):
        dps: dp.DpState = state["dp"]
        dp.update_gamma(rng, dps, self.dp_hypers.u1, self.dp_hypers.u2, adapting)
        dp.assignment_sweep(rng, dps)
        ll1, ll0 = bm.flat_vote_log_likelihoods(self.tensor, state["lam"], state["psi"])
        n1, n3 = dps.y.shape
        dp.label_sweep(rng, dps, ll1.reshape(n1, n3), ll0.reshape(n1, n3))
        succ, fail = bm._expertise_counts(self.tensor, dps.y, on_positive=True)
        state["lam"] = rng.gen.beta(self.base_hypers.a_lambda + succ, self.base_hypers.b_lambda + fail)
        succ, fail = bm._expertise_counts(self.tensor, dps.y, on_positive=False)
        state["psi"] = rng.gen.beta(self.base_hypers.a_psi + succ, self.base_hypers.b_psi + fail)
        return state

    def labels(self, state) -> np.ndarray:
        return state["dp"].y

    def tracked(self, state) -> dict:
        dps: dp.DpState = state["dp"]
        return {
            "gamma": np.float64(dps.gamma),
            "n_components": np.float64(dps.stats.n_components),
            "lambda": state["lam"].copy(),
            "psi": state["psi"].copy(),
        }

    def entry_log_likelihood(self, state) -> np.ndarray:
        t = self.tensor
        y_e = state["dp"].y[t.recordings, t.species]
        p = np.where(y_e == 1, state["lam"][t.annotators], state["psi"][t.annotators])
        return np.where(t.labels == 1, np.log(p), np.log1p(-p))


class DpHierDriver:
    kind = "dp-bmm-hier"

    def __init__(self, tensor, expertise: ExpertiseSets, hypers: HyperParams):
        self.tensor = tensor
        self.expertise = expertise
        self.base_hypers = hypers.base()
        self.dp_hypers = hypers.dp()
        self.hier_hypers = hypers.hier()
        self.s_gamma_init = 1.0

    def init_state(self, rng: RngStream, strategy: str):
        flat = bm.init_base_state(rng, self.tensor, self.base_hypers, strategy)
        dps = dp.init_dp_state(rng, self.tensor, self.dp_hypers, flat.y, self.s_gamma_init)
        hier = init_hier_state(rng, self.expertise, self.hier_hypers, strategy)
        return {"dp": dps, "hier": hier}

    def sweep(self, rng: RngStream, state, iteration: int, adapting: bool):
        dps: dp.DpState = state["dp"]
        hier: HierExpertiseState = state["hier"]
        dp.update_gamma(rng, dps, self.dp_hypers.u1, self.dp_hypers.u2, adapting)
        dp.assignment_sweep(rng, dps)
        ll1, ll0 = hier_vote_log_likelihoods(self.tensor, hier)
        n1, n3 = dps.y.shape
        dp.label_sweep(rng, dps, ll1.reshape(n1, n3), ll0.reshape(n1, n3))
        hier_sweep(rng, hier, self.tensor, dps.y, self.hier_hypers, iteration)
        return state

    def labels(self, state) -> np.ndarray:
        return state["dp"].y

    def tracked(self, state) -> dict:
        dps: dp.DpState = state["dp"]
        hier: HierExpertiseState = state["hier"]
        return {
            "gamma": np.float64(dps.gamma),
            "n_components": np.float64(dps.stats.n_components),
            "lambda_overall": hier.lam_overall.copy(),
            "psi_overall": hier.psi_overall.copy(),
            "lambda_species": hier.lam_species.copy(),
            "psi_species": hier.psi_species.copy(),
            "phi_lambda": np.float64(hier.phi_lambda),
            "phi_psi": np.float64(hier.phi_psi),
        }

    def entry_log_likelihood(self, state) -> np.ndarray:
        return _hier_entry_loglik(self.tensor, state["hier"], state["dp"].y)


def _hier_entry_loglik(tensor: AnnotationTensor, hier: HierExpertiseState, y: np.ndarray):
    j, k = tensor.annotators, tensor.species
    y_e = y[tensor.recordings, k]
    val = np.where(y_e == 1, hier.lam_species[j, k], hier.psi_species[j, k])
    sign = np.where(tensor.labels == 1, 1.0, -1.0)
    return log_sigmoid(sign * val)


_DRIVERS = {
    "base": BaseDriver,
    "base-hier": BaseHierDriver,
    "dp-bmm": DpDriver,
    "dp-bmm-hier": DpHierDriver,
}


def make_driver(model_kind: str, tensor, expertise, hypers: HyperParams):
    validate_model_kind(model_kind)
    return _DRIVERS[model_kind](tensor, expertise, hypers)

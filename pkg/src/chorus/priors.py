"""Prior hyperparameter bundles for the four model variants, with shipped defaults.

Two presets are provided: `simulation_defaults` (the settings used for the
synthetic scenario studies) and `application_defaults` (the elicitation for
the real crowdsourced bird data). Beta priors can also be specified as a
(mean, pseudo-count) pair via `beta_from_mean_count`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError


def beta_from_mean_count(mean: float, count: float) -> tuple[float, float]:
    """(a, b) for a Beta prior with the given mean and prior sample size."""
    if not (0.0 < mean < 1.0):
        raise ConfigError(f"beta mean must be in (0,1), got {mean}")
    if count <= 0:
        raise ConfigError(f"beta pseudo-count must be positive, got {count}")
    return mean * count, (1.0 - mean) * count


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class BaseHypers:
    """Beta priors for the flat model: occurrence, TPR, FPR."""

    a_o: float
    b_o: float
    a_lambda: float
    b_lambda: float
    a_psi: float
    b_psi: float

    def __post_init__(self):
        for name in ("a_o", "b_o", "a_lambda", "b_lambda", "a_psi", "b_psi"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"BaseHypers.{name} must be positive")


@dataclass(frozen=True)
class DpHypers:
    """Gamma(u1, u2) prior on the concentration plus the Beta base measure."""

    u1: float
    u2: float
    a_o: float
    b_o: float

    def __post_init__(self):
        for name in ("u1", "u2", "a_o", "b_o"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"DpHypers.{name} must be positive")


@dataclass(frozen=True)
class HierHypers:
    """Logit-scale normal hierarchy for species-varying expertise.

    phi_lambda_star / phi_psi_star are the *initial* species-level scales;
    with empirical_bayes=True they are replaced by the closed-form maximum
    likelihood value after each species sweep, floored at phi_floor.
    """

    mu_lambda: float
    phi_lambda: float
    mu_psi: float
    phi_psi: float
    phi_lambda_star: float = 1.0
    phi_psi_star: float = 1.0
    empirical_bayes: bool = True
    eb_every: int = 1
    phi_floor: float = 1e-3

    def __post_init__(self):
        for name in ("phi_lambda", "phi_psi", "phi_lambda_star", "phi_psi_star", "phi_floor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"HierHypers.{name} must be positive")
        if self.eb_every < 1:
            raise ConfigError("HierHypers.eb_every must be >= 1")


@dataclass(frozen=True)
class HyperParams:
    """Every prior constant in one bundle; model variants read the parts they use."""

    a_o: float = 2.0
    b_o: float = 98.0
    a_lambda: float = 16.2
    b_lambda: float = 3.8
    a_psi: float = 6.0
    b_psi: float = 1194.0
    u1: float = 0.5
    u2: float = 0.5
    mu_lambda: float = field(default_factory=lambda: _logit(0.81))
    phi_lambda: float = 0.58
    mu_psi: float = field(default_factory=lambda: _logit(0.005))
    phi_psi: float = 0.41
    phi_lambda_star: float = 1.0
    phi_psi_star: float = 1.0
    empirical_bayes: bool = True
    eb_every: int = 1
    phi_floor: float = 1e-3

    def base(self) -> BaseHypers:
        return BaseHypers(self.a_o, self.b_o, self.a_lambda, self.b_lambda, self.a_psi, self.b_psi)

    def dp(self) -> DpHypers:
        return DpHypers(self.u1, self.u2, self.a_o, self.b_o)

    def hier(self) -> HierHypers:
        return HierHypers(
            self.mu_lambda,
            self.phi_lambda,
            self.mu_psi,
            self.phi_psi,
            self.phi_lambda_star,
            self.phi_psi_star,
            self.empirical_bayes,
            self.eb_every,
            self.phi_floor,
        )

    def to_dict(self) -> dict:
        return {
            "a_o": self.a_o, "b_o": self.b_o,
            "a_lambda": self.a_lambda, "b_lambda": self.b_lambda,
            "a_psi": self.a_psi, "b_psi": self.b_psi,
            "u1": self.u1, "u2": self.u2,
            "mu_lambda": self.mu_lambda, "phi_lambda": self.phi_lambda,
            "mu_psi": self.mu_psi, "phi_psi": self.phi_psi,
            "phi_lambda_star": self.phi_lambda_star, "phi_psi_star": self.phi_psi_star,
            "empirical_bayes": self.empirical_bayes, "eb_every": self.eb_every,
            "phi_floor": self.phi_floor,
        }


def simulation_defaults(literal_psi_location: bool = False) -> HyperParams:
    """Priors used for the synthetic scenario studies.

    Occurrence Beta(0.02*100, 0.98*100); flat TPR Beta(0.81*20, 0.19*20); flat
    FPR Beta(0.005*1200, 0.995*1200); hierarchy N(logit(0.81), 0.58^2) /
    N(logit(0.005), 0.41^2); concentration Gamma(0.5, 0.5).

    literal_psi_location=True reproduces the odds-ratio value 0.005/0.995 as
    the psi location instead of logit(0.005) (almost certainly a typo in the
    originating write-up; kept available for sensitivity checks).
    """
    a_o, b_o = beta_from_mean_count(0.02, 100)
    a_l, b_l = beta_from_mean_count(0.81, 20)
    a_p, b_p = beta_from_mean_count(0.005, 1200)
    mu_psi = 0.005 / 0.995 if literal_psi_location else _logit(0.005)
    return HyperParams(
        a_o=a_o, b_o=b_o,
        a_lambda=a_l, b_lambda=b_l,
        a_psi=a_p, b_psi=b_p,
        u1=0.5, u2=0.5,
        mu_lambda=_logit(0.81), phi_lambda=0.58,
        mu_psi=mu_psi, phi_psi=0.41,
    )


def application_defaults() -> HyperParams:
    """Priors elicited for the real crowdsourced bird-annotation data."""
    return HyperParams(
        a_o=2.0, b_o=98.0,
        a_lambda=45.0, b_lambda=5.0,
        a_psi=5.0, b_psi=995.0,
        u1=0.5, u2=0.5,
        mu_lambda=_logit(0.9), phi_lambda=0.48,
        mu_psi=_logit(0.005), phi_psi=0.45,
    )


def with_overrides(hypers: HyperParams, **overrides) -> HyperParams:
    known = set(hypers.to_dict())
    bad = set(overrides) - known
    if bad:
        raise ConfigError(f"unknown hyperparameter(s): {sorted(bad)}")
    return replace(hypers, **overrides)

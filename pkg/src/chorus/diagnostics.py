"""MCMC sample-quality diagnostics: effective sample size and split Gelman-Rubin.

Estimator-only: nothing here mutates chain state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    """Empirical autocorrelation rho_t via FFT, normalized so rho_0 = 1."""
    n = x.size
    x = x - x.mean()
    m = 1
    while m < 2 * n:
        m <<= 1
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n].real / n
    return acov / acov[0]


def ess(series) -> float:
    """Effective sample size n / (1 + 2 sum rho_t).

    The autocorrelation sum is truncated by Geyer's initial monotone positive
    pair sequence: consecutive pairs rho_{2m} + rho_{2m+1} are kept while
    positive, clipped to be non-increasing. A constant series has no
    information about mixing and is defined to have ESS 0.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise DataError(f"ess needs a series of length >= 4, got {x.size}")
    if np.all(x == x[0]):
        return 0.0
    rho = _autocorrelation(x)
    if rho.size % 2 == 1:
        rho = np.concatenate([rho, [0.0]])
    pair = rho[0::2] + rho[1::2]
    kappa = 0.0
    prev = np.inf
    for g in pair:
        if g <= 0.0:
            break
        g = min(g, prev)
        prev = g
        kappa += g
    kappa = 2.0 * kappa - 1.0
    kappa = max(kappa, 1.0 / x.size)  # guard against antithetic overshoot
    return float(min(x.size / kappa, float(x.size)))


def gelman_rubin(chains) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is halved (odd middle element dropped), giving m = 2 * n_chains
    groups of length n; R-hat = sqrt((n-1)/n + B/(n W)) with B/W the between /
    within variances of the split halves.
    """
    chains = [np.asarray(c, dtype=float) for c in chains]
    if len(chains) < 2:
        raise DataError("gelman_rubin needs at least 2 chains")
    if min(c.size for c in chains) < 4:
        raise DataError("gelman_rubin needs chains of length >= 4")
    half = min(c.size for c in chains) // 2
    groups = []
    for c in chains:
        groups.append(c[:half])
        groups.append(c[c.size - half :])
    g = np.asarray(groups)
    n = half
    within = g.var(axis=1, ddof=1)
    w = within.mean()
    if w == 0.0:
        raise DataError("gelman_rubin degenerate: zero within-chain variance in all splits")
    b_over_n = g.mean(axis=1).var(ddof=1)
    return float(np.sqrt((n - 1.0) / n + b_over_n / w))


@dataclass
class DiagnosticsReport:
    """Per-parameter ESS and split R-hat plus the global extremes."""

    ess: dict
    rhat: dict
    min_ess: float
    max_rhat: float
    min_ess_param: str
    max_rhat_param: str

    def to_dict(self) -> dict:
        return {
            "min_ess": self.min_ess,
            "max_rhat": self.max_rhat,
            "min_ess_param": self.min_ess_param,
            "max_rhat_param": self.max_rhat_param,
            "ess": self.ess,
            "rhat": self.rhat,
        }

    def to_text(self) -> str:
        lines = [
            f"min_ess   {self.min_ess:.1f}  ({self.min_ess_param})",
            f"max_rhat  {self.max_rhat:.4f}  ({self.max_rhat_param})",
        ]
        for name in sorted(self.rhat):
            lines.append(f"{name}\tess={self.ess[name]:.1f}\trhat={self.rhat[name]:.4f}")
        return "\n".join(lines) + "\n"


def diagnostics_from_series(series_by_param: dict) -> DiagnosticsReport:
    """series_by_param maps a parameter path to its list of per-chain traces.

    Per-parameter ESS is the sum of per-chain ESS values (chains are
    independent); R-hat is the split statistic across all chains. Parameters
    whose chains are all constant and identical (never-updated prior stubs)
    are skipped.
    """
    ess_d, rhat_d = {}, {}
    for name, chains in series_by_param.items():
        flat = np.concatenate([np.asarray(c, dtype=float) for c in chains])
        if np.all(flat == flat[0]):
            continue
        ess_d[name] = float(sum(ess(c) for c in chains))
        rhat_d[name] = gelman_rubin(chains)
    if not ess_d:
        raise DataError("no non-degenerate parameter series to diagnose")
    min_p = min(ess_d, key=ess_d.get)
    max_p = max(rhat_d, key=rhat_d.get)
    return DiagnosticsReport(
        ess=ess_d,
        rhat=rhat_d,
        min_ess=ess_d[min_p],
        max_rhat=rhat_d[max_p],
        min_ess_param=min_p,
        max_rhat_param=max_p,
    )

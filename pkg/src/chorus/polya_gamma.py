"""Exact Pólya-Gamma PG(1, c) sampling.

A PG(1, c) variate equals J*(1, c/2) / 4, where J* is the tilted Jacobi
variate. J* is drawn by accept-reject from a two-piece proposal -- an inverse
Gaussian truncated to (0, t] and an exponential shifted to (t, inf), with
t = 0.64 -- using the alternating partial sums of the Jacobi density series as
the squeeze, so accepted draws are exact (no series truncation error).

The sampler is vectorized: `polya_gamma` draws one variate per element of `c`,
carrying the rejection bookkeeping across the whole batch. PG(b, c) for b > 1
is deliberately not provided; every Bernoulli observation contributes exactly
one PG(1, .) auxiliary, and sums of those draws are taken where needed.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr

from .errors import ConfigError, InvariantError
from .rng import RngStream

_TRUNC = 0.64
_MAX_SERIES_TERMS = 500
_MAX_REJECTION_ROUNDS = 10_000


def _series_coef(n, x):
    """n-th coefficient a_n(x) of the alternating Jacobi density series."""
    k = (n + 0.5) * np.pi
    out = np.empty_like(x)
    right = x > _TRUNC
    out[right] = k * np.exp(-0.5 * k * k * x[right])
    left = ~right
    xl = x[left]
    # log form: the prefactor (pi x / 2)^{-3/2} overflows for tiny x while the
    # exponential underflows; their product is evaluated jointly.
    out[left] = np.exp(
        np.log(k) - 1.5 * np.log(0.5 * np.pi * xl) - 2.0 * (n + 0.5) ** 2 / xl
    )
    return out


def _exp_piece_mass(z):
    """P(proposal comes from the shifted-exponential piece), i.e. p/(p+q)."""
    t = _TRUNC
    fz = 0.125 * np.pi**2 + 0.5 * z * z
    b = np.sqrt(1.0 / t) * (t * z - 1.0)
    a = -np.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = np.log(fz) + fz * t
    xb = x0 - z + log_ndtr(b)
    xa = x0 + z + log_ndtr(a)
    q_over_p = 4.0 / np.pi * (np.exp(xb) + np.exp(xa))
    return 1.0 / (1.0 + q_over_p)


def _trunc_inverse_gaussian(gen, z):
    """Draw from IG(mu=1/z, lambda=1) truncated to (0, t], element-wise.

    z >= 0; z = 0 is the one-sided stable limit (mu = inf). Two regimes:
    for z < 1/t the untruncated mean exceeds t, so draws come from the
    x^{-3/2} exp(-1/(2x)) kernel on (0, t] tilted by exp(-z^2 x / 2);
    otherwise plain inverse-Gaussian draws are retried until they land in
    the interval.
    """
    t = _TRUNC
    x = np.empty_like(z)

    idx = np.flatnonzero(z < 1.0 / t)  # mu = 1/z > t
    rounds = 0
    while idx.size:
        e1 = gen.exponential(size=idx.size)
        e2 = gen.exponential(size=idx.size)
        ok = e1 * e1 <= 2.0 * e2 / t
        cand = t / (1.0 + t * e1[ok]) ** 2
        zi = z[idx[ok]]
        keep = gen.random(cand.size) <= np.exp(-0.5 * zi * zi * cand)
        x[idx[ok][keep]] = cand[keep]
        done = np.zeros(idx.size, dtype=bool)
        done[np.flatnonzero(ok)[keep]] = True
        idx = idx[~done]
        rounds += 1
        if rounds > _MAX_REJECTION_ROUNDS:
            raise InvariantError("truncated inverse-Gaussian sampler failed to accept")

    idx = np.flatnonzero(z >= 1.0 / t)
    rounds = 0
    while idx.size:
        mu = 1.0 / z[idx]
        y = gen.standard_normal(idx.size) ** 2
        mu_y = mu * y
        cand = mu + 0.5 * mu * mu_y - 0.5 * mu * np.sqrt(4.0 * mu_y + mu_y * mu_y)
        flip = gen.random(idx.size) > mu / (mu + cand)
        cand[flip] = mu[flip] ** 2 / cand[flip]
        ok = cand <= t
        x[idx[ok]] = cand[ok]
        idx = idx[~ok]
        rounds += 1
        if rounds > _MAX_REJECTION_ROUNDS:
            raise InvariantError("inverse-Gaussian retry loop failed to land in (0, t]")

    return x


def _series_accept(gen, x):
    """Alternating-series squeeze; returns a bool mask of accepted candidates."""
    s = _series_coef(0, x)
    y = gen.random(x.size) * s
    accepted = np.zeros(x.size, dtype=bool)
    active = np.ones(x.size, dtype=bool)
    n = 0
    while np.any(active):
        n += 1
        if n > _MAX_SERIES_TERMS:
            raise InvariantError("polya_gamma: series squeeze did not terminate")
        ai = np.flatnonzero(active)
        term = _series_coef(n, x[ai])
        if n % 2 == 1:
            s[ai] -= term
            hit = y[ai] <= s[ai]  # <= so the boundary case y == s accepts
            accepted[ai[hit]] = True
            active[ai[hit]] = False
        else:
            s[ai] += term
            miss = y[ai] > s[ai]
            active[ai[miss]] = False
    return accepted


def polya_gamma(rng: RngStream, c) -> np.ndarray:
    """Draw PG(1, c) for each element of c (PG(1, c) = PG(1, -c)).

    Returns an array of the same shape as c; scalar input gives a 0-d array.
    Every returned value is strictly positive.
    """
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ConfigError("polya_gamma: tilt parameter must be finite")
    z = 0.5 * np.abs(np.ravel(c))
    out = np.empty_like(z)
    gen = rng.gen

    fz = 0.125 * np.pi**2 + 0.5 * z * z
    exp_mass = _exp_piece_mass(z)

    pending = np.arange(z.size)
    rounds = 0
    while pending.size:
        use_exp = gen.random(pending.size) < exp_mass[pending]
        x = np.empty(pending.size)
        if np.any(use_exp):
            x[use_exp] = _TRUNC + gen.exponential(size=int(use_exp.sum())) / fz[pending[use_exp]]
        if np.any(~use_exp):
            x[~use_exp] = _trunc_inverse_gaussian(gen, z[pending[~use_exp]])

        accepted = _series_accept(gen, x)
        out[pending[accepted]] = 0.25 * x[accepted]
        pending = pending[~accepted]
        rounds += 1
        if rounds > _MAX_REJECTION_ROUNDS:
            raise InvariantError("polya_gamma: proposal loop failed to accept")

    return out.reshape(c.shape)


def sample_polya_gamma(rng: RngStream, c: float) -> float:
    """Single exact PG(1, c) draw; value is strictly positive."""
    return float(polya_gamma(rng, float(c)))


def pg_mean(c) -> np.ndarray:
    """Analytic mean of PG(1, c): tanh(c/2) / (2c), with limit 1/4 at c = 0."""
    c = np.asarray(c, dtype=float)
    out = np.full(c.shape, 0.25)
    nz = np.abs(c) > 1e-12
    out[nz] = np.tanh(c[nz] / 2.0) / (2.0 * c[nz])
    return out

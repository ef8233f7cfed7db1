"""Seedable random streams and the sampling kernels shared by every sampler.

All stochastic code in the package draws through an :class:`RngStream` so that
a run is fully determined by (seed, stream_id). Streams are built on the
counter-based Philox generator: distinct stream ids give statistically
independent sequences, and the same (seed, stream_id) always replays the same
draws.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, gammaln

from .errors import ConfigError


class RngStream:
    """Single-owner random stream keyed by (seed, stream_id).

    stream_id may be an int or a tuple of ints (used to key chains, sweep
    cells and replicates independently). Never share one stream between
    concurrently running chains.
    """

    def __init__(self, seed: int, stream_id=0):
        if isinstance(stream_id, int):
            stream_id = (stream_id,)
        self.seed = int(seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, *ids: int) -> "RngStream":
        """Derive an independent stream keyed under this one."""
        return RngStream(self.seed, self.stream_id + tuple(int(i) for i in ids))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _check_positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(arr > 0):
        raise ConfigError(f"{name} must be strictly positive, got {value!r}")


def sample_beta(rng: RngStream, a, b):
    """Draw from Beta(a, b); a and b may be scalars or arrays."""
    _check_positive("beta shape a", a)
    _check_positive("beta shape b", b)
    return rng.gen.beta(a, b)


def sample_gamma(rng: RngStream, shape, rate):
    """Draw from Gamma(shape, rate); parameterized so the mean is shape/rate."""
    _check_positive("gamma shape", shape)
    _check_positive("gamma rate", rate)
    return rng.gen.gamma(shape, 1.0 / np.asarray(rate, dtype=float))


def sample_normal(rng: RngStream, mean, sd):
    _check_positive("normal sd", sd)
    return rng.gen.normal(mean, sd)


def sample_bernoulli(rng: RngStream, p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ConfigError("bernoulli probability outside [0, 1]")
    if p.ndim == 0:
        return int(rng.gen.random() < p)
    return (rng.gen.random(p.shape) < p).astype(np.int8)


def sample_dirichlet(rng: RngStream, alpha):
    _check_positive("dirichlet alpha", alpha)
    return rng.gen.dirichlet(np.asarray(alpha, dtype=float))


def sample_categorical_log(rng: RngStream, log_weights) -> int:
    """Draw an index with probability softmax(log_weights).

    Weights are max-shifted before exponentiation; -inf entries are allowed as
    long as at least one weight is finite.
    """
    lw = np.asarray(log_weights, dtype=float)
    m = np.max(lw)
    if not np.isfinite(m):
        raise ConfigError("sample_categorical_log: no finite log weight")
    w = np.exp(lw - m)
    total = w.sum()
    u = rng.gen.random() * total
    return int(np.searchsorted(np.cumsum(w), u, side="right").clip(0, lw.size - 1))


def logistic(x):
    """1 / (1 + exp(-x)), numerically safe for large |x|."""
    return expit(x)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def log_sigmoid(x):
    """log(logistic(x)) without overflow: -log(1 + exp(-x))."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def log_beta_fn(a, b):
    """ln B(a, b) via log-gamma; accurate to ~1e-12 relative."""
    _check_positive("log_beta_fn a", a)
    _check_positive("log_beta_fn b", b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = gammaln(a) + gammaln(b) - gammaln(a + b)
    return float(out) if out.ndim == 0 else out

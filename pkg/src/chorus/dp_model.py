"""Collapsed Gibbs machinery for the Dirichlet-process Bernoulli mixture over
species-presence vectors.

Mixture weights and per-component occurrence probabilities are integrated out;
the sampler tracks only the recording assignments z, per-component counts, the
concentration gamma (adaptive random-walk Metropolis targeting 0.44
acceptance), and the labels y whose conditional marginalizes the occurrence
probabilities through Beta-count ratios.

Per-component bookkeeping is dense: an emptied slot is filled by swap-remove
from the last slot (z is relabelled with a vector scan), so component indices
stay dense and nothing downstream may attach meaning to a raw index. Beta
ratios are evaluated through precomputed log tables ln(a_o+m), ln(b_o+m),
ln(a_o+b_o+m) for m = 0..N1, exact because every ratio in the collapsed
conditionals is a single-count increment: ln B(a+1, b) - ln B(a, b) = ln a -
ln(a+b).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnnotationTensor
from .errors import InvariantError
from .priors import DpHypers
from .rng import RngStream

_ADAPT_BATCH = 50


class MixtureStats:
    """Counts for the occupied components: sizes n_r and per-species positives."""

    def __init__(self, n_species: int, capacity: int = 16):
        self.n_species = n_species
        self.n = np.zeros(capacity, dtype=np.int64)
        self.pos = np.zeros((capacity, n_species), dtype=np.int64)
        self.n_components = 0

    @property
    def sizes(self) -> np.ndarray:
        return self.n[: self.n_components]

    def positives(self) -> np.ndarray:
        return self.pos[: self.n_components]

    def negatives(self) -> np.ndarray:
        return self.sizes[:, None] - self.positives()

    def _grow(self):
        self.ensure_capacity(self.n.size * 2)

    def ensure_capacity(self, capacity: int) -> None:
        if self.n.size >= capacity:
            return
        extra = capacity - self.n.size
        self.n = np.concatenate([self.n, np.zeros(extra, dtype=np.int64)])
        self.pos = np.vstack([self.pos, np.zeros((extra, self.n_species), dtype=np.int64)])

    def add(self, r: int, y_row: np.ndarray) -> int:
        """Add one recording's label row to component r; r == n_components opens a new one."""
        if r == self.n_components:
            if r == self.n.size:
                self._grow()
            self.n_components += 1
        elif not (0 <= r < self.n_components):
            raise InvariantError(f"component index {r} out of range")
        self.n[r] += 1
        self.pos[r, : self.n_species] += y_row
        return r

    def remove(self, r: int, y_row: np.ndarray) -> int:
        """Remove one recording's row from component r.

        Returns the index of the component that was relocated into slot r by
        swap-remove when r emptied (-1 otherwise); the caller must relabel z.
        """
        if not (0 <= r < self.n_components):
            raise InvariantError(f"component index {r} out of range")
        self.n[r] -= 1
        self.pos[r, : self.n_species] -= y_row
        if self.n[r] < 0 or np.any(self.pos[r, : self.n_species] < 0):
            raise InvariantError("mixture count decremented below zero")
        if self.n[r] == 0:
            last = self.n_components - 1
            if r != last:
                self.n[r] = self.n[last]
                self.pos[r] = self.pos[last]
            self.n[last] = 0
            self.pos[last] = 0
            self.n_components = last
            return last if r != last else -1
        return -1

    def flip_label(self, r: int, k: int, new_value: int):
        self.pos[r, k] += 1 if new_value else -1

    @staticmethod
    def from_assignments(z: np.ndarray, y: np.ndarray) -> "MixtureStats":
        """Recount from scratch; the brute-force oracle for the incremental path."""
        n_components = int(z.max()) + 1 if z.size else 0
        stats = MixtureStats(y.shape[1], capacity=max(16, n_components))
        stats.n_components = n_components
        for r in range(n_components):
            members = z == r
            stats.n[r] = int(members.sum())
            if stats.n[r] == 0:
                raise InvariantError("assignments must use dense component indices")
            stats.pos[r, :] = y[members].sum(axis=0)
        return stats

    def equals(self, other: "MixtureStats") -> bool:
        r = self.n_components
        return (
            r == other.n_components
            and np.array_equal(self.n[:r], other.n[:r])
            and np.array_equal(self.pos[:r], other.pos[:r])
        )


@dataclass
class DpState:
    """Per-chain collapsed-DP state; single-owner, never shared across chains."""

    z: np.ndarray  # (N1,) component index per recording
    gamma: float
    stats: MixtureStats
    y: np.ndarray  # (N1, N3) int8
    s_gamma: float = 1.0
    am_accept_count: int = 0  # accepted proposals in the current 50-iteration batch
    am_batch_counter: int = 0  # proposals in the current batch
    iteration: int = 0  # gamma proposals since chain start (the t in the step rule)
    tables: "LogTables" = None

    def check_consistency(self):
        recount = MixtureStats.from_assignments(self.z, self.y)
        if not self.stats.equals(recount):
            raise InvariantError("incremental mixture stats diverged from recount")


class LogTables:
    """ln(a_o+m), ln(b_o+m), ln(a_o+b_o+m) for m = 0..N1, plus ln m for CRP sizes."""

    def __init__(self, hypers: DpHypers, n_recordings: int):
        m = np.arange(n_recordings + 2, dtype=np.float64)
        self.la = np.log(hypers.a_o + m)
        self.lb = np.log(hypers.b_o + m)
        self.lden = np.log(hypers.a_o + hypers.b_o + m)
        with np.errstate(divide="ignore"):
            self.lsize = np.log(m)
        self.a_o = hypers.a_o
        self.b_o = hypers.b_o


def init_dp_state(
    rng: RngStream,
    tensor: AnnotationTensor,
    hypers: DpHypers,
    y0: np.ndarray,
    s_gamma: float = 1.0,
) -> DpState:
    """All recordings start in one shared component; gamma at its prior mean."""
    n1 = tensor.n_recordings
    z = np.zeros(n1, dtype=np.int64)
    stats = MixtureStats.from_assignments(z, y0) if n1 else MixtureStats(tensor.n_species)
    return DpState(
        z=z,
        gamma=hypers.u1 / hypers.u2,
        stats=stats,
        y=y0.astype(np.int8),
        s_gamma=s_gamma,
        tables=LogTables(hypers, n1),
    )


def remove_recording(state: DpState, i: int) -> None:
    """Detach recording i from its component ahead of an assignment draw."""
    r = int(state.z[i])
    moved = state.stats.remove(r, state.y[i])
    state.z[i] = -1
    if moved >= 0:
        state.z[state.z == moved] = r


def add_recording(state: DpState, i: int, r: int) -> None:
    state.z[i] = state.stats.add(r, state.y[i])


def assignment_log_weights(stats: MixtureStats, gamma: float, y_row: np.ndarray, tables: LogTables):
    """Unnormalized log conditional over the R existing components plus a new one.

    Expects the recording under update to be removed already, so sum(n_r) is
    N1 - 1 and the CRP denominator is gamma + sum(n_r). The Beta-ratio term
    per species is ln(a_o + n+) or ln(b_o + n-) minus ln(a_o + b_o + n_r).
    """
    r = stats.n_components
    n3 = stats.n_species
    denom = np.log(gamma + stats.sizes.sum())
    lw = np.empty(r + 1)
    if r:
        pos = stats.positives()
        neg = stats.negatives()
        picked = np.where(y_row.astype(bool)[None, :], tables.la[pos], tables.lb[neg])
        lw[:r] = (
            tables.lsize[stats.sizes]
            - denom
            + picked.sum(axis=1)
            - n3 * tables.lden[stats.sizes]
        )
    new_term = np.where(y_row.astype(bool), tables.la[0], tables.lb[0]).sum() - n3 * tables.lden[0]
    lw[r] = np.log(gamma) - denom + new_term
    return lw


def sample_assignment(rng: RngStream, state: DpState, i: int) -> int:
    """Remove recording i, draw its component from the collapsed conditional, re-add."""
    remove_recording(state, i)
    lw = assignment_log_weights(state.stats, state.gamma, state.y[i], state.tables)
    # inline max-shifted categorical draw (hot path)
    w = np.exp(lw - lw.max())
    u = rng.gen.random() * w.sum()
    r = int(np.searchsorted(np.cumsum(w), u, side="right").clip(0, lw.size - 1))
    add_recording(state, i, r)
    return r


def assignment_sweep(rng: RngStream, state: DpState) -> None:
    """Sequential scan over recordings via the compiled kernel.

    One pre-drawn uniform per recording; statistically identical to calling
    sample_assignment for each recording in order.
    """
    from .dp_kernels import assignment_sweep_kernel

    n1 = state.z.size
    if n1 == 0:
        return
    state.stats.ensure_capacity(n1 + 1)
    uniforms = rng.gen.random(n1)
    lw_buf = np.empty(n1 + 1)
    t = state.tables
    state.stats.n_components = int(
        assignment_sweep_kernel(
            state.z,
            state.y,
            state.stats.n,
            state.stats.pos,
            state.stats.n_components,
            float(state.gamma),
            t.la,
            t.lb,
            t.lden,
            t.lsize,
            uniforms,
            lw_buf,
        )
    )


def assignment_sweep_reference(rng: RngStream, state: DpState) -> None:
    """Pure-NumPy sweep (one sample_assignment per recording); test oracle."""
    for i in range(state.z.size):
        sample_assignment(rng, state, i)


def gamma_log_accept(gamma: float, gamma_star: float, n_components: int, u1, u2, n1: int) -> float:
    """Uncapped log acceptance ratio of the concentration random-walk move.

    (R + u1 - 1) ln(g*/g) - u2 (g* - g) + sum_i [ln(i-1+g) - ln(i-1+g*)],
    the product evaluated as a log sum to avoid numerical issues.
    """
    i = np.arange(n1, dtype=np.float64)
    return (
        (n_components + u1 - 1.0) * (np.log(gamma_star) - np.log(gamma))
        - u2 * (gamma_star - gamma)
        + float(np.log(i + gamma).sum() - np.log(i + gamma_star).sum())
    )


def update_gamma(rng: RngStream, state: DpState, u1: float, u2: float, adapting: bool = True) -> float:
    """One adaptive random-walk Metropolis move on the concentration.

    Proposals are N(gamma, s_gamma^2); non-positive proposals are rejected
    outright (the target density is zero there). Every 50 proposals, while
    adaptation is on, ln(s_gamma) moves by min(0.01, 1/sqrt(t)) toward the
    0.44 target acceptance rate, with t counting proposals since chain start.
    """
    n1 = state.z.size
    gamma_star = rng.gen.normal(state.gamma, state.s_gamma)
    accepted = False
    if gamma_star > 0.0:
        log_alpha = gamma_log_accept(
            state.gamma, gamma_star, state.stats.n_components, u1, u2, n1
        )
        if log_alpha >= 0.0 or rng.gen.random() < np.exp(log_alpha):
            state.gamma = float(gamma_star)
            accepted = True

    state.iteration += 1
    state.am_batch_counter += 1
    if accepted:
        state.am_accept_count += 1
    if state.am_batch_counter == _ADAPT_BATCH:
        if adapting:
            rate = state.am_accept_count / _ADAPT_BATCH
            step = min(0.01, 1.0 / np.sqrt(state.iteration))
            if rate > 0.44:
                state.s_gamma = float(state.s_gamma * np.exp(step))
            elif rate < 0.44:
                state.s_gamma = float(state.s_gamma * np.exp(-step))
        state.am_batch_counter = 0
        state.am_accept_count = 0
    return state.gamma


def label_sweep(rng: RngStream, state: DpState, ll1: np.ndarray, ll0: np.ndarray) -> None:
    """Marginalized label update, one recording at a time (compiled kernel).

    ll1/ll0 are (N1, N3) vote log likelihoods under y=1 / y=0 (flat or
    species-level expertise). For recording i the two unnormalized log masses
    differ by ln(a_o + n+_{z_i,k,-i}) - ln(b_o + n-_{z_i,k,-i}); counts
    exclude recording i itself but its assignment stays fixed.
    """
    from .dp_kernels import label_sweep_kernel

    n1, n3 = state.y.shape
    if n1 == 0:
        return
    uniforms = rng.gen.random((n1, n3))
    t = state.tables
    label_sweep_kernel(
        state.z, state.y, state.stats.n, state.stats.pos, t.la, t.lb,
        np.ascontiguousarray(ll1), np.ascontiguousarray(ll0), uniforms,
    )


def label_sweep_reference(rng: RngStream, state: DpState, ll1, ll0) -> None:
    """Pure-NumPy label sweep; the oracle the kernel is tested against."""
    tables = state.tables
    n1, n3 = state.y.shape
    uniforms = rng.gen.random((n1, n3))
    for i in range(n1):
        r = int(state.z[i])
        y_i = state.y[i]
        pos_excl = state.stats.pos[r, :n3] - y_i
        neg_excl = (state.stats.n[r] - 1) - pos_excl
        logits = tables.la[pos_excl] - tables.lb[neg_excl] + ll1[i] - ll0[i]
        new_row = (uniforms[i] < 1.0 / (1.0 + np.exp(-logits))).astype(np.int8)
        if not np.array_equal(new_row, y_i):
            state.stats.pos[r, :n3] += new_row - y_i
            state.y[i] = new_row


def label_probability_single(state: DpState, i: int, k: int, ll1_ik: float, ll0_ik: float) -> float:
    """Closed-form eta_{i,k} for one cell given the current state (test hook)."""
    tables = state.tables
    r = int(state.z[i])
    pos_excl = int(state.stats.pos[r, k]) - int(state.y[i, k])
    neg_excl = (int(state.stats.n[r]) - 1) - pos_excl
    logit = tables.la[pos_excl] - tables.lb[neg_excl] + ll1_ik - ll0_ik
    return float(1.0 / (1.0 + np.exp(-logit)))


def component_occurrence_draws(rng: RngStream, stats: MixtureStats, hypers: DpHypers) -> np.ndarray:
    """Optional post-hoc resample of the marginalized per-component occurrence
    probabilities, Beta(a_o + n+, b_o + n-) for each occupied component."""
    pos = stats.positives()
    neg = stats.negatives()
    return rng.gen.beta(hypers.a_o + pos, hypers.b_o + neg)

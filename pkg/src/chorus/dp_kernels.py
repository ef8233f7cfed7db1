"""Compiled inner loops for the two sequential DP sweeps.

Both sweeps are inherently order-dependent (every update reads counts mutated
by the previous one), so they cannot be vectorized; the per-recording work is
instead run through numba. The kernels are pure functions of their array
arguments plus pre-drawn uniforms, so all randomness still flows through the
owning chain's RngStream and replays are deterministic.

Count arrays must be pre-sized to capacity >= n_recordings + 1 (the worst
case is every recording in its own component); the kernels never grow them.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def assignment_sweep_kernel(z, y, n, pos, n_components, gamma, la, lb, lden, lsize, uniforms, lw_buf):
    """Sequential collapsed CRP scan over all recordings; returns the new R.

    For each recording: detach it (swap-remove an emptied slot, relabelling z),
    score every existing component plus a new one by the CRP count term and
    the per-species Beta-count ratios (table lookups), draw the assignment
    from the max-shifted softmax using one pre-drawn uniform, re-attach.
    """
    n1, n3 = y.shape
    r_count = n_components
    denom = np.log(gamma + (n1 - 1.0))
    log_gamma = np.log(gamma)
    for i in range(n1):
        r_old = z[i]
        n[r_old] -= 1
        for k in range(n3):
            pos[r_old, k] -= y[i, k]
        if n[r_old] == 0:
            last = r_count - 1
            if r_old != last:
                n[r_old] = n[last]
                for k in range(n3):
                    pos[r_old, k] = pos[last, k]
                for ii in range(n1):
                    if z[ii] == last:
                        z[ii] = r_old
            n[last] = 0
            for k in range(n3):
                pos[last, k] = 0
            r_count = last

        max_lw = -1.0e300
        for r in range(r_count):
            nr = n[r]
            s = lsize[nr] - denom - n3 * lden[nr]
            for k in range(n3):
                if y[i, k] == 1:
                    s += la[pos[r, k]]
                else:
                    s += lb[nr - pos[r, k]]
            lw_buf[r] = s
            if s > max_lw:
                max_lw = s
        s = log_gamma - denom - n3 * lden[0]
        for k in range(n3):
            s += la[0] if y[i, k] == 1 else lb[0]
        lw_buf[r_count] = s
        if s > max_lw:
            max_lw = s

        total = 0.0
        for r in range(r_count + 1):
            lw_buf[r] = np.exp(lw_buf[r] - max_lw)
            total += lw_buf[r]
        u = uniforms[i] * total
        acc = 0.0
        r_new = r_count
        for r in range(r_count + 1):
            acc += lw_buf[r]
            if u < acc:
                r_new = r
                break
        if r_new == r_count:
            r_count += 1
        z[i] = r_new
        n[r_new] += 1
        for k in range(n3):
            pos[r_new, k] += y[i, k]
    return r_count


@njit(cache=True)
def label_sweep_kernel(z, y, n, pos, la, lb, ll1, ll0, uniforms):
    """Sequential marginalized label update over recordings.

    eta_{i,k} is the sigmoid of ln(a_o + n+_{-i}) - ln(b_o + n-_{-i}) plus the
    vote log-likelihood difference; counts exclude recording i but its
    assignment stays fixed. Component positives are patched as labels flip.
    """
    n1, n3 = y.shape
    for i in range(n1):
        r = z[i]
        n_excl = n[r] - 1
        for k in range(n3):
            pos_excl = pos[r, k] - y[i, k]
            neg_excl = n_excl - pos_excl
            logit = la[pos_excl] - lb[neg_excl] + ll1[i, k] - ll0[i, k]
            p = 1.0 / (1.0 + np.exp(-logit))
            new = 1 if uniforms[i, k] < p else 0
            old = y[i, k]
            if new != old:
                pos[r, k] += new - old
                y[i, k] = new

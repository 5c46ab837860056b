"""Hot numerical loops, numba-jitted when available.

The package keeps two execution paths for every kernel:

* a jitted path (``numba.njit``), used by default when numba imports cleanly;
* the identical pure-numpy/python function, used when numba is missing or
  when the environment variable ``SPAL_PURE_NUMPY=1`` is set.

Both paths consume randomness that was pre-drawn by the caller, so a given
``(config, seed)`` produces the same draw sequence regardless of path; small
floating-point differences between BLAS call orders are possible across
paths, but each path is individually deterministic.  ``benchmarks/
kernel_bench.py`` at the repository root times one against the other.

Kernels never see Python objects: polyhedral sets are encoded as
``(kind, lo, hi, radius)`` with ``kind`` one of the ``SET_*`` codes below,
and objectives as explicit ``(Q, c)`` arrays (the quadratic fast path).
Non-quadratic objectives run through the generic python loops in
``solvers``/``diagnostics`` instead.
"""

from __future__ import annotations

import os

import numpy as np

SET_FREE = 0
SET_BOX = 1
SET_NONNEG = 2
SET_SIMPLEX = 3

ORACLE_EXACT = 0
ORACLE_ADDITIVE = 1
ORACLE_FINITE_SUM = 2

_flag = os.environ.get("SPAL_PURE_NUMPY", "").strip().lower()
NUMBA_DISABLED = _flag not in ("", "0", "false", "no")

if not NUMBA_DISABLED:
    try:
        from numba import njit as _njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - environment without numba
        NUMBA_AVAILABLE = False
else:
    NUMBA_AVAILABLE = False

USING_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def _maybe_jit(fn):
    if USING_NUMBA:
        return _njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------


def _simplex_project_impl(x, radius):
    # Sort-and-threshold projection onto {v >= 0, sum(v) = radius}.
    n = x.shape[0]
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    rho = -1
    for j in range(n):
        if u[j] - (css[j] - radius) / (j + 1.0) > 0.0:
            rho = j
    theta = (css[rho] - radius) / (rho + 1.0)
    out = x - theta
    for i in range(n):
        if out[i] < 0.0:
            out[i] = 0.0
    return out


def _project_impl(x, kind, lo, hi, radius):
    # Euclidean projection for the closed-form set variants.
    if kind == SET_FREE:
        return x.copy()
    if kind == SET_BOX:
        out = x.copy()
        n = x.shape[0]
        for i in range(n):
            if out[i] < lo[i]:
                out[i] = lo[i]
            elif out[i] > hi[i]:
                out[i] = hi[i]
        return out
    if kind == SET_NONNEG:
        out = x.copy()
        for i in range(x.shape[0]):
            if out[i] < 0.0:
                out[i] = 0.0
        return out
    # SET_SIMPLEX
    return _simplex_project_impl(x, radius)


def _dykstra_impl(H, h, x0, tol, max_sweeps):
    """Dykstra's alternating projections onto the halfspace rows of Hx<=h.

    One sweep projects onto every row once, with the usual per-row
    correction memory. Returns (x, residual, sweeps_used, converged_flag);
    ``residual`` is the max constraint violation plus the sweep-to-sweep
    change, the quantity driven below ``tol`` on success.
    """
    m, n = H.shape
    x = x0.copy()
    corr = np.zeros((m, n))
    row_sq = np.zeros(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += H[i, j] * H[i, j]
        row_sq[i] = s
    used = 0
    resid = np.inf
    prev_resid = np.inf
    stall = 0
    x_prev = x.copy()
    while used < max_sweeps:
        for i in range(m):
            if row_sq[i] == 0.0:
                continue
            # w = x + correction_i; project w onto row i's halfspace
            viol = -h[i]
            for j in range(n):
                x[j] += corr[i, j]
                viol += H[i, j] * x[j]
            if viol > 0.0:
                scale = viol / row_sq[i]
                for j in range(n):
                    corr[i, j] = scale * H[i, j]
                    x[j] -= corr[i, j]
            else:
                for j in range(n):
                    corr[i, j] = 0.0
        used += 1
        change = 0.0
        for j in range(n):
            d = x[j] - x_prev[j]
            change += d * d
            x_prev[j] = x[j]
        worst = 0.0
        for i in range(m):
            v = -h[i]
            for j in range(n):
                v += H[i, j] * x[j]
            if v > worst:
                worst = v
        resid = worst + np.sqrt(change)
        if resid <= tol:
            return x, resid, used, True
        # Infeasible systems show a residual that stops decreasing.
        if resid >= prev_resid * (1.0 - 1e-12):
            stall += 1
        else:
            stall = 0
        if stall >= 50:
            return x, resid, used, False
        prev_resid = resid
    return x, resid, used, False


def _pgd_quadratic_impl(
    Q, c0, A, b, rho, mu, z, lam, x_anchor,
    kind, lo, hi, radius, step, tol, max_iter, u0,
):
    """Projected gradient descent on a quadratic-plus-penalty model.

    Minimizes  0.5 u'Qu + c0'u + (rho/2)||Au-b||^2 + (mu/2)||u-z||^2
               + (lam/2)||u-x_anchor||^2   over the encoded set.

    Fixed step; stops when the gradient-mapping norm ||u - u_next||/step
    falls to ``tol``. Returns (u, residual, iterations).
    """
    u = u0.copy()
    it = 0
    resid = np.inf
    while it < max_iter:
        g = Q @ u + c0
        if rho != 0.0 and A.shape[0] > 0:
            r = A @ u - b
            g = g + rho * (A.T @ r)
        if mu != 0.0:
            g = g + mu * (u - z)
        if lam != 0.0:
            g = g + lam * (u - x_anchor)
        u_next = _project_impl(u - step * g, kind, lo, hi, radius)
        diff = u_next - u
        resid = np.sqrt(np.sum(diff * diff)) / step
        u = u_next
        it += 1
        if resid <= tol:
            break
    return u, resid, it


def _alg1_chunk_impl(
    Q, c, A, b, kind, lo, hi, radius,
    tau, eta, beta, mu, rho, s_map,
    oracle_kind, noise, atom_Q, atom_c, atom_idx,
    x, y, z,
    t0, snap_t, trace, trace_stride,
):
    """Run a contiguous chunk of the single-loop smoothed ALM iteration.

    One oracle draw per step (row of ``noise`` / entry of ``atom_idx``).
    ``trace`` has columns (feas, set_violation, stat_est, dual_norm,
    x_minus_z) and one row per *recorded* step. Snapshot of
    (x_t, y_{t+1}, z_t) is taken when the global step index equals
    ``snap_t``. Returns (x, y, z, snap_x, snap_y, snap_z, snapped).
    """
    n = x.shape[0]
    # For the exact oracle, atom_idx is a dummy length-T array acting as the
    # step counter; for additive noise the noise rows set the count.
    steps = noise.shape[0] if oracle_kind == ORACLE_ADDITIVE else atom_idx.shape[0]
    snap_x = np.zeros(n)
    snap_y = np.zeros(y.shape[0])
    snap_z = np.zeros(n)
    snapped = False
    for k in range(steps):
        t = t0 + k
        r = A @ x - b
        y = y + eta * r
        if t == snap_t:
            snap_x = x.copy()
            snap_y = y.copy()
            snap_z = z.copy()
            snapped = True
        # objective gradient: exact mean for measurement, sampled for the step
        gq = Q @ x + c
        gf = gq
        if oracle_kind == ORACLE_ADDITIVE:
            gf = gq + noise[k]
        elif oracle_kind == ORACLE_FINITE_SUM:
            i = atom_idx[k]
            gf = atom_Q[i] @ x + atom_c[i]
        G = gf + A.T @ y + rho * (A.T @ r) + mu * (x - z)
        if t % trace_stride == 0:
            row = t // trace_stride
            w = x - _project_impl(x - s_map * (gq + A.T @ y), kind, lo, hi, radius)
            trace[row, 0] = np.sqrt(np.sum(r * r))
            trace[row, 1] = _violation_impl(x, kind, lo, hi, radius)
            trace[row, 2] = np.sqrt(np.sum(w * w)) / s_map
            trace[row, 3] = np.sqrt(np.sum(y * y))
            xz = x - z
            trace[row, 4] = np.sqrt(np.sum(xz * xz))
        x_next = _project_impl(x - tau * G, kind, lo, hi, radius)
        z = z + beta * (x - z)
        x = x_next
    return x, y, z, snap_x, snap_y, snap_z, snapped


def _alg3_chunk_impl(
    Q, c, A, b, kind, lo, hi, radius,
    tau, eta, beta, mu_center, rho, alpha, s_map,
    oracle_kind, noise, atom_Q, atom_c, atom_idx,
    x, y, z, d,
    t0, snap_t, trace, trace_stride,
):
    """Chunk of the recursive-momentum variant.

    ``d`` is the running gradient estimate; each step consumes one fresh
    ticket (noise row / atom index) evaluated at both the new and the old
    point. Trace columns as in the plain loop.
    """
    n = x.shape[0]
    steps = noise.shape[0] if oracle_kind == ORACLE_ADDITIVE else atom_idx.shape[0]
    snap_x = np.zeros(n)
    snap_y = np.zeros(y.shape[0])
    snap_z = np.zeros(n)
    snapped = False
    for k in range(steps):
        t = t0 + k
        r = A @ x - b
        y = y + eta * r
        if t == snap_t:
            snap_x = x.copy()
            snap_y = y.copy()
            snap_z = z.copy()
            snapped = True
        G = d + A.T @ y + rho * (A.T @ r) + mu_center * (x - z)
        if t % trace_stride == 0:
            row = t // trace_stride
            gq = Q @ x + c
            w = x - _project_impl(x - s_map * (gq + A.T @ y), kind, lo, hi, radius)
            trace[row, 0] = np.sqrt(np.sum(r * r))
            trace[row, 1] = _violation_impl(x, kind, lo, hi, radius)
            trace[row, 2] = np.sqrt(np.sum(w * w)) / s_map
            trace[row, 3] = np.sqrt(np.sum(y * y))
            xz = x - z
            trace[row, 4] = np.sqrt(np.sum(xz * xz))
        x_next = _project_impl(x - tau * G, kind, lo, hi, radius)
        z = z + beta * (x - z)
        # recursive momentum update with a shared fresh ticket at both points
        g_new = Q @ x_next + c
        g_old = Q @ x + c
        if oracle_kind == ORACLE_ADDITIVE:
            g_new = g_new + noise[k]
            g_old = g_old + noise[k]
        elif oracle_kind == ORACLE_FINITE_SUM:
            i = atom_idx[k]
            g_new = atom_Q[i] @ x_next + atom_c[i]
            g_old = atom_Q[i] @ x + atom_c[i]
        d = g_new + (1.0 - alpha) * (d - g_old)
        x = x_next
    return x, y, z, d, snap_x, snap_y, snap_z, snapped


def _violation_impl(x, kind, lo, hi, radius):
    # max(0, max_i (Hx-h)_i) under the set's halfspace reduction.
    worst = 0.0
    if kind == SET_FREE:
        return 0.0
    if kind == SET_BOX:
        for i in range(x.shape[0]):
            if lo[i] - x[i] > worst:
                worst = lo[i] - x[i]
            if x[i] - hi[i] > worst:
                worst = x[i] - hi[i]
        return worst
    if kind == SET_NONNEG:
        for i in range(x.shape[0]):
            if -x[i] > worst:
                worst = -x[i]
        return worst
    # SET_SIMPLEX: nonnegativity rows plus the two sum rows
    s = 0.0
    for i in range(x.shape[0]):
        if -x[i] > worst:
            worst = -x[i]
        s += x[i]
    if s - radius > worst:
        worst = s - radius
    if radius - s > worst:
        worst = radius - s
    return worst


# Rebind the helper names in place so that when numba lazily compiles the
# big kernels, their global lookups of _project_impl/_violation_impl resolve
# to jitted dispatchers (nopython mode cannot call plain python functions).
_simplex_project_impl = _maybe_jit(_simplex_project_impl)
_project_impl = _maybe_jit(_project_impl)
_violation_impl = _maybe_jit(_violation_impl)

# Public callables: jit-compiled when numba is active, plain python otherwise.
# Timing comparisons between the two paths run in separate processes (set
# SPAL_PURE_NUMPY=1 for the plain one); see benchmarks/kernel_bench.py.
simplex_project = _simplex_project_impl
project_encoded = _project_impl
violation_encoded = _violation_impl
dykstra = _maybe_jit(_dykstra_impl)
pgd_quadratic = _maybe_jit(_pgd_quadratic_impl)
alg1_chunk = _maybe_jit(_alg1_chunk_impl)
alg3_chunk = _maybe_jit(_alg3_chunk_impl)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Crank-Nicolson stepping and batched RK4 trajectories.

Signatures and semantics mirror :mod:`retroq._kernels_py` exactly.
"""

import numpy as np
from libc.math cimport floor, fabs


ctypedef double complex cplx

BACKEND = "cython"


cdef double _cabs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef int _factor(const cplx[::1] lhs_diag, cplx lhs_off, cplx[::1] cprime,
                 cplx[::1] inv_denom) noexcept nogil:
    # Thomas forward sweep coefficients for a constant off-diagonal.
    cdef Py_ssize_t n = lhs_diag.shape[0]
    cdef Py_ssize_t k
    cdef cplx denom = lhs_diag[0]
    if _cabs2(denom) < 1e-280:
        return -1
    inv_denom[0] = 1.0 / denom
    cprime[0] = lhs_off * inv_denom[0]
    for k in range(1, n):
        denom = lhs_diag[k] - lhs_off * cprime[k - 1]
        if _cabs2(denom) < 1e-280:
            return -1
        inv_denom[k] = 1.0 / denom
        cprime[k] = lhs_off * inv_denom[k]
    return 0


cdef void _step(cplx* psi, Py_ssize_t n, const cplx* rhs_diag, cplx rhs_off,
                cplx lhs_off, const cplx* cprime, const cplx* inv_denom,
                cplx* work) noexcept nogil:
    cdef Py_ssize_t k
    cdef cplx prev
    # rhs product fused with forward elimination
    prev = (rhs_diag[0] * psi[0] + rhs_off * psi[1]) * inv_denom[0]
    work[0] = prev
    for k in range(1, n - 1):
        prev = (rhs_diag[k] * psi[k] + rhs_off * (psi[k - 1] + psi[k + 1])
                - lhs_off * prev) * inv_denom[k]
        work[k] = prev
    work[n - 1] = (rhs_diag[n - 1] * psi[n - 1] + rhs_off * psi[n - 2]
                   - lhs_off * prev) * inv_denom[n - 1]
    psi[n - 1] = work[n - 1]
    for k in range(n - 2, -1, -1):
        psi[k] = work[k] - cprime[k] * psi[k + 1]


def cn_propagate(psi, lhs_diag, lhs_off, rhs_diag, rhs_off, Py_ssize_t steps):
    """Apply ``steps`` solves of ``L psi' = R psi`` along the last axis."""
    arr = np.array(psi, dtype=np.complex128, order="C", copy=True)
    batch = arr.reshape(-1, arr.shape[arr.ndim - 1])
    cdef cplx[:, ::1] b = batch
    cdef const cplx[::1] ld = np.ascontiguousarray(lhs_diag, dtype=np.complex128)
    cdef const cplx[::1] rd = np.ascontiguousarray(rhs_diag, dtype=np.complex128)
    cdef Py_ssize_t n = b.shape[1]
    cdef cplx lo = lhs_off
    cdef cplx ro = rhs_off
    cdef cplx[::1] cprime = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] inv_denom = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] work = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t r, s
    if _factor(ld, lo, cprime, inv_denom) != 0:
        return None
    with nogil:
        for r in range(b.shape[0]):
            for s in range(steps):
                _step(&b[r, 0], n, &rd[0], ro, lo, &cprime[0], &inv_denom[0], &work[0])
    return arr


def cn_history(psi, lhs_diag, lhs_off, rhs_diag, rhs_off, Py_ssize_t steps):
    """Like :func:`cn_propagate` for one vector, returning all ``steps + 1`` states."""
    cdef Py_ssize_t n = psi.shape[0]
    hist_arr = np.empty((steps + 1, n), dtype=np.complex128)
    hist_arr[0] = psi
    cdef cplx[:, ::1] hist = hist_arr
    cdef const cplx[::1] ld = np.ascontiguousarray(lhs_diag, dtype=np.complex128)
    cdef const cplx[::1] rd = np.ascontiguousarray(rhs_diag, dtype=np.complex128)
    cdef cplx lo = lhs_off
    cdef cplx ro = rhs_off
    cdef cplx[::1] cprime = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] inv_denom = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] work = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t s
    if _factor(ld, lo, cprime, inv_denom) != 0:
        return None
    with nogil:
        for s in range(steps):
            hist[s + 1, :] = hist[s, :]
            _step(&hist[s + 1, 0], n, &rd[0], ro, lo, &cprime[0], &inv_denom[0], &work[0])
    return hist_arr


cdef inline int _velocity(double x, double t, double snap_t0, double snap_dt,
                          const double[:, :] rho, const double[:, :] cur,
                          double x_min, double dx, double threshold,
                          double* v) noexcept nogil:
    cdef Py_ssize_t n_snap = rho.shape[0]
    cdef Py_ssize_t n = rho.shape[1]
    cdef double s, u, alpha, beta, r0, r1, c0, c1, r, c
    cdef Py_ssize_t i0, k0
    if n_snap == 1:
        i0 = 0
        alpha = 0.0
    else:
        s = (t - snap_t0) / snap_dt
        if s < 0.0:
            s = 0.0
        if s > n_snap - 1:
            s = n_snap - 1
        i0 = <Py_ssize_t>floor(s)
        if i0 > n_snap - 2:
            i0 = n_snap - 2
        alpha = s - i0
    u = (x - x_min) / dx
    if not (u >= 0.0 and u <= n - 1):
        return -1
    k0 = <Py_ssize_t>floor(u)
    if k0 > n - 2:
        k0 = n - 2
    beta = u - k0
    r0 = (1.0 - beta) * rho[i0, k0] + beta * rho[i0, k0 + 1]
    c0 = (1.0 - beta) * cur[i0, k0] + beta * cur[i0, k0 + 1]
    if alpha != 0.0:
        r1 = (1.0 - beta) * rho[i0 + 1, k0] + beta * rho[i0 + 1, k0 + 1]
        c1 = (1.0 - beta) * cur[i0 + 1, k0] + beta * cur[i0 + 1, k0 + 1]
        r = (1.0 - alpha) * r0 + alpha * r1
        c = (1.0 - alpha) * c0 + alpha * c1
    else:
        r = r0
        c = c0
    if not (fabs(r) > threshold):
        return -1
    v[0] = c / r
    return 0


def rk4_trajectories(x0, double t0, double dt, Py_ssize_t nsteps,
                     double snap_t0, double snap_dt, rho, cur,
                     double x_min, double dx, double threshold):
    """Integrate ``dx/dt = cur/rho`` for a batch of start points with RK4."""
    cdef const double[:] xs = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[:, :] rh = np.ascontiguousarray(rho, dtype=np.float64)
    cdef const double[:, :] cu = np.ascontiguousarray(cur, dtype=np.float64)
    cdef Py_ssize_t m = xs.shape[0]
    pos_arr = np.empty((m, nsteps + 1), dtype=np.float64)
    sing_arr = np.zeros(m, dtype=np.uint8)
    cdef double[:, :] pos = pos_arr
    cdef unsigned char[:] sing = sing_arr
    cdef Py_ssize_t i, s
    cdef double x, t, k1, k2, k3, k4
    cdef int bad
    with nogil:
        for i in range(m):
            x = xs[i]
            pos[i, 0] = x
            for s in range(nsteps):
                t = t0 + s * dt
                bad = _velocity(x, t, snap_t0, snap_dt, rh, cu, x_min, dx, threshold, &k1)
                if bad == 0:
                    bad = _velocity(x + 0.5 * dt * k1, t + 0.5 * dt, snap_t0, snap_dt,
                                    rh, cu, x_min, dx, threshold, &k2)
                if bad == 0:
                    bad = _velocity(x + 0.5 * dt * k2, t + 0.5 * dt, snap_t0, snap_dt,
                                    rh, cu, x_min, dx, threshold, &k3)
                if bad == 0:
                    bad = _velocity(x + dt * k3, t + dt, snap_t0, snap_dt,
                                    rh, cu, x_min, dx, threshold, &k4)
                if bad == 0:
                    x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                else:
                    sing[i] = 1
                pos[i, s + 1] = x
    return pos_arr, sing_arr.astype(bool)

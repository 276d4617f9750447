"""NumPy/SciPy implementations of the hot kernels.

Used when the compiled extension is unavailable or when
``RETROQ_PURE_PYTHON=1`` is set. Each function matches the signature and
return conventions of its counterpart in ``_kernels.pyx``: solver routines
return ``None`` on a vanishing pivot instead of raising.
"""

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

BACKEND = "python"


def _banded(diag, off):
    n = diag.shape[0]
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, 1:] = off
    ab[0, 0] = 0.0
    ab[1] = diag
    ab[2, :-1] = off
    ab[2, -1] = 0.0
    return ab


def _apply_tridiag(diag, off, psi):
    # psi has the grid along axis 0
    out = diag[:, None] * psi if psi.ndim == 2 else diag * psi
    out[1:] += off * psi[:-1]
    out[:-1] += off * psi[1:]
    return out


def cn_propagate(psi, lhs_diag, lhs_off, rhs_diag, rhs_off, steps):
    arr = np.array(psi, dtype=np.complex128, copy=True)
    shape = arr.shape
    cols = arr.reshape(-1, shape[-1]).T.copy()
    ld = np.asarray(lhs_diag, dtype=np.complex128)
    rd = np.asarray(rhs_diag, dtype=np.complex128)
    ab = _banded(ld, complex(lhs_off))
    try:
        for _ in range(steps):
            rhs = _apply_tridiag(rd, complex(rhs_off), cols)
            cols = solve_banded((1, 1), ab, rhs, check_finite=False)
    except LinAlgError:
        return None
    return np.ascontiguousarray(cols.T).reshape(shape)


def cn_history(psi, lhs_diag, lhs_off, rhs_diag, rhs_off, steps):
    psi = np.asarray(psi, dtype=np.complex128)
    hist = np.empty((steps + 1, psi.shape[0]), dtype=np.complex128)
    hist[0] = psi
    ld = np.asarray(lhs_diag, dtype=np.complex128)
    rd = np.asarray(rhs_diag, dtype=np.complex128)
    ab = _banded(ld, complex(lhs_off))
    try:
        for s in range(steps):
            rhs = _apply_tridiag(rd, complex(rhs_off), hist[s])
            hist[s + 1] = solve_banded((1, 1), ab, rhs, check_finite=False)
    except LinAlgError:
        return None
    return hist


def _velocity(x, t, snap_t0, snap_dt, rho, cur, x_min, dx, threshold):
    n_snap, n = rho.shape
    if n_snap == 1:
        i0, alpha = 0, 0.0
    else:
        s = min(max((t - snap_t0) / snap_dt, 0.0), n_snap - 1)
        i0 = min(int(np.floor(s)), n_snap - 2)
        alpha = s - i0
    u = (x - x_min) / dx
    inside = (u >= 0.0) & (u <= n - 1)
    u = np.where(inside, u, 0.0)
    k0 = np.minimum(np.floor(u).astype(np.intp), n - 2)
    beta = u - k0
    r = (1.0 - beta) * rho[i0, k0] + beta * rho[i0, k0 + 1]
    c = (1.0 - beta) * cur[i0, k0] + beta * cur[i0, k0 + 1]
    if alpha != 0.0:
        r1 = (1.0 - beta) * rho[i0 + 1, k0] + beta * rho[i0 + 1, k0 + 1]
        c1 = (1.0 - beta) * cur[i0 + 1, k0] + beta * cur[i0 + 1, k0 + 1]
        r = (1.0 - alpha) * r + alpha * r1
        c = (1.0 - alpha) * c + alpha * c1
    ok = inside & (np.abs(r) > threshold)
    v = np.divide(c, r, out=np.zeros_like(c), where=ok)
    return v, ok


def rk4_trajectories(x0, t0, dt, nsteps, snap_t0, snap_dt, rho, cur, x_min, dx,
                     threshold):
    x = np.array(x0, dtype=np.float64, copy=True)
    rho = np.asarray(rho, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    pos = np.empty((x.shape[0], nsteps + 1))
    pos[:, 0] = x
    sing = np.zeros(x.shape[0], dtype=bool)
    args = (snap_t0, snap_dt, rho, cur, x_min, dx, threshold)
    for s in range(nsteps):
        t = t0 + s * dt
        k1, ok = _velocity(x, t, *args)
        k2, ok2 = _velocity(x + 0.5 * dt * k1, t + 0.5 * dt, *args)
        k3, ok3 = _velocity(x + 0.5 * dt * k2, t + 0.5 * dt, *args)
        k4, ok4 = _velocity(x + dt * k3, t + dt, *args)
        ok &= ok2 & ok3 & ok4
        x = np.where(ok, x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), x)
        sing |= ~ok
        pos[:, s + 1] = x
    return pos, sing

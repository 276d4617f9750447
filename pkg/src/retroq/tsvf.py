"""Two-boundary (pre- and post-selected) quantities.

A :class:`TwoStateVector` pairs an initial state, fixed at ``t_i`` and
evolved forward, with a final state, fixed at ``t_f`` and evolved backward.
At any intermediate time the weak value of ``A`` is

    Re <f(t)|A|i(t)> / <f(t)|i(t)>

and position-resolved densities replace ``A`` by ``|x><x| D`` for a local
operator ``D`` acting on the initial state. The ``current`` kind is the
exception: it uses the symmetric flux

    j = Re[(phi* (-i d/dx psi) + (i d/dx phi*) psi) / (2 m <f|i>)]

which is the one that closes the continuity equation with ``density`` when
``f != i``. All kinds reduce to the usual single-state densities when
``f = i``, and their Born-weighted average over a complete final basis
(weights ``|<f_k|i>|^2``) is the usual density as well.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qgrid
from .errors import DimMismatch, IncompleteBasis, PostSelectionSingular
from .qcore import Op, StateVec
from .qgrid import FORWARD, BACKWARD, Grid1D, Hamiltonian1D, Wave1P

log = logging.getLogger(__name__)

SINGULAR_OVERLAP = 1e-10
NEGLIGIBLE_OVERLAP = 1e-12
COMPLETENESS_TOL = 1e-10
STEP_TOL = 1e-9

KINDS = ("density", "energy_density", "momentum_density", "current")


@dataclass(frozen=True, eq=False)
class TwoStateVector:
    """Initial state at ``t_i`` and final state at ``t_f`` under one Hamiltonian.

    Grid states need ``dt``, the Crank-Nicolson step; ``t_f - t_i`` and every
    query time must lie on that step lattice. Discrete states evolve exactly.
    """

    initial: Wave1P | StateVec
    final: Wave1P | StateVec
    h: Hamiltonian1D | Op
    t_i: float
    t_f: float
    dt: float | None = None

    def __post_init__(self):
        if self.t_f < self.t_i:
            raise ValueError(f"t_f={self.t_f} precedes t_i={self.t_i}")
        if self.is_grid:
            if not isinstance(self.final, Wave1P) or not isinstance(self.h, Hamiltonian1D):
                raise TypeError("grid two-state vectors need Wave1P boundaries and a Hamiltonian1D")
            if not (self.initial.grid.compatible(self.final.grid)
                    and self.initial.grid.compatible(self.h.grid)):
                raise DimMismatch("boundary states and Hamiltonian are on different grids")
            if self.dt is None or not self.dt > 0:
                raise ValueError("grid two-state vectors need a positive dt")
            self._steps_to(self.t_f)
        else:
            if self.initial.dim != self.final.dim or self.h.dim != self.initial.dim:
                raise DimMismatch("boundary states and Hamiltonian dimensions differ")
            if not self.h.hermitian:
                raise ValueError("Hamiltonian must be Hermitian")
        for name, s in (("initial", self.initial), ("final", self.final)):
            tol = qgrid.NORM_TOL if self.is_grid else 1e-12
            if not s.is_normalized(tol):
                raise ValueError(f"{name} boundary state is not normalized")

    @property
    def is_grid(self) -> bool:
        return isinstance(self.initial, Wave1P)

    @property
    def grid(self) -> Grid1D:
        return self.initial.grid

    @property
    def weight(self) -> float:
        """Quadrature weight of the inner product (dx on grids, 1 otherwise)."""
        return self.grid.dx if self.is_grid else 1.0

    @property
    def n_steps(self) -> int:
        return self._steps_to(self.t_f)

    @property
    def times(self) -> np.ndarray:
        return self.t_i + self.dt * np.arange(self.n_steps + 1)

    def _steps_to(self, t: float) -> int:
        return _lattice_steps(self.t_i, t, self.dt)

    def _check_time(self, t: float) -> None:
        span = max(1.0, abs(self.t_f - self.t_i))
        if not (self.t_i - STEP_TOL * span <= t <= self.t_f + STEP_TOL * span):
            raise ValueError(f"t={t} outside [{self.t_i}, {self.t_f}]")

    @cached_property
    def _spectrum(self):
        vals, vecs = np.linalg.eigh(self.h.entries)
        return vals, vecs

    def _unitary(self, tau: float) -> np.ndarray:
        vals, vecs = self._spectrum
        return (vecs * np.exp(-1j * vals * tau)) @ vecs.conj().T

    def states_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Amplitudes ``(i(t), f(t))``."""
        self._check_time(t)
        if not self.is_grid:
            return (self._unitary(t - self.t_i) @ self.initial.amps,
                    self._unitary(t - self.t_f) @ self.final.amps)
        k = self._steps_to(t)
        if "history" in self.__dict__:
            hi, hf = self.history
            return hi[k], hf[k]
        i_t = qgrid.propagate(self.initial.amps, self.h, self.dt, k, FORWARD)
        f_t = qgrid.propagate(self.final.amps, self.h, self.dt, self.n_steps - k, BACKWARD)
        return i_t, f_t

    @cached_property
    def history(self) -> tuple[np.ndarray, np.ndarray]:
        """``(i, f)`` at every lattice time, each of shape ``(n_steps + 1, n)``."""
        k = self.n_steps
        hi = qgrid.propagate_history(self.initial.amps, self.h, self.dt, k, FORWARD)
        hf = qgrid.propagate_history(self.final.amps, self.h, self.dt, k, BACKWARD)[::-1]
        return hi, np.ascontiguousarray(hf)

    def overlap(self, t: float) -> complex:
        i_t, f_t = self.states_at(t)
        return complex(np.vdot(f_t, i_t) * self.weight)


@dataclass(frozen=True, eq=False)
class WeakField:
    grid: Grid1D
    values: np.ndarray
    kind: str
    t: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise DimMismatch(f"field has shape {v.shape}, grid has {self.grid.n} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("weak field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    @property
    def x_at_min(self) -> float:
        return float(self.grid.x[int(np.argmin(self.values))])

    @property
    def has_negative(self) -> bool:
        return self.min_value < 0

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)

    def summary_line(self) -> str:
        return f"min_value={self.min_value!r} at x={self.x_at_min!r}"

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["x", "value", "kind", "t"])
            t = f"{self.t:.16e}"
            for x, v in zip(self.grid.x, self.values):
                out.writerow([f"{x:.16e}", f"{v:.16e}", self.kind, t])


def read_weak_field(path) -> WeakField:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["x", "value", "kind", "t"]:
        raise ValueError(f"unexpected weak field header {rows[0]}")
    x = np.array([float(r[0]) for r in rows[1:]])
    v = np.array([float(r[1]) for r in rows[1:]])
    return WeakField(Grid1D(x[0], x[1] - x[0], len(x)), v, rows[1][2], float(rows[1][3]))


def _checked_overlap(phi: np.ndarray, psi: np.ndarray, weight: float) -> np.ndarray:
    ov = np.sum(phi.conj() * psi, axis=-1) * weight
    small = np.abs(ov) <= SINGULAR_OVERLAP
    if np.any(small):
        raise PostSelectionSingular(f"|<f|i>| = {np.min(np.abs(ov)):.3g} <= {SINGULAR_OVERLAP}")
    return ov


def local_fields(phi: np.ndarray, psi: np.ndarray, h: Hamiltonian1D, kind: str,
                 ov: np.ndarray | complex | None = None) -> np.ndarray:
    """Real part of ``phi* D psi / <phi|psi>`` for one of :data:`KINDS`.

    ``phi`` may be a batch with shape ``(m, n)``; ``psi`` broadcasts against it.
    """
    dx = h.grid.dx
    if ov is None:
        ov = _checked_overlap(phi, psi, dx)
    ov = np.asarray(ov)[..., None]
    phic = phi.conj()
    if kind == "density":
        num = phic * psi
    elif kind == "energy_density":
        num = phic * h.apply(np.asarray(psi))
    elif kind == "momentum_density":
        num = phic * (-1j) * qgrid.ddx(psi, dx)
    elif kind == "current":
        num = (phic * (-1j) * qgrid.ddx(psi, dx) + 1j * qgrid.ddx(phi, dx).conj() * psi) / (2 * h.mass)
    else:
        raise ValueError(f"unknown field kind {kind!r}; expected one of {KINDS}")
    return (num / ov).real


def standard_density(w: Wave1P, h: Hamiltonian1D, kind: str) -> WeakField:
    """The single-state density ``Re[psi* D psi]`` (``psi`` normalized)."""
    psi = w.amps / w.norm()
    return WeakField(w.grid, local_fields(psi, psi, h, kind, ov=1.0), kind, w.t)


def weak_value(tsv: TwoStateVector, a: Op, t: float) -> float:
    i_t, f_t = tsv.states_at(t)
    if a.dim != i_t.shape[0]:
        raise DimMismatch(f"operator dim {a.dim} vs state dim {i_t.shape[0]}")
    ov = _checked_overlap(f_t, i_t, tsv.weight)
    return float((np.vdot(f_t, a.entries @ i_t) * tsv.weight / ov).real)


def weak_density(tsv: TwoStateVector, kind: str, t: float) -> WeakField:
    if not tsv.is_grid:
        raise TypeError("weak densities need grid states")
    i_t, f_t = tsv.states_at(t)
    return WeakField(tsv.grid, local_fields(f_t, i_t, tsv.h, kind), kind, t)


# Averaging over the unknown final state ---------------------------------------------

def _basis_rows(final_basis, n: int) -> np.ndarray:
    if isinstance(final_basis, np.ndarray):
        rows = np.asarray(final_basis, dtype=np.complex128)
    else:
        rows = np.array([b.amps for b in final_basis], dtype=np.complex128)
    if rows.ndim != 2 or rows.shape[1] != n:
        raise DimMismatch(f"basis shape {rows.shape} does not match dimension {n}")
    return rows


def completeness_residual(rows: np.ndarray, weight: float = 1.0) -> float:
    """max |sum_k |f_k><f_k| w - 1| for basis vectors stored as rows."""
    n = rows.shape[1]
    if rows.shape[0] < n:
        return 1.0
    gram = rows.T @ rows.conj() * weight
    return float(np.max(np.abs(gram - np.eye(n))))


def average_over_final(initial: Wave1P | StateVec, final_basis, what: str | Op, t: float, *,
                       h: Hamiltonian1D | Op, t_i: float, t_f: float,
                       dt: float | None = None):
    """Born-weighted average of weak values (``what`` an :class:`Op`) or weak
    fields (``what`` a kind name) over a complete final basis given at ``t_f``.

    Basis members with ``|<f_k|i>| <= 1e-12`` are skipped.
    """
    grid_mode = isinstance(initial, Wave1P)
    n = initial.grid.n if grid_mode else initial.dim
    weight = initial.grid.dx if grid_mode else 1.0
    rows = _basis_rows(final_basis, n)
    resid = completeness_residual(rows, weight)
    if resid > COMPLETENESS_TOL:
        raise IncompleteBasis(f"resolution-of-identity residual {resid:.3g} > {COMPLETENESS_TOL}")

    i_t, f_t = _evolve_boundaries(initial.amps, rows, h, t_i, t_f, dt, t)
    ov = f_t.conj() @ i_t * weight
    keep = np.abs(ov) > NEGLIGIBLE_OVERLAP
    f_t, ov = f_t[keep], ov[keep]
    w = np.abs(ov) ** 2

    if isinstance(what, Op):
        if what.dim != n:
            raise DimMismatch(f"operator dim {what.dim} vs state dim {n}")
        vals = ((f_t.conj() @ (what.entries @ i_t)) * weight / ov).real
        return float(np.sum(w * vals))
    if not grid_mode:
        raise TypeError("field kinds need grid states")
    fields = local_fields(f_t, i_t, h, what, ov=ov)
    return WeakField(initial.grid, np.sum(w[:, None] * fields, axis=0), what, t)


def _evolve_boundaries(i_amps, f_rows, h, t_i, t_f, dt, t):
    """Initial amplitudes evolved forward to ``t``; final rows evolved back to ``t``."""
    if not t_i <= t <= t_f:
        raise ValueError(f"t={t} outside [{t_i}, {t_f}]")
    if isinstance(h, Op):
        vals, vecs = np.linalg.eigh(h.entries)

        def u(tau):
            return (vecs * np.exp(-1j * vals * tau)) @ vecs.conj().T

        return u(t - t_i) @ i_amps, f_rows @ u(t - t_f).T
    total, k = _lattice_steps(t_i, t_f, dt), _lattice_steps(t_i, t, dt)
    return (qgrid.propagate(i_amps, h, dt, k, FORWARD),
            qgrid.propagate(f_rows, h, dt, total - k, BACKWARD))


def _lattice_steps(t0: float, t: float, dt: float) -> int:
    k = (t - t0) / dt
    kr = round(k)
    if abs(k - kr) > STEP_TOL * max(1.0, abs(k)):
        raise ValueError(f"t={t} is not on the dt={dt} lattice starting at {t0}")
    return int(kr)


def box_modes(grid: Grid1D) -> np.ndarray:
    """Hard-wall box eigenmodes as dx-normalized rows, ordered by energy.

    These are exact eigenvectors of the free discrete Hamiltonian.
    """
    n = grid.n
    k = np.arange(1, n + 1)
    modes = np.sin(np.outer(k, k) * np.pi / (n + 1))
    return modes * np.sqrt(2.0 / ((n + 1) * grid.dx))


def basis_containing(w: Wave1P | StateVec) -> np.ndarray:
    """Orthonormal basis (rows) whose first member is ``w``."""
    if isinstance(w, Wave1P):
        scale = np.sqrt(w.grid.dx)
        v = w.amps * scale
    else:
        scale = 1.0
        v = w.amps
    v = v / np.linalg.norm(v)
    n = v.shape[0]
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(n)]))
    q = q[:, :n]
    q[:, 0] = v  # QR may flip the phase of the first column
    return q.T / scale


def weighted_basis(initial: Wave1P | StateVec, final_basis, *, h, t_i: float, t_f: float,
                   dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Indices and Born weights ``|<f_k|i>|^2`` of basis members above the overlap floor."""
    grid_mode = isinstance(initial, Wave1P)
    weight = initial.grid.dx if grid_mode else 1.0
    rows = _basis_rows(final_basis, initial.grid.n if grid_mode else initial.dim)
    i_f, _ = _evolve_boundaries(initial.amps, rows[:0], h, t_i, t_f, dt, t_f)
    ov = rows.conj() @ i_f * weight
    keep = np.flatnonzero(np.abs(ov) > NEGLIGIBLE_OVERLAP)
    return keep, np.abs(ov[keep]) ** 2


# Continuity --------------------------------------------------------------------------

def density_rate(tsv: TwoStateVector, t: float, dt_probe: float) -> WeakField:
    """Centered time derivative of the weak density at ``t``.

    The two states at ``t`` are stepped by one Crank-Nicolson step of size
    ``dt_probe`` forward and backward.
    """
    if not tsv.is_grid:
        raise TypeError("continuity needs grid states")
    if not tsv.t_i < t < tsv.t_f:
        raise ValueError(f"t={t} must lie strictly inside ({tsv.t_i}, {tsv.t_f})")
    i_t, f_t = tsv.states_at(t)
    pair = np.stack([i_t, f_t])
    fwd = qgrid.propagate(pair, tsv.h, dt_probe, 1, FORWARD)
    bwd = qgrid.propagate(pair, tsv.h, dt_probe, 1, BACKWARD)
    rho_p = local_fields(fwd[1], fwd[0], tsv.h, "density")
    rho_m = local_fields(bwd[1], bwd[0], tsv.h, "density")
    return WeakField(tsv.grid, (rho_p - rho_m) / (2 * dt_probe), "density_rate", t)


def continuity_residual(tsv: TwoStateVector, t: float, dt_probe: float) -> WeakField:
    """``d rho_w/dt + d j_w/dx`` with centered differences in both variables."""
    rate = density_rate(tsv, t, dt_probe)
    i_t, f_t = tsv.states_at(t)
    j = local_fields(f_t, i_t, tsv.h, "current")
    resid = rate.values + qgrid.ddx(j, tsv.grid.dx)
    return WeakField(tsv.grid, resid, "continuity_residual", t)


# Reference Gaussian pair ---------------------------------------------------------------

#: Pre- and post-selected Gaussians used for the continuity and negativity
#: checks. The initial packet is fixed at ``t_i`` and the final one at ``t_f``.
DEMO_PAIR = {
    "initial": {"x0": -1.0, "p0": 1.0, "sigma": 1.0},
    "final": {"x0": 1.0, "p0": -0.5, "sigma": 1.2},
    "mass": 1.0,
    "t_i": 0.0,
    "t_f": 1.0,
}


def gaussian_pair(grid: Grid1D, dt: float, *, initial: dict | None = None,
                  final: dict | None = None, mass: float | None = None,
                  t_i: float | None = None, t_f: float | None = None) -> TwoStateVector:
    """Free-particle two-state vector built from two Gaussian packets.

    Unspecified parameters default to :data:`DEMO_PAIR`.
    """
    ini = dict(DEMO_PAIR["initial"], **(initial or {}))
    fin = dict(DEMO_PAIR["final"], **(final or {}))
    m = DEMO_PAIR["mass"] if mass is None else mass
    ti = DEMO_PAIR["t_i"] if t_i is None else t_i
    tf = DEMO_PAIR["t_f"] if t_f is None else t_f
    h = Hamiltonian1D(grid, m)
    psi = qgrid.make_gaussian(grid, **ini)
    phi = qgrid.make_gaussian(grid, **fin)
    return TwoStateVector(Wave1P(grid, psi.amps, ti), Wave1P(grid, phi.amps, tf), h, ti, tf, dt)


def log_negativity(field: WeakField) -> str:
    line = field.summary_line()
    log.info(line)
    return line

"""Trajectories guided by a two-boundary velocity field.

Given initial and final states, each particle moves with

    v(x, t) = j_w(x, t) / rho_w(x, t)

where ``rho_w`` and ``j_w`` are the weak density and current of
:mod:`retroq.tsvf`. With ``f = i`` this is the ordinary Bohm velocity
``Im(psi'/psi) / m``. Because ``rho_w`` can vanish or turn negative, the
velocity is singular on its nodes; integration holds the position for any
step that touches such a point and flags the trajectory instead of
stopping.

Ensembles draw a final basis state with Born weight ``|<f_k|i>|^2``, then a
start position from the positive part of that member's ``rho_w(t_i)``
(``initial_sampler="weak_density"``) or from ``|psi(t_i)|^2``
(``initial_sampler="born"``), and compare the positions reached at
``t_probe`` with ``|psi(t_probe)|^2``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernels, qgrid, tsvf
from .errors import IncompleteBasis, VelocitySingular
from .qgrid import BACKWARD, Hamiltonian1D, Wave1P
from .tsvf import TwoStateVector

VELOCITY_FLOOR = 1e-10
MIN_EXPECTED = 10
SAMPLERS = ("weak_density", "born")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    tsv_id: int = 0
    flags: frozenset = frozenset()

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.times.shape != self.positions.shape:
            raise ValueError("times and positions differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("trajectory positions must be finite")

    @property
    def singular(self) -> bool:
        return "singular_encountered" in self.flags


def _interp(grid: qgrid.Grid1D, values: np.ndarray, x) -> np.ndarray:
    return np.interp(np.asarray(x, dtype=float), grid.x, values)


def field_snapshots(tsv: TwoStateVector, upto_step: int | None = None):
    """Weak density and current at lattice times ``0..upto_step``; each ``(k + 1, n)``."""
    hi, hf = tsv.history
    k = tsv.n_steps if upto_step is None else upto_step
    hi, hf = hi[: k + 1], hf[: k + 1]
    ov = np.full(k + 1, tsv.overlap(tsv.t_i))
    rho = tsvf.local_fields(hf, hi, tsv.h, "density", ov=ov)
    cur = tsvf.local_fields(hf, hi, tsv.h, "current", ov=ov)
    return rho, cur


def weak_velocity(tsv: TwoStateVector, x, t: float):
    """Velocity at position(s) ``x``; linear interpolation of ``j_w`` and ``rho_w``."""
    if not tsv.is_grid:
        raise TypeError("velocities need grid states")
    rho = _interp(tsv.grid, tsvf.weak_density(tsv, "density", t).values, x)
    cur = _interp(tsv.grid, tsvf.weak_density(tsv, "current", t).values, x)
    if np.any(np.abs(rho) <= VELOCITY_FLOOR):
        raise VelocitySingular(f"|rho_w| <= {VELOCITY_FLOOR} at t={t}")
    v = cur / rho
    return float(v) if np.ndim(v) == 0 else v


def integrate_batch(tsv: TwoStateVector, x0, dt: float, start: float | None = None,
                    stop: float | None = None, snapshots=None):
    """RK4 for many start points. Returns ``(times, positions, singular)``.

    ``positions`` has shape ``(len(x0), len(times))``. Fields are taken from
    the propagation lattice and interpolated linearly in time.
    """
    start = tsv.t_i if start is None else start
    stop = tsv.t_f if stop is None else stop
    if not (tsv.t_i <= start < tsv.t_f) or stop > tsv.t_f + 1e-12 or stop <= start:
        raise ValueError(f"need t_i <= start < stop <= t_f, got start={start}, stop={stop}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    nsteps = int(round((stop - start) / dt))
    if abs(nsteps * dt - (stop - start)) > 1e-9 * max(1.0, stop - start):
        raise ValueError(f"(stop - start) = {stop - start} is not a multiple of dt = {dt}")
    if snapshots is None:
        last = min(tsv.n_steps, int(np.ceil((stop - tsv.t_i) / tsv.dt - 1e-9)))
        snapshots = field_snapshots(tsv, last)
    rho, cur = snapshots
    g = tsv.grid
    pos, sing = kernels.rk4_trajectories(
        np.atleast_1d(np.asarray(x0, dtype=float)), float(start), float(dt), nsteps,
        float(tsv.t_i), float(tsv.dt), rho, cur, float(g.x_min), float(g.dx), VELOCITY_FLOOR)
    times = start + dt * np.arange(nsteps + 1)
    return times, pos, sing


def integrate_trajectory(tsv: TwoStateVector, x0: float, dt: float,
                         start: float | None = None) -> Trajectory:
    times, pos, sing = integrate_batch(tsv, [x0], dt, start)
    flags = frozenset({"singular_encountered"}) if sing[0] else frozenset()
    return Trajectory(times, pos[0], id(tsv), flags)


def write_trajectories(path, times: np.ndarray, positions: np.ndarray, singular: np.ndarray,
                       ids=None) -> None:
    """CSV with header ``traj_id,t,x,singular``."""
    ids = range(positions.shape[0]) if ids is None else ids
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["traj_id", "t", "x", "singular"])
        for tid, row, s in zip(ids, positions, singular):
            flag = int(bool(s))
            for t, x in zip(times, row):
                out.writerow([int(tid), f"{t:.16e}", f"{x:.16e}", flag])


# Ensembles -------------------------------------------------------------------------------

@dataclass
class EnsembleSpec:
    n_traj: int
    initial_sampler: str = "weak_density"
    seed: int = 0
    bins: int = 40
    rk_dt: float | None = None

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.initial_sampler not in SAMPLERS:
            raise ValueError(f"initial_sampler must be one of {SAMPLERS}")


@dataclass
class EnsembleReport:
    chi2: float
    dof: int
    p_value: float
    neg_mass_fraction: float
    n_singular: int
    n_final_states: int
    edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    expected: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "chi2": self.chi2,
            "dof": self.dof,
            "p_value": self.p_value,
            "neg_mass_fraction": self.neg_mass_fraction,
            "n_singular": self.n_singular,
            "n_final_states": self.n_final_states,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def _cell_cdf(grid: qgrid.Grid1D, dens: np.ndarray) -> np.ndarray:
    """Normalized piecewise-linear CDF at the grid points (trapezoid cells)."""
    cells = 0.5 * (dens[1:] + dens[:-1]) * grid.dx
    cdf = np.concatenate([[0.0], np.cumsum(cells)])
    return cdf / cdf[-1]


def sample_positions(grid: qgrid.Grid1D, dens: np.ndarray, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples, uniform within each trapezoid cell."""
    cdf = _cell_cdf(grid, dens)
    return np.interp(rng.random(count), cdf, grid.x)


def quantile_edges(grid: qgrid.Grid1D, dens: np.ndarray, bins: int) -> np.ndarray:
    cdf = _cell_cdf(grid, dens)
    inner = np.interp(np.arange(1, bins) / bins, cdf, grid.x)
    return np.concatenate([[grid.x_min], inner, [grid.x_max]])


def chi_square(positions: np.ndarray, grid: qgrid.Grid1D, dens: np.ndarray, bins: int):
    """Pearson chi-square of positions against a grid density.

    Bins are equal-probability under ``dens``; bins with expected count below
    10 are dropped.
    """
    edges = quantile_edges(grid, dens, bins)
    cdf = _cell_cdf(grid, dens)
    probs = np.diff(np.interp(edges, grid.x, cdf))
    counts, _ = np.histogram(np.clip(positions, grid.x_min, grid.x_max), bins=edges)
    expected = probs * positions.shape[0]
    use = expected >= MIN_EXPECTED
    chi2 = float(np.sum((counts[use] - expected[use]) ** 2 / expected[use]))
    dof = int(use.sum()) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof)), edges, counts, expected


def ensemble_density(spec: EnsembleSpec, initial: Wave1P, final_basis: np.ndarray,
                     h: Hamiltonian1D, t_probe: float, *, t_i: float, t_f: float,
                     dt: float) -> EnsembleReport:
    """Histogram trajectory positions at ``t_probe`` against ``|psi(t_probe)|^2``."""
    grid = initial.grid
    rows = np.asarray(final_basis, dtype=np.complex128)
    resid = tsvf.completeness_residual(rows, grid.dx)
    if resid > tsvf.COMPLETENESS_TOL:
        raise IncompleteBasis(f"resolution-of-identity residual {resid:.3g}")
    if not t_i <= t_probe <= t_f:
        raise ValueError(f"t_probe={t_probe} outside [{t_i}, {t_f}]")
    rk_dt = dt if spec.rk_dt is None else spec.rk_dt

    total = tsvf._lattice_steps(t_i, t_f, dt)
    i_hist = qgrid.propagate_history(initial.amps, h, dt, total)
    ov_all = rows.conj() @ i_hist[-1] * grid.dx
    weights_all = np.abs(ov_all) ** 2
    if abs(weights_all.sum() - 1.0) > 1e-10:
        raise IncompleteBasis(f"Born weights sum to {weights_all.sum():.12f}")
    # members below the post-selection floor carry weight <= 1e-20
    keep = np.flatnonzero(np.abs(ov_all) > tsvf.SINGULAR_OVERLAP)
    weights = weights_all[keep] / weights_all[keep].sum()

    # negative mass of the Born-weighted weak densities at t_i
    f_ti = qgrid.propagate(rows[keep], h, dt, total, BACKWARD)
    rho_ti = tsvf.local_fields(f_ti, i_hist[0], h, "density", ov=ov_all[keep])
    neg = np.sum(weights * np.sum(np.clip(-rho_ti, 0, None), axis=1))
    absm = np.sum(weights * np.sum(np.abs(rho_ti), axis=1))
    neg_mass_fraction = float(neg / absm)

    rng = np.random.default_rng(spec.seed)
    picks = rng.choice(keep.shape[0], size=spec.n_traj, p=weights)
    members, counts = np.unique(picks, return_counts=True)

    probe_step = tsvf._lattice_steps(t_i, t_probe, dt)
    final_pos = np.empty(spec.n_traj)
    n_singular = 0
    filled = 0
    born_ti = np.abs(i_hist[0]) ** 2
    for m, count in zip(members, counts):
        k = keep[m]
        if probe_step == 0:
            start_dens = born_ti if spec.initial_sampler == "born" else np.clip(rho_ti[m], 0, None)
            final_pos[filled:filled + count] = sample_positions(grid, start_dens, count, rng)
            filled += count
            continue
        f_hist = qgrid.propagate_history(rows[k], h, dt, total, BACKWARD)[::-1][: probe_step + 1]
        ov = np.full(probe_step + 1, ov_all[k])
        hi = i_hist[: probe_step + 1]
        rho = tsvf.local_fields(f_hist, hi, h, "density", ov=ov)
        cur = tsvf.local_fields(f_hist, hi, h, "current", ov=ov)
        start_dens = born_ti if spec.initial_sampler == "born" else np.clip(rho[0], 0, None)
        x0 = sample_positions(grid, start_dens, count, rng)
        pos, sing = kernels.rk4_trajectories(
            x0, float(t_i), float(rk_dt), int(round((t_probe - t_i) / rk_dt)), float(t_i),
            float(dt), rho, cur, float(grid.x_min), float(grid.dx), VELOCITY_FLOOR)
        final_pos[filled:filled + count] = pos[:, -1]
        n_singular += int(sing.sum())
        filled += count

    target = np.abs(i_hist[probe_step]) ** 2
    chi2, dof, p, edges, hist, expected = chi_square(final_pos, grid, target, spec.bins)
    return EnsembleReport(chi2, dof, p, neg_mass_fraction, n_singular, int(members.shape[0]),
                          edges, hist, expected, final_pos)

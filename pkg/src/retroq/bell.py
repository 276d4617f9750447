"""Singlet correlations via a retrocausal (zig-zag) sampler.

The sampler draws party 1's outcome at setting ``a`` first, then hands
party 2 the conditioned state ``lambda`` (the one fixed by that later
outcome), and finally samples party 2 locally from ``lambda`` at setting
``b``. Party 2's sampling step never sees ``a``: any dependence on it is
carried by ``lambda`` alone.

Settings are spin axes in the x-z plane, given as angles from z.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import factorize, qcore
from .errors import InsufficientSamples
from .qcore import ProductIndex, StateVec

PAIR = ProductIndex((2, 2))
LAMBDA_RESOLUTION = 1e-9
MIN_BIN = 100
SIGMA_LEVEL = 3.0

OPTIMAL_SETTINGS = (0.0, np.pi / 2, np.pi / 4, 3 * np.pi / 4)


@dataclass(frozen=True)
class Setting:
    angle: float

    def __post_init__(self):
        if not np.isfinite(self.angle):
            raise ValueError("setting angle must be finite")
        object.__setattr__(self, "angle", float(self.angle) % (2 * np.pi))


@dataclass(frozen=True, eq=False)
class RetroRecord:
    setting_1: Setting
    setting_2: Setting
    outcome_1: int
    outcome_2: int
    lam: StateVec

    @property
    def lambda_angle(self) -> float:
        return qcore.bloch_angle(self.lam)


def _angle(s) -> float:
    return s.angle if isinstance(s, Setting) else float(s)


def _conditioned(a: float, outcome_1: int) -> StateVec:
    eig = qcore.spin_state(a, up=outcome_1 > 0)
    state, _ = factorize.conditional_state(qcore.singlet(), PAIR, 0, eig)
    return state


def singlet_correlation_direct(a, b) -> float:
    op = np.kron(qcore.spin_op(_angle(a)).entries, qcore.spin_op(_angle(b)).entries)
    psi = qcore.singlet().amps
    return float(np.vdot(psi, op @ psi).real)


def singlet_correlation_retro(a, b) -> float:
    """E(a, b) assembled from P(o1) and party 2's local expectation on lambda."""
    a, b = _angle(a), _angle(b)
    total = 0.0
    psi = qcore.singlet()
    for o1 in (1, -1):
        eig = qcore.spin_state(a, up=o1 > 0)
        lam, n = factorize.conditional_state(psi, PAIR, 0, eig)
        local = qcore.inner(lam, qcore.apply(qcore.spin_op(b), lam)).real
        total += n**2 * o1 * local
    return float(total)


def singlet_correlation(a, b) -> float:
    direct = singlet_correlation_direct(a, b)
    retro = singlet_correlation_retro(a, b)
    if abs(direct - retro) > 1e-12:
        raise ArithmeticError(f"direct {direct!r} and retro {retro!r} routes disagree")
    return direct


def chsh(a, a_prime, b, b_prime) -> float:
    return (singlet_correlation(a, b) - singlet_correlation(a, b_prime)
            + singlet_correlation(a_prime, b) + singlet_correlation(a_prime, b_prime))


def retro_sample(a, b, rng: np.random.Generator) -> RetroRecord:
    a, b = Setting(_angle(a)), Setting(_angle(b))
    idx = PAIR
    psi = qcore.singlet()
    # M1: Born outcome for party 1 from its reduced statistics
    o1, _, _ = qcore.born_measure(psi, qcore.local_op(qcore.spin_op(a.angle), idx, 0), rng)
    o1 = int(round(o1))
    # M1 -> D -> M2: the conditioned state travels with particle 2
    lam = _conditioned(a.angle, o1)
    o2, _, _ = qcore.born_measure(lam, qcore.spin_op(b.angle), rng)
    return RetroRecord(a, b, o1, int(round(o2)), lam)


@dataclass(frozen=True, eq=False)
class RecordBatch:
    """Column-oriented records; ``lambda_angle`` is the Bloch angle of lambda."""

    a: np.ndarray
    b: np.ndarray
    outcome1: np.ndarray
    outcome2: np.ndarray
    lambda_angle: np.ndarray

    def __len__(self):
        return self.a.shape[0]

    @classmethod
    def concat(cls, batches: Iterable[RecordBatch]) -> RecordBatch:
        batches = list(batches)
        return cls(*(np.concatenate([getattr(bt, f) for bt in batches])
                     for f in ("a", "b", "outcome1", "outcome2", "lambda_angle")))

    @classmethod
    def from_records(cls, records: Sequence[RetroRecord]) -> RecordBatch:
        return cls(np.array([r.setting_1.angle for r in records]),
                   np.array([r.setting_2.angle for r in records]),
                   np.array([r.outcome_1 for r in records], dtype=np.int8),
                   np.array([r.outcome_2 for r in records], dtype=np.int8),
                   np.array([r.lambda_angle for r in records]))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["a", "b", "outcome1", "outcome2", "lambda_angle"])
            for row in zip(self.a, self.b, self.outcome1, self.outcome2, self.lambda_angle):
                out.writerow([f"{row[0]:.16e}", f"{row[1]:.16e}", int(row[2]), int(row[3]),
                              f"{row[4]:.16e}"])

    @classmethod
    def read_csv(cls, path) -> RecordBatch:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2].astype(np.int8),
                   data[:, 3].astype(np.int8), data[:, 4])


def retro_samples(a, b, n: int, rng: np.random.Generator) -> RecordBatch:
    """Vectorized :func:`retro_sample` for ``n`` records at fixed settings."""
    a, b = _angle(a), _angle(b)
    psi = qcore.singlet()
    p_up = float(np.linalg.norm(qcore.partial_inner(qcore.spin_state(a), psi, PAIR, 0).amps) ** 2)
    o1 = np.where(rng.random(n) < p_up, 1, -1).astype(np.int8)
    lam = {o: _conditioned(a, o) for o in (1, -1)}
    b_op = qcore.spin_op(b)
    p2_up = {o: (1 + qcore.inner(s, qcore.apply(b_op, s)).real) / 2 for o, s in lam.items()}
    u = rng.random(n)
    o2 = np.where(u < np.where(o1 > 0, p2_up[1], p2_up[-1]), 1, -1).astype(np.int8)
    angles = np.where(o1 > 0, qcore.bloch_angle(lam[1]), qcore.bloch_angle(lam[-1]))
    return RecordBatch(np.full(n, a % (2 * np.pi)), np.full(n, b % (2 * np.pi)), o1, o2, angles)


def sample_settings(settings_1: Sequence[float], settings_2: Sequence[float], n_per_pair: int,
                    seed: int) -> RecordBatch:
    """Records for every setting pair; each pair draws from its own stream
    ``SeedSequence([seed, stream_id])`` so results do not depend on order."""
    batches = []
    for stream, (a, b) in enumerate(itertools.product(settings_1, settings_2)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, stream]))
        batches.append(retro_samples(a, b, n_per_pair, rng))
    return RecordBatch.concat(batches)


def plant_violation(records: RecordBatch, rng: np.random.Generator) -> RecordBatch:
    """Negative control: resample outcome_2 with setting ``a`` in place of ``b``."""
    p_up = np.empty(len(records))
    for ang in np.unique(records.lambda_angle):
        sel = records.lambda_angle == ang
        lam = StateVec([np.cos(ang / 2), np.sin(ang / 2)])
        for a in np.unique(records.a[sel]):
            cell = sel & (records.a == a)
            p_up[cell] = (1 + qcore.inner(lam, qcore.apply(qcore.spin_op(a), lam)).real) / 2
    o2 = np.where(rng.random(len(records)) < p_up, 1, -1).astype(np.int8)
    return RecordBatch(records.a, records.b, records.outcome1, o2, records.lambda_angle)


def empirical_correlation(records: RecordBatch, a, b) -> tuple[float, float]:
    """Mean of outcome1*outcome2 at settings (a, b) and its standard error."""
    sel = np.isclose(records.a, _angle(a) % (2 * np.pi)) & np.isclose(records.b, _angle(b) % (2 * np.pi))
    prod = records.outcome1[sel].astype(float) * records.outcome2[sel]
    n = prod.shape[0]
    if n == 0:
        raise InsufficientSamples(f"no records at settings ({a}, {b})")
    e = float(prod.mean())
    return e, float(np.sqrt(max(1.0 - e * e, 1e-300) / n))


def empirical_chsh(records: RecordBatch, a, a_prime, b, b_prime) -> tuple[float, float]:
    terms = [(a, b, 1), (a, b_prime, -1), (a_prime, b, 1), (a_prime, b_prime, 1)]
    s, var = 0.0, 0.0
    for x, y, sign in terms:
        e, se = empirical_correlation(records, x, y)
        s += sign * e
        var += se**2
    return s, float(np.sqrt(var))


@dataclass
class LocalityReport:
    max_cond_discrepancy: float
    max_cond_z: float
    max_pair_z: float
    lambda_dependence_z: float
    lambda_distance: float
    n_cells: int
    passed: bool
    z_threshold: float = SIGMA_LEVEL
    chsh: float | None = None

    def to_json(self) -> dict:
        return {
            "chsh": self.chsh,
            "max_cond_discrepancy": self.max_cond_discrepancy,
            "max_cond_z": self.max_cond_z,
            "max_pair_z": self.max_pair_z,
            "lambda_dependence_z": self.lambda_dependence_z,
            "lambda_distance": self.lambda_distance,
            "n_cells": self.n_cells,
            "z_threshold": self.z_threshold,
            "pass": self.passed,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def _lambda_bins(angles: np.ndarray) -> np.ndarray:
    # wrap so that angles just below 2*pi share the bin of 0
    return np.round(angles / LAMBDA_RESOLUTION).astype(np.int64) % round(2 * np.pi / LAMBDA_RESOLUTION)


def locality_check(records: RecordBatch, sigma: float = SIGMA_LEVEL,
                   min_bin: int = MIN_BIN) -> LocalityReport:
    """Test that outcome_2 statistics depend on (b, lambda) only.

    Records are grouped into cells ``(lambda bin, b, a)``. In every cell the
    frequency of ``outcome_2 = +1`` is compared with the local Born
    prediction from ``lambda`` and ``b`` alone; cells sharing a
    ``(lambda, b)`` bin but differing in ``a`` are also compared pairwise.
    Separately, the distribution of lambda bins is compared between every
    pair of ``a`` values to show that lambda does carry ``a``.

    ``sigma`` sets the family-wise level: the two-sided tail of a
    ``sigma``-standard-deviation event is split over all comparisons
    (Sidak), so the whole check has that false-alarm rate.
    """
    a_vals = np.unique(records.a)
    if a_vals.shape[0] < 2:
        raise ValueError("locality check needs at least two settings for party 1")
    lam_bin = _lambda_bins(records.lambda_angle)
    up = records.outcome2 > 0

    max_disc = 0.0
    max_z = 0.0
    max_pair_z = 0.0
    n_cells = 0
    n_pairs = 0
    for lb in np.unique(lam_bin):
        in_lam = lam_bin == lb
        ang = lb * LAMBDA_RESOLUTION
        lam = StateVec([np.cos(ang / 2), np.sin(ang / 2)])
        for b in np.unique(records.b[in_lam]):
            p_pred = (1 + qcore.inner(lam, qcore.apply(qcore.spin_op(b), lam)).real) / 2
            freqs = []
            for a in np.unique(records.a[in_lam]):
                cell = in_lam & (records.b == b) & (records.a == a)
                n = int(cell.sum())
                if n == 0:
                    continue
                if n < min_bin:
                    raise InsufficientSamples(f"cell (lambda={ang:.6f}, b={b:.6f}, a={a:.6f}) "
                                              f"has {n} < {min_bin} records")
                n_cells += 1
                f = float(up[cell].mean())
                freqs.append((f, n))
                disc = abs(f - p_pred)
                se = np.sqrt(max(p_pred * (1 - p_pred), 0.25 / n) / n)
                max_disc = max(max_disc, disc)
                max_z = max(max_z, disc / se)
            for (f1, n1), (f2, n2) in itertools.combinations(freqs, 2):
                pool = (f1 * n1 + f2 * n2) / (n1 + n2)
                se = np.sqrt(max(pool * (1 - pool), 0.25 / (n1 + n2)) * (1 / n1 + 1 / n2))
                max_disc = max(max_disc, abs(f1 - f2))
                n_pairs += 1
                max_pair_z = max(max_pair_z, abs(f1 - f2) / se)

    # lambda carries the setting of party 1
    bins = np.unique(lam_bin)
    lam_z = 0.0
    lam_tv = 0.0
    for a1, a2 in itertools.combinations(a_vals, 2):
        s1, s2 = lam_bin[records.a == a1], lam_bin[records.a == a2]
        n1, n2 = s1.shape[0], s2.shape[0]
        p1 = np.array([(s1 == b).mean() for b in bins])
        p2 = np.array([(s2 == b).mean() for b in bins])
        pool = (p1 * n1 + p2 * n2) / (n1 + n2)
        se = np.sqrt(np.maximum(pool * (1 - pool), 0.25 / (n1 + n2)) * (1 / n1 + 1 / n2))
        lam_z = max(lam_z, float(np.max(np.abs(p1 - p2) / se)))
        lam_tv = max(lam_tv, float(0.5 * np.abs(p1 - p2).sum()))

    z_cut = family_threshold(sigma, n_cells + n_pairs)
    passed = max_z <= z_cut and max_pair_z <= z_cut
    return LocalityReport(float(max_disc), float(max_z), float(max_pair_z), lam_z, lam_tv,
                          n_cells, bool(passed), z_cut)


def family_threshold(sigma: float, n_tests: int) -> float:
    """Per-test two-sided z cut giving a ``sigma``-level false-alarm rate over ``n_tests``."""
    alpha = 2 * stats.norm.sf(sigma)
    per_test = -np.expm1(np.log1p(-alpha) / max(n_tests, 1))
    return float(stats.norm.isf(per_test / 2))

"""Finite-dimensional Hilbert-space algebra.

States and operators are thin immutable wrappers around complex NumPy
arrays. Multi-party indexing is row-major throughout: party 0 is the most
significant index, so ``tensor(a, b).amps[j * b.dim + k] == a[j] * b[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimMismatch, NonHermitian, PartyOutOfRange

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-10


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVec:
    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=np.complex128)
        if amps.ndim > 1:
            raise ValueError(f"amplitudes must be one-dimensional, got shape {amps.shape}")
        amps = amps.reshape(-1)
        if amps.size < 1:
            raise ValueError("a state needs at least one amplitude")
        object.__setattr__(self, "amps", _frozen(amps))

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(float(np.vdot(self.amps, self.amps).real) - 1.0) <= tol

    def normalized(self) -> StateVec:
        nrm = self.norm()
        if nrm == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return StateVec(self.amps / nrm)

    def __repr__(self):
        return f"StateVec(dim={self.dim}, amps={np.array2string(self.amps, precision=4)})"


@dataclass(frozen=True, eq=False)
class Op:
    """Square operator. ``hermitian=None`` detects the flag from the entries."""

    entries: np.ndarray
    hermitian: bool | None = None

    def __post_init__(self):
        m = np.array(self.entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimMismatch(f"operator must be square, got shape {m.shape}")
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if self.hermitian is None:
            object.__setattr__(self, "hermitian", herm_err <= HERMITIAN_TOL)
        elif self.hermitian and herm_err > HERMITIAN_TOL:
            raise NonHermitian(f"max|A - A^dag| = {herm_err:.3g}")
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigenspaces(self) -> list[tuple[float, np.ndarray]]:
        """Eigenvalues (ascending) with orthonormal eigenvector columns.

        Eigenvalues closer than ``DEGENERACY_TOL`` share one eigenspace.
        """
        if not self.hermitian:
            raise NonHermitian("eigenspaces need a Hermitian operator")
        vals, vecs = np.linalg.eigh(self.entries)
        groups: list[list[int]] = []
        for k, v in enumerate(vals):
            if groups and abs(v - vals[groups[-1][0]]) <= DEGENERACY_TOL:
                groups[-1].append(k)
            else:
                groups.append([k])
        return [(float(np.mean(vals[g])), vecs[:, g]) for g in groups]

    def projectors(self) -> list[tuple[float, np.ndarray]]:
        return [(lam, v @ v.conj().T) for lam, v in self.eigenspaces]


@dataclass(frozen=True)
class ProductIndex:
    party_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.party_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"party dimensions must be positive, got {dims}")
        object.__setattr__(self, "party_dims", dims)

    @property
    def n_parties(self) -> int:
        return len(self.party_dims)

    @property
    def flat_dim(self) -> int:
        return int(np.prod(self.party_dims))

    def flat(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.party_dims))

    def multi(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.party_dims))

    def without(self, party: int) -> ProductIndex:
        self.check_party(party)
        return ProductIndex(self.party_dims[:party] + self.party_dims[party + 1:])

    def check_party(self, party: int) -> None:
        if not 0 <= party < self.n_parties:
            raise PartyOutOfRange(f"party {party} not in 0..{self.n_parties - 1}")


def tensor(a: StateVec, b: StateVec) -> StateVec:
    return StateVec(np.kron(a.amps, b.amps))


def tensor_all(states: Sequence[StateVec]) -> StateVec:
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def apply(op: Op, s: StateVec) -> StateVec:
    if op.dim != s.dim:
        raise DimMismatch(f"operator dim {op.dim} vs state dim {s.dim}")
    return StateVec(op.entries @ s.amps)


def inner(a: StateVec, b: StateVec) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.dim != b.dim:
        raise DimMismatch(f"dims {a.dim} and {b.dim} differ")
    return complex(np.vdot(a.amps, b.amps))


def partial_inner(bra: StateVec, joint: StateVec, idx: ProductIndex, party: int) -> StateVec:
    """Contract ``<bra|`` against one party of ``joint``; result is unnormalized."""
    idx.check_party(party)
    if joint.dim != idx.flat_dim:
        raise DimMismatch(f"joint dim {joint.dim} vs index flat dim {idx.flat_dim}")
    if bra.dim != idx.party_dims[party]:
        raise DimMismatch(f"bra dim {bra.dim} vs party {party} dim {idx.party_dims[party]}")
    psi = joint.amps.reshape(idx.party_dims)
    out = np.tensordot(bra.amps.conj(), psi, axes=([0], [party]))
    return StateVec(out.reshape(-1))


def local_op(op: Op, idx: ProductIndex, party: int) -> Op:
    """Embed a single-party operator as ``1 x ... x op x ... x 1``."""
    idx.check_party(party)
    if op.dim != idx.party_dims[party]:
        raise DimMismatch(f"operator dim {op.dim} vs party dim {idx.party_dims[party]}")
    full = np.ones((1, 1), dtype=np.complex128)
    for p, d in enumerate(idx.party_dims):
        full = np.kron(full, op.entries if p == party else np.eye(d))
    return Op(full, hermitian=op.hermitian)


def born_measure(s: StateVec, observable: Op, rng: np.random.Generator):
    """Sample one projective measurement.

    Returns ``(eigenvalue, collapsed_state, probability)``.
    """
    if not observable.hermitian:
        raise NonHermitian("observable must be Hermitian")
    if observable.dim != s.dim:
        raise DimMismatch(f"observable dim {observable.dim} vs state dim {s.dim}")
    branches = []
    for lam, vecs in observable.eigenspaces:
        proj = vecs @ (vecs.conj().T @ s.amps)
        branches.append((lam, proj, float(np.vdot(proj, proj).real)))
    probs = np.array([b[2] for b in branches])
    k = int(rng.choice(len(branches), p=probs / probs.sum()))
    lam, proj, p = branches[k]
    return lam, StateVec(proj / np.sqrt(p)), p


# Standard states and operators ------------------------------------------------

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def basis(dim: int, k: int) -> StateVec:
    v = np.zeros(dim, dtype=np.complex128)
    v[k] = 1.0
    return StateVec(v)


def pauli(name: str) -> Op:
    return Op({"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[name.lower()], hermitian=True)


def spin_op(angle: float) -> Op:
    """Spin component along an axis at ``angle`` from z toward x."""
    return Op(np.cos(angle) * SIGMA_Z + np.sin(angle) * SIGMA_X, hermitian=True)


def spin_state(angle: float, up: bool = True) -> StateVec:
    """Eigenstate of :func:`spin_op` with eigenvalue +1 (``up``) or -1."""
    half = angle / 2 if up else (angle + np.pi) / 2
    return StateVec([np.cos(half), np.sin(half)])


def bloch_angle(s: StateVec) -> float:
    """Angle in [0, 2*pi) of a qubit state's Bloch vector in the x-z plane."""
    a = s.amps / np.linalg.norm(s.amps)
    sx = 2 * (np.conj(a[0]) * a[1]).real
    sz = abs(a[0]) ** 2 - abs(a[1]) ** 2
    return float(np.arctan2(sx, sz) % (2 * np.pi))


def singlet() -> StateVec:
    return StateVec(np.array([0, 1, -1, 0]) / np.sqrt(2))


def ghz(n: int) -> StateVec:
    v = np.zeros(2**n, dtype=np.complex128)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return StateVec(v)


def random_state(dim: int, rng: np.random.Generator) -> StateVec:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVec(v / np.linalg.norm(v))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator) -> Op:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return Op((z + z.conj().T) / 2, hermitian=True)

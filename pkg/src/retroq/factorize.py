"""Individual states for entangled parties, conditioned on later outcomes.

For a joint state and a future measurement result on one party, the other
party's state is the (normalized) partial projection

    psi_2(x') = (1/N) sum_x conj(psi_1(x)) psi(x, x') dx

The conditioning state is conjugated. For real eigenfunctions this is the
same as the unconjugated integral, and for complex ones it is what makes the
reassembled statistics agree with the Born rule.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qcore
from .errors import (
    DimMismatch,
    ImpossibleOutcomeSet,
    IncompleteFutureSpec,
    NonHermitian,
    NullConditional,
)
from .qcore import Op, ProductIndex, StateVec
from .qgrid import Wave1P, Wave2P

NULL_TOL = 1e-12
IMPOSSIBLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ConditionalAssignment:
    party: int
    conditioning_outcomes: tuple[tuple[int, StateVec], ...]
    resulting_state: StateVec | Wave1P
    norm_n: float


def conditional_wave(joint: Wave2P, psi1: Wave1P) -> tuple[Wave1P, float]:
    if not joint.grid_a.compatible(psi1.grid):
        raise DimMismatch("conditioning wave is not on the joint state's first grid")
    raw = (psi1.amps.conj() @ joint.amps) * psi1.grid.dx
    n = float(np.sqrt(np.sum(np.abs(raw) ** 2) * joint.grid_b.dx))
    if n <= NULL_TOL:
        raise NullConditional(f"conditional norm {n:.3g} below {NULL_TOL}")
    return Wave1P(joint.grid_b, raw / n, joint.t), n


def conditional_state(joint: StateVec, idx: ProductIndex, party: int,
                      eigvec: StateVec) -> tuple[StateVec, float]:
    raw = qcore.partial_inner(eigvec, joint, idx, party)
    n = raw.norm()
    if n <= NULL_TOL:
        raise NullConditional(f"conditional norm {n:.3g} below {NULL_TOL}")
    return StateVec(raw.amps / n), n


def _outcome_vector(op: Op, outcome: float) -> StateVec:
    for lam, vecs in op.eigenspaces:
        if abs(lam - outcome) <= qcore.DEGENERACY_TOL * max(1.0, abs(lam)):
            if vecs.shape[1] != 1:
                raise ValueError(f"outcome {outcome} is degenerate; no unique eigenstate")
            return StateVec(vecs[:, 0])
    raise ValueError(f"{outcome} is not an eigenvalue of the observable")


def conditional_assignments(joint: StateVec, idx: ProductIndex,
                            future: Sequence[tuple[int, Op, float]]) -> list[ConditionalAssignment]:
    """One assignment per party, each conditioned on every other party's future outcome.

    ``future`` lists ``(party, observable, outcome_eigenvalue)`` covering each
    party exactly once. Returned assignments are ordered by party.
    """
    parties = sorted(p for p, _, _ in future)
    if parties != list(range(idx.n_parties)):
        raise IncompleteFutureSpec(
            f"future must name each of parties 0..{idx.n_parties - 1} once, got {parties}")
    vecs = {}
    for p, op, outcome in future:
        if not op.hermitian:
            raise NonHermitian(f"observable for party {p} is not Hermitian")
        vecs[p] = _outcome_vector(op, outcome)

    amp = inner_with_product(joint, idx, [vecs[p] for p in range(idx.n_parties)])
    if abs(amp) ** 2 <= IMPOSSIBLE_TOL:
        raise ImpossibleOutcomeSet(f"joint outcome probability {abs(amp) ** 2:.3g}")

    out = []
    for p in range(idx.n_parties):
        psi = joint.amps.reshape(idx.party_dims)
        # contract the highest party first so lower axis numbers stay valid
        for q in reversed(range(idx.n_parties)):
            if q != p:
                psi = np.tensordot(psi, vecs[q].amps.conj(), axes=([q], [0]))
        residual = StateVec(psi.reshape(-1))
        others = tuple((q, vecs[q]) for q in range(idx.n_parties) if q != p)
        out.append(ConditionalAssignment(p, others, residual.normalized(), residual.norm()))
    return out


def assign_individual_states(joint: StateVec, idx: ProductIndex,
                             future: Sequence[tuple[int, Op, float]]) -> list[StateVec]:
    return [a.resulting_state for a in conditional_assignments(joint, idx, future)]


def inner_with_product(joint: StateVec, idx: ProductIndex, bras: Sequence[StateVec]) -> complex:
    """<b_0 x b_1 x ...|joint> by successive single-party contractions."""
    psi = joint
    cur = idx
    for bra in bras:
        psi = qcore.partial_inner(bra, psi, cur, 0)
        cur = cur.without(0) if cur.n_parties > 1 else None
    return complex(psi.amps[0])


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    """Joint outcome distribution from the direct Born rule and from the
    conditional-assignment route. Outcome indices refer to each observable's
    eigenvalues in ascending order."""

    outcomes: list[tuple[int, ...]]
    eigenvalues: list[list[float]]
    p_direct: np.ndarray
    p_retro: np.ndarray

    @property
    def abs_diff(self) -> np.ndarray:
        return np.abs(self.p_direct - self.p_retro)

    @property
    def max_abs_diff(self) -> float:
        return float(self.abs_diff.max())

    def as_dict(self, which: str = "direct") -> dict[tuple[float, ...], float]:
        probs = self.p_direct if which == "direct" else self.p_retro
        return {tuple(self.eigenvalues[p][k] for p, k in enumerate(o)): float(pr)
                for o, pr in zip(self.outcomes, probs)}

    def to_csv(self, path) -> None:
        n = len(self.eigenvalues)
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow([f"outcome_{p}" for p in range(n)] + ["p_direct", "p_retro", "abs_diff"])
            for o, a, b, d in zip(self.outcomes, self.p_direct, self.p_retro, self.abs_diff):
                out.writerow(list(o) + [f"{a:.16e}", f"{b:.16e}", f"{d:.16e}"])


def _retro_probability(joint: StateVec, idx: ProductIndex, bras: Sequence[StateVec]) -> float:
    # Chain conditional states: party 0 is fixed by its outcome, the rest is
    # the conditioned residual, and so on down the parties.
    prob = 1.0
    state, cur = joint, idx
    for bra in bras[:-1]:
        try:
            state, n = conditional_state(state, cur, 0, bra)
        except NullConditional:
            return 0.0
        prob *= n * n
        cur = cur.without(0)
    return prob * abs(qcore.inner(bras[-1], state)) ** 2


def reconstruct_statistics(joint: StateVec, idx: ProductIndex,
                           observables: Sequence[Op]) -> CorrelationTable:
    if len(observables) != idx.n_parties:
        raise DimMismatch(f"{len(observables)} observables for {idx.n_parties} parties")
    for p, op in enumerate(observables):
        if not op.hermitian:
            raise NonHermitian(f"observable for party {p} is not Hermitian")
        if op.dim != idx.party_dims[p]:
            raise DimMismatch(f"observable {p} has dim {op.dim}, party has {idx.party_dims[p]}")
    spaces = [op.eigenspaces for op in observables]
    eigvals = [[lam for lam, _ in sp] for sp in spaces]
    outcomes = list(itertools.product(*[range(len(sp)) for sp in spaces]))

    psi = joint.amps.reshape(idx.party_dims)
    p_direct = np.empty(len(outcomes))
    p_retro = np.empty(len(outcomes))
    for r, combo in enumerate(outcomes):
        # (a) Born rule: apply the product projector to the joint state
        proj = psi
        for p, k in enumerate(combo):
            vecs = spaces[p][k][1]
            proj = np.moveaxis(np.tensordot(vecs @ vecs.conj().T, proj, axes=([1], [p])), 0, p)
        p_direct[r] = float(np.vdot(proj, proj).real)
        # (b) sum of |<f_joint|i>|^2 over product eigenvectors of this outcome set
        columns = [[StateVec(spaces[p][k][1][:, c]) for c in range(spaces[p][k][1].shape[1])]
                   for p, k in enumerate(combo)]
        p_retro[r] = sum(_retro_probability(joint, idx, bras)
                         for bras in itertools.product(*columns))
    return CorrelationTable(outcomes, eigvals, p_direct, p_retro)


def sample_joint_outcomes(joint: StateVec, idx: ProductIndex, observables: Sequence[Op],
                          rng: np.random.Generator, shots: int) -> np.ndarray:
    """Jointly Born-sampled outcome indices, shape ``(shots, n_parties)``.

    This is the sampling route used when future outcomes are not given:
    draw the whole outcome set at once, then condition each party on the rest.
    """
    table = reconstruct_statistics(joint, idx, observables)
    probs = table.p_direct / table.p_direct.sum()
    picks = rng.choice(len(table.outcomes), size=shots, p=probs)
    return np.array(table.outcomes)[picks]

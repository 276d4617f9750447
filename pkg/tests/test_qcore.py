import numpy as np
import pytest
from hypothesis import given, strategies as st

from retroq import qcore
from retroq.errors import DimMismatch, NonHermitian, PartyOutOfRange
from retroq.qcore import Op, ProductIndex, StateVec

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 6)


def test_state_rejects_empty_and_bad_shape():
    with pytest.raises(ValueError):
        StateVec([])
    with pytest.raises(ValueError):
        StateVec(np.eye(2))


def test_state_is_immutable():
    s = StateVec([1, 0])
    with pytest.raises(ValueError):
        s.amps[0] = 2


def test_tensor_basis_product():
    s = qcore.tensor(qcore.basis(2, 0), qcore.basis(2, 1))
    np.testing.assert_array_equal(s.amps, [0, 1, 0, 0])


def test_singlet_from_basis_tensors_is_normalized():
    up, dn = qcore.basis(2, 0), qcore.basis(2, 1)
    s = StateVec((qcore.tensor(up, dn).amps - qcore.tensor(dn, up).amps) / np.sqrt(2))
    assert abs(s.norm() - 1) < 1e-15
    np.testing.assert_allclose(s.amps, qcore.singlet().amps)


@given(seeds, dims, dims)
def test_tensor_norm_is_product(seed, da, db):
    rng = np.random.default_rng(seed)
    a, b = qcore.random_state(da, rng), qcore.random_state(db, rng)
    t = qcore.tensor(a, b)
    assert t.dim == da * db
    assert abs(t.norm() - 1) <= 1e-12
    scaled = qcore.tensor(StateVec(2 * a.amps), StateVec(0.5j * b.amps))
    assert abs(scaled.norm() - 1) <= 1e-12


@given(seeds, dims, dims)
def test_tensor_row_major(seed, da, db):
    rng = np.random.default_rng(seed)
    a, b = qcore.random_state(da, rng), qcore.random_state(db, rng)
    t = qcore.tensor(a, b)
    idx = ProductIndex((da, db))
    for j in range(da):
        for k in range(db):
            assert abs(t.amps[idx.flat((j, k))] - a.amps[j] * b.amps[k]) <= 1e-15


def test_apply_identity_and_pauli():
    s = qcore.random_state(3, np.random.default_rng(1))
    np.testing.assert_array_equal(qcore.apply(Op(np.eye(3)), s).amps, s.amps)
    z = qcore.pauli("z")
    np.testing.assert_array_equal(qcore.apply(z, qcore.basis(2, 0)).amps, [1, 0])
    np.testing.assert_array_equal(qcore.apply(z, qcore.basis(2, 1)).amps, [0, -1])


def test_apply_dim_mismatch():
    with pytest.raises(DimMismatch):
        qcore.apply(qcore.pauli("x"), qcore.basis(3, 0))


@given(seeds, st.integers(1, 8))
def test_unitary_preserves_norm(seed, d):
    rng = np.random.default_rng(seed)
    u = Op(qcore.random_unitary(d, rng))
    s = qcore.random_state(d, rng)
    assert abs(qcore.apply(u, s).norm() - 1) <= 1e-12


def test_inner_examples():
    z0, z1 = qcore.basis(2, 0), qcore.basis(2, 1)
    plus = StateVec([1, 1]).normalized()
    assert qcore.inner(z0, z0) == 1
    assert qcore.inner(z0, z1) == 0
    assert abs(qcore.inner(plus, z0) - 0.70710678118654752) < 1e-15
    with pytest.raises(DimMismatch):
        qcore.inner(z0, qcore.basis(3, 0))


@given(seeds, dims)
def test_inner_conjugate_linear_in_first(seed, d):
    rng = np.random.default_rng(seed)
    a, b = qcore.random_state(d, rng), qcore.random_state(d, rng)
    c = complex(*rng.normal(size=2))
    lhs = qcore.inner(StateVec(c * a.amps), b)
    assert abs(lhs - np.conj(c) * qcore.inner(a, b)) < 1e-12


def test_partial_inner_product_state():
    rng = np.random.default_rng(5)
    psi_b = qcore.random_state(3, rng)
    joint = qcore.tensor(qcore.basis(2, 0), psi_b)
    out = qcore.partial_inner(qcore.basis(2, 0), joint, ProductIndex((2, 3)), 0)
    np.testing.assert_allclose(out.amps, psi_b.amps, atol=1e-15)
    assert abs(out.norm() - 1) < 1e-15


def test_partial_inner_singlet():
    out = qcore.partial_inner(qcore.basis(2, 0), qcore.singlet(), ProductIndex((2, 2)), 0)
    np.testing.assert_allclose(out.amps, [0, 1 / np.sqrt(2)], atol=1e-15)
    assert abs(out.norm() - 1 / np.sqrt(2)) < 1e-15


@pytest.mark.parametrize("party", [0, 1, 2])
def test_partial_inner_matches_loop_oracle(party):
    rng = np.random.default_rng(100 + party)
    dims = (2, 3, 2)
    idx = ProductIndex(dims)
    joint = qcore.random_state(idx.flat_dim, rng)
    bra = qcore.random_state(dims[party], rng)
    rest = idx.without(party)
    expect = np.zeros(rest.flat_dim, dtype=complex)
    for flat in range(idx.flat_dim):
        m = idx.multi(flat)
        others = tuple(v for p, v in enumerate(m) if p != party)
        expect[rest.flat(others)] += np.conj(bra.amps[m[party]]) * joint.amps[flat]
    got = qcore.partial_inner(bra, joint, idx, party)
    assert np.max(np.abs(got.amps - expect)) <= 1e-12


def test_partial_inner_errors():
    idx = ProductIndex((2, 2))
    with pytest.raises(PartyOutOfRange):
        qcore.partial_inner(qcore.basis(2, 0), qcore.singlet(), idx, 2)
    with pytest.raises(DimMismatch):
        qcore.partial_inner(qcore.basis(3, 0), qcore.singlet(), idx, 0)
    with pytest.raises(DimMismatch):
        qcore.partial_inner(qcore.basis(2, 0), qcore.basis(3, 0), idx, 0)


@given(seeds, st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.integers(0, 1))
def test_partial_inner_phase_covariance(seed, ph1, ph2, party):
    rng = np.random.default_rng(seed)
    idx = ProductIndex((2, 3))
    joint = qcore.random_state(6, rng)
    bra = qcore.random_state(idx.party_dims[party], rng)
    a = qcore.partial_inner(bra, joint, idx, party).normalized()
    b = qcore.partial_inner(StateVec(np.exp(1j * ph1) * bra.amps),
                            StateVec(np.exp(1j * ph2) * joint.amps), idx, party).normalized()
    assert abs(qcore.inner(a, b)) ** 2 >= 1 - 1e-12


def test_product_index_bijection():
    idx = ProductIndex((2, 3, 4))
    assert idx.flat_dim == 24
    assert [idx.flat(idx.multi(k)) for k in range(24)] == list(range(24))
    assert idx.multi(5) == (0, 1, 1)
    with pytest.raises(ValueError):
        ProductIndex((2, 0))


def test_op_hermitian_flag():
    assert qcore.pauli("y").hermitian
    assert not Op([[0, 1], [0, 0]]).hermitian
    with pytest.raises(NonHermitian):
        Op([[0, 1], [0, 0]], hermitian=True)


@given(seeds, st.integers(1, 6))
def test_eigendecomposition_reconstructs(seed, d):
    rng = np.random.default_rng(seed)
    a = qcore.random_hermitian(d, rng)
    rebuilt = sum(lam * p for lam, p in a.projectors())
    assert np.max(np.abs(rebuilt - a.entries)) <= 1e-10


def test_degenerate_eigenvalues_merge():
    op = Op(np.diag([1.0, 1.0 + 1e-12, -1.0]))
    spaces = op.eigenspaces
    assert len(spaces) == 2
    assert spaces[1][1].shape[1] == 2


@given(seeds, st.integers(1, 8))
def test_born_weights_sum_to_one(seed, d):
    rng = np.random.default_rng(seed)
    i = qcore.random_state(d, rng)
    basis = qcore.random_unitary(d, rng)
    w = sum(abs(qcore.inner(StateVec(basis[:, k]), i)) ** 2 for k in range(d))
    assert abs(w - 1) <= 1e-12


def test_born_measure_certain_outcome(rng):
    lam, post, p = qcore.born_measure(qcore.basis(2, 0), qcore.pauli("z"), rng)
    assert lam == 1 and p == 1
    np.testing.assert_allclose(post.amps, [1, 0])


def test_born_measure_plus_frequency():
    rng = np.random.default_rng(7)
    plus = StateVec([1, 1]).normalized()
    z = qcore.pauli("z")
    n = 100_000
    ups = sum(qcore.born_measure(plus, z, rng)[0] > 0 for _ in range(n))
    assert abs(ups / n - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_born_measure_deterministic():
    s = qcore.random_state(4, np.random.default_rng(0))
    a = qcore.random_hermitian(4, np.random.default_rng(1))
    r1 = [qcore.born_measure(s, a, np.random.default_rng(9))[0] for _ in range(3)]
    r2 = [qcore.born_measure(s, a, np.random.default_rng(9))[0] for _ in range(3)]
    assert r1 == r2


def test_born_measure_rejects_nonhermitian(rng):
    with pytest.raises(NonHermitian):
        qcore.born_measure(qcore.basis(2, 0), Op([[0, 1], [0, 0]]), rng)


@pytest.mark.parametrize("angle", [0.0, 0.7, np.pi / 2, 2.5])
def test_singlet_same_axis_anticorrelated(angle):
    rng = np.random.default_rng(3)
    idx = ProductIndex((2, 2))
    op1 = qcore.local_op(qcore.spin_op(angle), idx, 0)
    op2 = qcore.local_op(qcore.spin_op(angle), idx, 1)
    for _ in range(200):
        o1, post, _ = qcore.born_measure(qcore.singlet(), op1, rng)
        o2, _, _ = qcore.born_measure(post, op2, rng)
        assert abs(o1 + o2) < 1e-12


def test_spin_state_is_eigenstate():
    for ang in np.linspace(0, 2 * np.pi, 9):
        for up in (True, False):
            s = qcore.spin_state(ang, up)
            out = qcore.apply(qcore.spin_op(ang), s)
            np.testing.assert_allclose(out.amps, (1 if up else -1) * s.amps, atol=1e-14)


def test_ghz_norm():
    g = qcore.ghz(3)
    assert abs(g.norm() - 1) < 1e-15
    assert g.amps[0] == g.amps[7] != 0

import json

import numpy as np
import pytest

from retroq import bohmtraj, qgrid, tsvf
from retroq.bohmtraj import EnsembleSpec, Trajectory
from retroq.errors import IncompleteBasis, VelocitySingular
from retroq.qgrid import Grid1D, Hamiltonian1D, Wave1P
from retroq.tsvf import TwoStateVector


def _self_tsv(w, h, dt, t_f):
    w_f = qgrid.evolve(w, h, dt, int(round(t_f / dt)))
    return TwoStateVector(w, Wave1P(w.grid, w_f.amps, t_f), h, 0.0, t_f, dt)


@pytest.fixture(scope="module")
def oscillator():
    g = Grid1D.span(-10, 10, 401)
    h = qgrid.harmonic(g)
    _, vecs = h.eigenstates(2)
    return g, h, vecs


@pytest.fixture(scope="module")
def boosted():
    g = Grid1D.span(-12, 18, 1501)
    h = Hamiltonian1D(g, 1.5)
    w = qgrid.make_gaussian(g, 0.0, 1.0, 1.0)
    return g, h, _self_tsv(w, h, 0.01, 2.0)


def test_ground_state_velocity_zero(oscillator):
    g, h, vecs = oscillator
    w = Wave1P(g, vecs[:, 0])
    tsv = _self_tsv(w, h, 0.01, 0.5)
    x = np.linspace(-3, 3, 25)
    for t in (0.0, 0.25, 0.5):
        assert np.max(np.abs(bohmtraj.weak_velocity(tsv, x, t))) <= 1e-10


def test_boosted_gaussian_velocity():
    # lattice dispersion gives v = sin(p dx) / (m dx), so resolve p0 well
    g = Grid1D.span(-12, 18, 3001)
    h = Hamiltonian1D(g, 1.5)
    tsv = _self_tsv(qgrid.make_gaussian(g, 0.0, 1.0, 1.0), h, 0.01, 0.1)
    assert abs(bohmtraj.weak_velocity(tsv, 0.0, 0.0) - 1.0 / 1.5) <= 1e-4


def test_velocity_matches_standard_bohm(boosted):
    g, h, tsv = boosted
    t = 1.0
    psi = tsv.states_at(t)[0]
    inner = np.abs(g.x - 1.0 / 1.5 * t) < 4
    v_std = (qgrid.ddx(psi, g.dx) / psi).imag / h.mass
    v = bohmtraj.weak_velocity(tsv, g.x[inner], t)
    assert np.max(np.abs(v - v_std[inner])) <= 1e-8


def test_velocity_singular_at_node(oscillator):
    g, h, vecs = oscillator
    w = Wave1P(g, vecs[:, 1])
    tsv = _self_tsv(w, h, 0.01, 0.1)
    with pytest.raises(VelocitySingular):
        bohmtraj.weak_velocity(tsv, 0.0, 0.0)


def test_velocity_times_density_is_current():
    g = Grid1D.span(-20, 20, 401)
    tsv = tsvf.gaussian_pair(g, 0.01)
    rho = tsvf.weak_density(tsv, "density", 0.5).values
    j = tsvf.weak_density(tsv, "current", 0.5).values
    ok = np.abs(rho) > 1e-3
    v = bohmtraj.weak_velocity(tsv, g.x[ok], 0.5)
    np.testing.assert_allclose(v * rho[ok], j[ok], rtol=1e-12, atol=1e-14)


def test_trajectory_constant_in_static_field(oscillator):
    g, h, vecs = oscillator
    tsv = _self_tsv(Wave1P(g, vecs[:, 0]), h, 0.01, 0.5)
    tr = bohmtraj.integrate_trajectory(tsv, 0.7, 0.01)
    assert np.max(np.abs(tr.positions - 0.7)) <= 1e-10
    assert not tr.singular


def test_trajectory_follows_packet_center(boosted):
    g, h, tsv = boosted
    tr = bohmtraj.integrate_trajectory(tsv, 0.0, 0.01)
    centre = 1.0 / 1.5 * tr.times
    assert np.max(np.abs(tr.positions - centre)) <= 1e-3
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(2.0)


def test_trajectory_rk_step_independent_of_lattice(boosted):
    g, h, tsv = boosted
    a = bohmtraj.integrate_batch(tsv, [0.5], 0.01)[1][0, -1]
    b = bohmtraj.integrate_batch(tsv, [0.5], 0.005)[1][0, -1]
    assert abs(a - b) <= 1e-4


def test_singular_start_is_flagged_and_held(oscillator):
    g, h, vecs = oscillator
    tsv = _self_tsv(Wave1P(g, vecs[:, 1]), h, 0.01, 0.2)
    tr = bohmtraj.integrate_trajectory(tsv, 0.0, 0.01)
    assert tr.singular
    assert "singular_encountered" in tr.flags
    assert np.all(tr.positions == 0.0)


def test_no_crossing_demo_pair():
    g = Grid1D.span(-20, 20, 801)
    tsv = tsvf.gaussian_pair(g, 0.005)
    x0 = np.linspace(-3, 0.5, 8)
    _, pos, sing = bohmtraj.integrate_batch(tsv, x0, 0.005)
    assert not sing.any()
    assert np.min(np.diff(pos, axis=0)) > 0


def test_no_crossing_self_pair(boosted):
    g, h, tsv = boosted
    _, pos, _ = bohmtraj.integrate_batch(tsv, np.linspace(-2, 2, 9), 0.01)
    assert np.min(np.diff(pos, axis=0)) > 0


def _mass_drift(n, dt):
    g = Grid1D.span(-20, 20, n)
    tsv = tsvf.gaussian_pair(g, dt)
    x0 = np.linspace(-0.9, 0.9, 7)
    times, pos, _ = bohmtraj.integrate_batch(tsv, x0, dt)

    def masses(k):
        f = tsvf.weak_density(tsv, "density", times[k]).values
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * g.dx)])
        return np.diff(np.interp(pos[:, k], g.x, cum))

    return np.max(np.abs(masses(-1) - masses(0)))


def test_flow_transports_weak_density():
    # mass between neighbouring trajectories is conserved up to grid error
    coarse, fine = _mass_drift(401, 0.01), _mass_drift(801, 0.005)
    assert fine <= 2e-3
    assert fine < coarse


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 0)
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), np.array([1.0, np.nan]), 0)


def test_integrate_batch_arguments(boosted):
    g, h, tsv = boosted
    with pytest.raises(ValueError):
        bohmtraj.integrate_batch(tsv, [0.0], -0.01)
    with pytest.raises(ValueError):
        bohmtraj.integrate_batch(tsv, [0.0], 0.01, start=2.0)
    with pytest.raises(ValueError):
        bohmtraj.integrate_batch(tsv, [0.0], 0.03)


def test_write_trajectories(tmp_path, boosted):
    g, h, tsv = boosted
    times, pos, sing = bohmtraj.integrate_batch(tsv, [-0.5, 0.5], 0.5)
    p = tmp_path / "t.csv"
    bohmtraj.write_trajectories(p, times, pos, sing)
    lines = p.read_text().splitlines()
    assert lines[0] == "traj_id,t,x,singular"
    assert len(lines) == 1 + 2 * len(times)
    assert lines[-1].startswith("1,")


# Ensembles ---------------------------------------------------------------------

def test_sampler_avoids_nonpositive_density():
    g = Grid1D.span(-5, 5, 101)
    dens = np.clip(np.sin(g.x), 0, None)
    x = bohmtraj.sample_positions(g, dens, 20_000, np.random.default_rng(0))
    assert np.all(np.interp(x, g.x, dens) > 0)


def test_sampler_matches_density():
    g = Grid1D.span(-8, 8, 401)
    dens = np.exp(-g.x**2 / 2)
    x = bohmtraj.sample_positions(g, dens, 50_000, np.random.default_rng(1))
    assert abs(np.mean(x)) <= 3 / np.sqrt(50_000)
    assert abs(np.std(x) - 1) <= 0.01


def test_chi_square_on_exact_samples():
    g = Grid1D.span(-8, 8, 401)
    dens = np.exp(-g.x**2 / 2)
    x = bohmtraj.sample_positions(g, dens, 10_000, np.random.default_rng(2))
    chi2, dof, p, edges, counts, expected = bohmtraj.chi_square(x, g, dens, 40)
    assert dof == 39
    assert p > 0.01
    assert counts.sum() == 10_000


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(0)
    with pytest.raises(ValueError):
        EnsembleSpec(10, initial_sampler="uniform")


def test_ensemble_equivariance():
    g = Grid1D.span(-15, 25, 801)
    h = Hamiltonian1D(g)
    w = qgrid.make_gaussian(g, 0, 1, 1)
    w_f = qgrid.evolve(w, h, 0.01, 400)
    rep = bohmtraj.ensemble_density(EnsembleSpec(10_000, seed=1), w, tsvf.basis_containing(w_f),
                                    h, 2.0, t_i=0.0, t_f=4.0, dt=0.01)
    assert rep.p_value > 0.01
    assert rep.n_singular == 0
    assert rep.neg_mass_fraction <= 1e-12
    assert rep.n_final_states == 1


def test_ensemble_stationary_state(oscillator):
    g, h, vecs = oscillator
    w = Wave1P(g, vecs[:, 0])
    basis = vecs_full = h.eigenstates()[1].T
    reps = [bohmtraj.ensemble_density(EnsembleSpec(5_000, seed=3, bins=20), w, vecs_full, h, tp,
                                      t_i=0.0, t_f=0.5, dt=0.01) for tp in (0.0, 0.5)]
    n = 5_000
    c0, c1 = reps[0].counts, reps[1].counts
    p = c0 / n
    assert np.all(np.abs(c1 - c0) <= 3 * np.sqrt(2 * n * p * (1 - p)) + 1)
    assert basis.shape[0] == g.n


def test_ensemble_incomplete_basis(boosted):
    g, h, tsv = boosted
    with pytest.raises(IncompleteBasis):
        bohmtraj.ensemble_density(EnsembleSpec(10), tsv.initial, tsvf.box_modes(g)[:10], h, 1.0,
                                  t_i=0.0, t_f=2.0, dt=0.01)


def test_ensemble_report_json(tmp_path):
    g = Grid1D.span(-10, 10, 201)
    h = Hamiltonian1D(g)
    w = qgrid.make_gaussian(g, 0, 0.5, 1)
    rep = bohmtraj.ensemble_density(EnsembleSpec(2_000, seed=0, bins=10), w, tsvf.box_modes(g), h,
                                    0.2, t_i=0.0, t_f=0.4, dt=0.01)
    p = tmp_path / "e.json"
    rep.write(p)
    data = json.loads(p.read_text())
    assert {"chi2", "dof", "p_value", "neg_mass_fraction"} <= set(data)
    assert 0 <= data["neg_mass_fraction"] < 1
    again = bohmtraj.ensemble_density(EnsembleSpec(2_000, seed=0, bins=10), w, tsvf.box_modes(g),
                                      h, 0.2, t_i=0.0, t_f=0.4, dt=0.01)
    np.testing.assert_array_equal(again.positions, rep.positions)

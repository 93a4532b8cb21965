import numpy as np
import pytest

from bdcomp import evolve as ev
from bdcomp import kernels, spectral, steady
from bdcomp.kinetics import coexistence
from bdcomp.presets import pattern_params


@pytest.fixture(scope="module")
def branch():
    p = pattern_params(3)
    pts = steady.continue_both(p, 1, n=128, steps=60, ds=1e-3)
    return p, pts


def test_newton_from_constant_state():
    p = pattern_params(3).with_(chi=7.0)
    e = coexistence(p)
    g = ev.Grid1D(3.0, 64)
    sol = steady.newton_solve(p, ev.constant_state(e.u, e.v, g))
    assert sol.iterations <= 2
    assert np.abs(sol.profile.u - e.u).max() < 1e-12


def test_jacobian_matches_finite_differences():
    p = pattern_params(3).with_(chi=11.0)
    e = coexistence(p)
    g = ev.Grid1D(3.0, 24)
    s = ev.cosine_perturbation(e.u, e.v, g, 0.05, 2)
    z = np.concatenate((s.u, s.v))
    for scheme in (kernels.UPWIND, kernels.CENTRAL):
        J = steady.jacobian(p, z, scheme).toarray()
        h = 1e-7
        fd = np.empty_like(J)
        for j in range(z.size):
            dz = np.zeros_like(z)
            dz[j] = h
            fd[:, j] = (steady.full_residual(p, z + dz, scheme) - steady.full_residual(p, z - dz, scheme)) / (2 * h)
        np.testing.assert_allclose(J, fd, atol=2e-5 * np.abs(J).max())


def test_simulation_seeded_newton():
    p = pattern_params(3)
    k0, c0 = spectral.chi_threshold(p)
    p = p.with_(chi=1.05 * c0)
    e = coexistence(p)
    g = ev.Grid1D(3.0, 128)
    tr = ev.simulate(p, ev.cosine_perturbation(e.u, e.v, g, 0.01, 1), 2000, ev.SimOptions(stride=10, tol=1e-6))
    sol = steady.newton_solve(p, tr.final)
    assert sol.residual <= 1e-10 * max(1, sol.profile.u.max())
    assert ev.dominant_mode(sol.profile) == k0
    assert np.ptp(sol.profile.u) > 1e-2
    # quadratic contraction in the last iterations
    h = sol.history
    if len(h) >= 3 and h[-2] > 0:
        assert h[-1] <= 10 * h[-2] ** 2 / max(h[-3], 1e-300) + 1e-13


def test_newton_rejects_nonpositive_guess():
    g = ev.Grid1D(3.0, 32)
    with pytest.raises(steady.NewtonFailure):
        steady.newton_solve(pattern_params(3), ev.constant_state(0.0, 0.3, g))


def test_branch_is_a_pitchfork(branch):
    p, pts = branch
    chi0 = spectral.chi_k_value(p, 1, p.L / 128)
    by_s = {round(q.s, 9): q.chi for q in pts}
    for q in pts:
        if q.s > 0 and q.s <= 0.02:
            other = by_s[round(-q.s, 9)]
            assert abs(q.chi - other) <= 1e-6 * abs(q.chi)
    assert all(q.residual <= 1e-10 for q in pts)
    assert min(q.chi for q in pts) == pytest.approx(chi0, rel=1e-12)


def test_branch_direction_and_fit(branch):
    p, pts = branch
    chi0 = spectral.chi_k_value(p, 1, p.L / 128)
    coef, sm = steady.fit_branch(pts, chi0, 0.05, 2)
    assert abs(coef[0]) <= 1e-3 * abs(coef[1]) * sm
    K2 = spectral.weakly_nonlinear(p).K2
    assert np.sign(coef[1]) == np.sign(K2)
    # a quartic fit over a short window recovers the analytic value closely
    c4, _ = steady.fit_branch(pts, chi0, 0.016, 4)
    assert c4[1] == pytest.approx(K2, rel=0.02)


def test_eigenvector_ratio(branch):
    p, pts = branch
    Q = spectral.mode_analysis(p, pts[0].chi, 1).Q_k
    q = min((q for q in pts if q.s > 0), key=lambda q: q.s)
    assert q.amplitude / q.v_amplitude == pytest.approx(Q, rel=0.05)


def test_grid_refinement(branch):
    p, pts = branch
    c1, _ = steady.fit_branch(pts, spectral.chi_k_value(p, 1, p.L / 128))
    pts2 = steady.continue_both(p, 1, n=256, steps=60, ds=1e-3)
    c2, _ = steady.fit_branch(pts2, spectral.chi_k_value(p, 1, p.L / 256))
    assert c2[1] == pytest.approx(c1[1], rel=0.1)


def test_arclength_steps_bounded(branch):
    _, pts = branch
    s = np.array([q.s for q in pts])
    assert np.all(np.diff(s) <= 1e-3 + 1e-15)
    assert np.all(np.diff(s) > 0)


def test_constant_branch_away_from_threshold():
    # far from any bifurcation value a zero-amplitude seed stays on the constant branch
    p = pattern_params(3).with_(chi=5.0)
    e = coexistence(p)
    g = ev.Grid1D(3.0, 64)
    s = ev.cosine_perturbation(e.u, e.v, g, 1e-3, 1)
    sol = steady.newton_solve(p, s, tol=1e-13)
    assert np.abs(sol.profile.u - e.u).max() < 1e-12


def test_branch_csv(tmp_path, branch):
    _, pts = branch
    path = tmp_path / "b.csv"
    steady.write_branch_csv(path, pts)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,chi,amplitude,residual"
    assert len(lines) == len(pts) + 1

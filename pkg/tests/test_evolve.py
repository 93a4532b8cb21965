import json

import numpy as np
import pytest

from bdcomp import evolve as ev
from bdcomp import kernels, spectral
from bdcomp.kinetics import coexistence, compute_equilibria
from bdcomp.presets import spike_params, pattern_params


def test_grid():
    g = ev.Grid1D(3.0, 256)
    assert g.n * g.dx == pytest.approx(3.0, rel=1e-14)
    assert g.x[0] == pytest.approx(g.dx / 2)
    with pytest.raises(ValueError):
        ev.Grid1D(3.0, 8)


@pytest.mark.parametrize("p", [pattern_params(3).with_(chi=12.0), spike_params()], ids=["pattern_params", "spike_params"])
def test_equilibria_are_discrete_fixed_points(p):
    g = ev.Grid1D(p.L, 64)
    for e in compute_equilibria(p):
        s = ev.constant_state(e.u, e.v, g)
        out = ev.step(p, s, 0.1)
        assert np.abs(out.u - s.u).max() <= 1e-13
        assert np.abs(out.v - s.v).max() <= 1e-13


def test_no_flux_at_boundaries():
    p = spike_params()
    g = ev.Grid1D(p.L, 128)
    s = ev.cosine_perturbation(0.9, 0.5, g, 0.3, 3)
    F = ev.face_fluxes(p, s)
    assert F.size == g.n + 1
    assert F[0] == 0.0 and F[-1] == 0.0


def test_transport_conserves_mass():
    # With the reaction removed, one step conserves the integral of u exactly.
    p = spike_params()
    g = ev.Grid1D(p.L, 128)
    s = ev.cosine_perturbation(0.9, 0.5, g, 0.3, 2)
    be = kernels.get_backend()
    prm, ph = kernels.pack_params(p, g.dx), kernels.pack_phi(p.phi)
    ru, _ = be.explicit(s.u, s.v, prm, ph)
    f = (-1 + 1 / (p.a1 + p.b1 * s.u + p.c1 * s.v)) * s.u
    dt = 0.01
    u1 = be.solve_diffusion(p.D1 * dt / g.dx**2, s.u + dt * (ru - f))
    assert u1.sum() == pytest.approx(s.u.sum(), rel=1e-13)


def test_first_order_in_time():
    p = pattern_params(3).with_(chi=11.0)
    g = ev.Grid1D(3.0, 64)
    e = coexistence(p)
    s = ev.cosine_perturbation(e.u, e.v, g, 0.05, 1)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        one = ev.step(p, s, dt)
        two = ev.step(p, ev.step(p, s, dt / 2), dt / 2)
        errs.append(np.abs(one.u - two.u).max())
    # local splitting error is O(dt^2)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)


def test_positivity_error_on_huge_step():
    p = spike_params().with_(chi=3000.0)
    g = ev.Grid1D(p.L, 256)
    s = ev.cosine_perturbation(0.9, 0.5, g, 0.45, 8)
    with pytest.raises(ev.PositivityError):
        ev.step(p, s, 5.0)


@pytest.mark.parametrize("k,extra,expected", [(3, None, 3), (2, (5, 0.05), 2)])
def test_dominant_mode(k, extra, expected):
    g = ev.Grid1D(4.0, 128)
    u = 0.7 + 0.1 * np.cos(k * np.pi * g.x / g.L)
    if extra:
        u = u + extra[1] * np.cos(extra[0] * np.pi * g.x / g.L)
    assert ev.dominant_mode(ev.StateField(0, u, np.ones_like(u), g.L)) == expected


def test_dominant_mode_constant():
    g = ev.Grid1D(4.0, 64)
    assert ev.dominant_mode(ev.constant_state(0.7, 0.2, g)) == 0


def test_cosine_coefficient_amplitude():
    g = ev.Grid1D(2.0, 256)
    c = ev.cosine_coefficients(1 + 0.3 * np.cos(2 * np.pi * g.x / 2.0), 2.0, 4)
    assert c[1] == pytest.approx(0.3, rel=1e-12)
    assert np.abs(c[[0, 2, 3]]).max() < 1e-12


def test_simulate_decays_below_threshold():
    p = pattern_params(3)
    k0, c0 = spectral.chi_threshold(p)
    p = p.with_(chi=0.95 * c0)
    e = coexistence(p)
    g = ev.Grid1D(3.0, 128)
    tr = ev.simulate(p, ev.cosine_perturbation(e.u, e.v, g, 0.01, 1), 500, ev.SimOptions(stride=10))
    assert np.abs(tr.final.u - e.u).max() <= 1e-4
    assert np.all(np.diff(tr.times) > 0)
    assert ev.mass_bounds_check(tr, p)["passed"]


def test_linear_growth_rate_matches_eigenvalue():
    p = pattern_params(3)
    k0, c0 = spectral.chi_threshold(p)
    n = 256
    dx = p.L / n
    # the discrete threshold is slightly above the continuous one
    p = p.with_(chi=1.1 * spectral.chi_k_value(p, k0, dx))
    e = coexistence(p)
    g = ev.Grid1D(p.L, n)
    s = ev.cosine_perturbation(e.u, e.v, g, 1e-6, 1)
    tr = ev.simulate(p, s, 30, ev.SimOptions(stride=1.0, dt_max=0.01, stop_at_steady=False))
    amps = np.array([abs(ev.cosine_coefficients(q.u, p.L, 1)[0]) for q in tr.snapshots])
    m = (amps > 1e-6) & (amps < 1e-3)
    rate = ev.growth_rate(tr.times[m][2:], amps[m][2:])
    lam = spectral.mode_analysis(p, p.chi, k0, dx).leading().real
    assert rate == pytest.approx(lam, rel=0.1)


def test_mass_bounds_flags_violation():
    p = pattern_params(3)
    g = ev.Grid1D(3.0, 32)
    s0 = ev.constant_state(0.2, 0.3, g)
    big = ev.constant_state(2 * (p.L / p.b1 + 0.2 * 3.0) / 3.0, 0.3, g, t=1.0)
    tr = ev.Trajectory([s0, big], [{}, {}])
    rep = ev.mass_bounds_check(tr, p)
    assert not rep["passed"]
    assert rep["rows"][0]["mass_ok"] and not rep["rows"][1]["mass_ok"]


def test_tabulated_and_export(tmp_path):
    g = ev.Grid1D(2.0, 32)
    s = ev.tabulated([0, 1, 2], [1, 2, 1], [0.5, 0.5, 0.5], g)
    assert s.u.max() <= 2 and s.u.min() >= 1
    with pytest.raises(ValueError):
        ev.tabulated([0, 2], [1, -1], [1, 1], g)
    p = pattern_params(2.0).with_(chi=5.0)
    tr = ev.simulate(p, s, 2.0, ev.SimOptions(stride=1.0))
    man = ev.export_trajectory(tr, p, tmp_path / "run")
    files = sorted(f.name for f in (tmp_path / "run").iterdir())
    assert files == sorted([e["file"] for e in man["snapshots"]] + ["manifest.json"])
    with open(tmp_path / "run" / man["snapshots"][0]["file"]) as fh:
        assert fh.readline().strip() == "x,u,v"
    assert json.loads((tmp_path / "run" / "manifest.json").read_text())["grid"]["n"] == 32


def test_backends_give_same_trajectory():
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    p = spike_params()
    g = ev.Grid1D(p.L, 128)
    e = coexistence(p)
    s = ev.cosine_perturbation(e.u, e.v, g, 0.5, 2)
    a = ev.simulate(p, s, 2.0, ev.SimOptions(stride=1.0, backend="numba"))
    b = ev.simulate(p, s, 2.0, ev.SimOptions(stride=1.0, backend="numpy"))
    np.testing.assert_allclose(a.final.u, b.final.u, rtol=1e-11)

"""Finite-volume kernels for the time stepper and the steady solver.

Two interchangeable implementations are provided: compiled loops via
numba, and a vectorised numpy/scipy fallback.  Set ``BDCOMP_NUMBA=0`` in
the environment to force the fallback.  Both work on a cell-centred grid
with ``n`` cells of width ``dx`` and zero flux through both end faces.

The packed parameter vector is ``prm = [D1, D2, chi, a1, b1, c1, a2, b2, c2, dx]``.
The sensitivity is passed as ``(kind, c0, c1, knots, coef)`` where kind 0
means ``c0 + c1 v`` and kind 1 a cubic spline in scipy's PPoly layout,
held constant outside its knots.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.linalg import solve_banded

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and os.environ.get("BDCOMP_NUMBA", "1").strip().lower() not in ("0", "false", "no")

UPWIND = 0
CENTRAL = 1

# status codes returned by the advance loops
OK = 0
NEGATIVE = 1
NONFINITE = 2


def pack_params(p, dx):
    return np.array([p.D1, p.D2, p.chi, p.a1, p.b1, p.c1, p.a2, p.b2, p.c2, dx], dtype=float)


def pack_phi(phi):
    """Flatten a :class:`~bdcomp.kinetics.Sensitivity` for the kernels."""
    if phi.kind == "table":
        t, c = phi.spline_arrays()
        return 1, 0.0, 0.0, t, c
    return 0, float(phi.c0), float(phi.c1), np.zeros(2), np.zeros((4, 1))


# ---------------------------------------------------------------------------
# compiled implementation
# ---------------------------------------------------------------------------

@njit(cache=True)
def _phi_scalar(v, kind, c0, c1, knots, coef):
    if kind == 0:
        return c0 + c1 * v, c1
    m = knots.shape[0]
    if v <= knots[0]:
        vc = knots[0]
        out = True
    elif v >= knots[m - 1]:
        vc = knots[m - 1]
        out = True
    else:
        vc = v
        out = False
    i = np.searchsorted(knots, vc, side="right") - 1
    if i < 0:
        i = 0
    if i > m - 2:
        i = m - 2
    h = vc - knots[i]
    val = ((coef[0, i] * h + coef[1, i]) * h + coef[2, i]) * h + coef[3, i]
    if out:
        return val, 0.0
    der = (3.0 * coef[0, i] * h + 2.0 * coef[1, i]) * h + coef[2, i]
    return val, der


@njit(cache=True)
def _adv_flux(u, v, prm, kind, c0, c1, knots, coef, scheme, out):
    # out[i] = chi * u_face * phi(v_face) * (v[i+1]-v[i]) / dx on interior faces
    n = u.shape[0]
    chi = prm[2]
    dx = prm[9]
    for i in range(n - 1):
        dv = v[i + 1] - v[i]
        ph, _ = _phi_scalar(0.5 * (v[i] + v[i + 1]), kind, c0, c1, knots, coef)
        a = chi * ph * dv
        if scheme == 0:
            uf = u[i + 1] if a > 0.0 else u[i]
        else:
            uf = 0.5 * (u[i] + u[i + 1])
        out[i] = a * uf / dx
    return out


@njit(cache=True)
def _explicit(u, v, prm, kind, c0, c1, knots, coef, scheme, ru, rv, flux):
    # advection divergence plus reactions
    n = u.shape[0]
    dx = prm[9]
    a1, b1, c1_, a2, b2, c2 = prm[3], prm[4], prm[5], prm[6], prm[7], prm[8]
    _adv_flux(u, v, prm, kind, c0, c1, knots, coef, scheme, flux)
    for i in range(n):
        fr = flux[i] if i < n - 1 else 0.0
        fl = flux[i - 1] if i > 0 else 0.0
        ui = u[i]
        vi = v[i]
        ru[i] = (fr - fl) / dx + (-1.0 + 1.0 / (a1 + b1 * ui + c1_ * vi)) * ui
        rv[i] = (-1.0 + 1.0 / (a2 + b2 * ui + c2 * vi)) * vi


@njit(cache=True)
def _rhs(u, v, prm, kind, c0, c1, knots, coef, scheme, ru, rv, flux):
    n = u.shape[0]
    dx2 = prm[9] * prm[9]
    D1, D2 = prm[0], prm[1]
    _explicit(u, v, prm, kind, c0, c1, knots, coef, scheme, ru, rv, flux)
    for i in range(n):
        ul = u[i - 1] if i > 0 else u[i]
        ur = u[i + 1] if i < n - 1 else u[i]
        vl = v[i - 1] if i > 0 else v[i]
        vr = v[i + 1] if i < n - 1 else v[i]
        ru[i] += D1 * (ul - 2.0 * u[i] + ur) / dx2
        rv[i] += D2 * (vl - 2.0 * v[i] + vr) / dx2


@njit(cache=True)
def _thomas_neumann(r, rhs, x, cp, dp):
    # solve (I - r * Laplacian_N) x = rhs; Neumann rows have diagonal 1 + r
    n = rhs.shape[0]
    b0 = 1.0 + r
    cp[0] = -r / b0
    dp[0] = rhs[0] / b0
    for i in range(1, n):
        b = (1.0 + r) if i == n - 1 else (1.0 + 2.0 * r)
        m = b + r * cp[i - 1]
        cp[i] = -r / m
        dp[i] = (rhs[i] + r * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@njit(cache=True)
def _stable_dt(u, v, prm, kind, c0, c1, knots, coef, dt_max, safety):
    # largest dt keeping the explicit part positivity preserving
    n = u.shape[0]
    chi = prm[2]
    dx = prm[9]
    vmax = 0.0
    for i in range(n - 1):
        ph, _ = _phi_scalar(0.5 * (v[i] + v[i + 1]), kind, c0, c1, knots, coef)
        a = abs(chi * ph * (v[i + 1] - v[i])) / dx
        if a > vmax:
            vmax = a
    dt = dt_max
    if vmax > 0.0:
        dt = min(dt, 0.4 * dx / vmax)
    lim = safety / (1.0 + 2.0 * vmax / dx)
    return min(dt, lim)


@njit(cache=True)
def _advance(u, v, prm, kind, c0, c1, knots, coef, scheme, t0, t_end, dt_max, adaptive, max_steps):
    """Run IMEX steps from t0 until t_end. Returns (t, steps, status, dt_last)."""
    n = u.shape[0]
    dx2 = prm[9] * prm[9]
    ru = np.empty(n)
    rv = np.empty(n)
    flux = np.empty(max(n - 1, 1))
    cp = np.empty(n)
    dp = np.empty(n)
    bu = np.empty(n)
    bv = np.empty(n)
    t = t0
    steps = 0
    dt = dt_max
    while t < t_end - 1e-14 * max(1.0, abs(t_end)) and steps < max_steps:
        if adaptive:
            dt = _stable_dt(u, v, prm, kind, c0, c1, knots, coef, dt_max, 0.95)
        else:
            dt = dt_max
        if t + dt > t_end:
            dt = t_end - t
        _explicit(u, v, prm, kind, c0, c1, knots, coef, scheme, ru, rv, flux)
        for i in range(n):
            bu[i] = u[i] + dt * ru[i]
            bv[i] = v[i] + dt * rv[i]
        _thomas_neumann(prm[0] * dt / dx2, bu, u, cp, dp)
        _thomas_neumann(prm[1] * dt / dx2, bv, v, cp, dp)
        t += dt
        steps += 1
        umax = 0.0
        vmx = 0.0
        for i in range(n):
            if not (np.isfinite(u[i]) and np.isfinite(v[i])):
                return t, steps, 2, dt
            if u[i] > umax:
                umax = u[i]
            if v[i] > vmx:
                vmx = v[i]
        for i in range(n):
            if u[i] < -1e-12 * umax or v[i] < -1e-12 * vmx:
                return t, steps, 1, dt
    return t, steps, 0, dt


# ---------------------------------------------------------------------------
# numpy implementation
# ---------------------------------------------------------------------------

def _phi_np(v, kind, c0, c1, knots, coef):
    if kind == 0:
        return c0 + c1 * v, np.full_like(v, c1)
    vc = np.clip(v, knots[0], knots[-1])
    i = np.clip(np.searchsorted(knots, vc, side="right") - 1, 0, knots.size - 2)
    h = vc - knots[i]
    val = ((coef[0, i] * h + coef[1, i]) * h + coef[2, i]) * h + coef[3, i]
    der = (3 * coef[0, i] * h + 2 * coef[1, i]) * h + coef[2, i]
    der = np.where((v < knots[0]) | (v > knots[-1]), 0.0, der)
    return val, der


def _adv_flux_np(u, v, prm, kind, c0, c1, knots, coef, scheme):
    dv = np.diff(v)
    ph, _ = _phi_np(0.5 * (v[:-1] + v[1:]), kind, c0, c1, knots, coef)
    a = prm[2] * ph * dv
    if scheme == UPWIND:
        uf = np.where(a > 0.0, u[1:], u[:-1])
    else:
        uf = 0.5 * (u[:-1] + u[1:])
    return a * uf / prm[9]


def _explicit_np(u, v, prm, kind, c0, c1, knots, coef, scheme):
    dx = prm[9]
    flux = _adv_flux_np(u, v, prm, kind, c0, c1, knots, coef, scheme)
    F = np.concatenate(([0.0], flux, [0.0]))
    ru = np.diff(F) / dx + (-1.0 + 1.0 / (prm[3] + prm[4] * u + prm[5] * v)) * u
    rv = (-1.0 + 1.0 / (prm[6] + prm[7] * u + prm[8] * v)) * v
    return ru, rv


def _lap_np(w, dx):
    wp = np.concatenate(([w[0]], w, [w[-1]]))
    return (wp[:-2] - 2 * w + wp[2:]) / dx**2


def _rhs_np(u, v, prm, kind, c0, c1, knots, coef, scheme):
    ru, rv = _explicit_np(u, v, prm, kind, c0, c1, knots, coef, scheme)
    return ru + prm[0] * _lap_np(u, prm[9]), rv + prm[1] * _lap_np(v, prm[9])


def _thomas_neumann_np(r, rhs):
    n = rhs.size
    ab = np.empty((3, n))
    ab[0, :] = -r
    ab[2, :] = -r
    ab[1, :] = 1 + 2 * r
    ab[1, 0] = ab[1, -1] = 1 + r
    return solve_banded((1, 1), ab, rhs)


def _stable_dt_np(u, v, prm, kind, c0, c1, knots, coef, dt_max, safety):
    dx = prm[9]
    ph, _ = _phi_np(0.5 * (v[:-1] + v[1:]), kind, c0, c1, knots, coef)
    vmax = float(np.max(np.abs(prm[2] * ph * np.diff(v)))) / dx if u.size > 1 else 0.0
    dt = dt_max
    if vmax > 0:
        dt = min(dt, 0.4 * dx / vmax)
    return min(dt, safety / (1.0 + 2.0 * vmax / dx))


def _advance_np(u, v, prm, kind, c0, c1, knots, coef, scheme, t0, t_end, dt_max, adaptive, max_steps):
    dx2 = prm[9] ** 2
    t, steps, dt = t0, 0, dt_max
    while t < t_end - 1e-14 * max(1.0, abs(t_end)) and steps < max_steps:
        dt = _stable_dt_np(u, v, prm, kind, c0, c1, knots, coef, dt_max, 0.95) if adaptive else dt_max
        dt = min(dt, t_end - t)
        ru, rv = _explicit_np(u, v, prm, kind, c0, c1, knots, coef, scheme)
        u[:] = _thomas_neumann_np(prm[0] * dt / dx2, u + dt * ru)
        v[:] = _thomas_neumann_np(prm[1] * dt / dx2, v + dt * rv)
        t += dt
        steps += 1
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            return t, steps, NONFINITE, dt
        if u.min() < -1e-12 * u.max() or v.min() < -1e-12 * v.max():
            return t, steps, NEGATIVE, dt
    return t, steps, OK, dt


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

class Backend:
    """Uniform interface over the compiled and numpy kernels."""

    def __init__(self, name):
        if name not in ("numba", "numpy"):
            raise ValueError(name)
        if name == "numba" and not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        self.name = name

    def explicit(self, u, v, prm, phi_pack, scheme=UPWIND):
        if self.name == "numpy":
            return _explicit_np(u, v, prm, *phi_pack, scheme)
        n = u.size
        ru, rv, fl = np.empty(n), np.empty(n), np.empty(max(n - 1, 1))
        _explicit(u, v, prm, *phi_pack, scheme, ru, rv, fl)
        return ru, rv

    def rhs(self, u, v, prm, phi_pack, scheme=UPWIND):
        if self.name == "numpy":
            return _rhs_np(u, v, prm, *phi_pack, scheme)
        n = u.size
        ru, rv, fl = np.empty(n), np.empty(n), np.empty(max(n - 1, 1))
        _rhs(u, v, prm, *phi_pack, scheme, ru, rv, fl)
        return ru, rv

    def flux(self, u, v, prm, phi_pack, scheme=UPWIND):
        """Advective flux on interior faces."""
        if self.name == "numpy":
            return _adv_flux_np(u, v, prm, *phi_pack, scheme)
        out = np.empty(max(u.size - 1, 1))
        return _adv_flux(u, v, prm, *phi_pack, scheme, out)[: u.size - 1]

    def solve_diffusion(self, r, rhs):
        if self.name == "numpy":
            return _thomas_neumann_np(r, rhs)
        n = rhs.size
        x, cp, dp = np.empty(n), np.empty(n), np.empty(n)
        return _thomas_neumann(r, np.ascontiguousarray(rhs, dtype=float), x, cp, dp)

    def stable_dt(self, u, v, prm, phi_pack, dt_max=0.25):
        if self.name == "numpy":
            return _stable_dt_np(u, v, prm, *phi_pack, dt_max, 0.95)
        return _stable_dt(u, v, prm, *phi_pack, dt_max, 0.95)

    def advance(self, u, v, prm, phi_pack, t0, t_end, dt_max, adaptive=True,
                max_steps=10**9, scheme=UPWIND):
        """Advance ``(u, v)`` in place; returns ``(t, steps, status, dt_last)``."""
        if self.name == "numpy":
            return _advance_np(u, v, prm, *phi_pack, scheme, t0, t_end, dt_max, adaptive, max_steps)
        return _advance(u, v, prm, *phi_pack, scheme, float(t0), float(t_end),
                        float(dt_max), bool(adaptive), int(max_steps))


def get_backend(name=None) -> Backend:
    if name is None:
        name = "numba" if USE_NUMBA else "numpy"
    return Backend(name)

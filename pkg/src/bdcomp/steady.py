"""Steady states of the discretised system: Newton solves and branch continuation.

The residual is the right-hand side used by :mod:`bdcomp.evolve`.  Its
Jacobian is assembled analytically as a sparse ``2n x 2n`` matrix with
unknowns ordered ``[u_0..u_{n-1}, v_0..v_{n-1}]``.

Continuation uses the centred face value for u by default.  Upwinding makes
the residual only piecewise smooth wherever the drift changes sign, which
adds an ``O(dx |s|)`` kink to the branch and spoils the quadratic fit of
``chi(s)`` near the bifurcation point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve

from . import kernels
from .evolve import StateField, cosine_coefficients, residual
from .kinetics import ScaledParams, coexistence, kinetics_derivatives
from .spectral import chi_k_value, mode_analysis


class NewtonFailure(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


class ContinuationError(RuntimeError):
    def __init__(self, msg, points=None):
        super().__init__(msg)
        self.points = points or []


@dataclass
class SteadyState:
    chi: float
    profile: StateField
    residual: float
    iterations: int = 0
    history: list = field(default_factory=list)
    stability: str | None = None


@dataclass(frozen=True)
class BranchPoint:
    s: float            # arclength from the bifurcation point
    chi: float
    amplitude: float    # k0 cosine amplitude of u - mean(u)
    proj: float         # amplitude along (Q, 1) cos, the expansion parameter
    residual: float
    v_amplitude: float = 0.0


# ---------------------------------------------------------------------------
# residual and Jacobian
# ---------------------------------------------------------------------------

def _split(z):
    n = z.size // 2
    return z[:n], z[n:]


def full_residual(p: ScaledParams, z, scheme=kernels.UPWIND, backend=None):
    u, v = _split(z)
    ru, rv = residual(p, StateField(0.0, u, v, p.L), backend, scheme)
    return np.concatenate((ru, rv))


def jacobian(p: ScaledParams, z, scheme=kernels.UPWIND):
    """Sparse Jacobian of :func:`full_residual`."""
    u, v = _split(z)
    n = u.size
    dx = p.L / n
    # diffusion
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    lap = sps.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]) / dx**2
    d = kinetics_derivatives(p, u, v, order=1)
    Juu = p.D1 * lap + sps.diags(d["f_u"])
    Jvv = p.D2 * lap + sps.diags(d["g_v"])
    Juv = sps.diags(d["f_v"])
    Jvu = sps.diags(d["g_u"])
    # advective flux on interior faces
    vf = 0.5 * (v[:-1] + v[1:])
    dv = np.diff(v)
    ph = p.phi(vf)
    ph1 = p.phi.d1(vf)
    a = p.chi * ph * dv
    if scheme == kernels.UPWIND:
        right = a > 0
        uf = np.where(right, u[1:], u[:-1])
        dFdul = np.where(right, 0.0, a / dx)
        dFdur = np.where(right, a / dx, 0.0)
    else:
        uf = 0.5 * (u[:-1] + u[1:])
        dFdul = dFdur = 0.5 * a / dx
    dFdvl = p.chi * uf * (0.5 * ph1 * dv - ph) / dx
    dFdvr = p.chi * uf * (0.5 * ph1 * dv + ph) / dx
    faces = np.arange(n - 1)
    rows, cols, vals_u, vals_v = [], [], [], []
    # row i gets +F_i/dx, row i+1 gets -F_i/dx
    for sign, r in ((1.0, faces), (-1.0, faces + 1)):
        rows += [r, r]
        cols += [faces, faces + 1]
        vals_u += [sign * dFdul / dx, sign * dFdur / dx]
        vals_v += [sign * dFdvl / dx, sign * dFdvr / dx]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    Juu = Juu + sps.csr_matrix((np.concatenate(vals_u), (rows, cols)), shape=(n, n))
    Juv = Juv + sps.csr_matrix((np.concatenate(vals_v), (rows, cols)), shape=(n, n))
    return sps.bmat([[Juu, Juv], [Jvu, Jvv]], format="csc")


def chi_derivative(p: ScaledParams, z, scheme=kernels.UPWIND):
    """``dR/dchi``; the residual is affine in chi."""
    r1 = full_residual(p.with_(chi=1.0), z, scheme)
    r0 = full_residual(p.with_(chi=0.0), z, scheme)
    return r1 - r0


def _scaled_norm(r, z):
    return float(np.abs(r).max()) / max(1.0, float(np.abs(z).max()))


def newton_solve(p: ScaledParams, guess: StateField, chi=None, scheme=kernels.UPWIND,
                 tol=1e-10, max_iter=50) -> SteadyState:
    """Damped Newton iteration for a steady state near ``guess``.

    Converged when ``max|R| <= tol * max(1, max|z|)``.  Steps are halved
    until the residual decreases and the iterate stays positive.
    """
    if chi is not None:
        p = p.with_(chi=float(chi))
    if guess.L != p.L:
        raise ValueError("guess and parameters have different L")
    z = np.concatenate((guess.u, guess.v)).astype(float)
    if np.any(z <= 0):
        raise NewtonFailure("guess must be positive")
    r = full_residual(p, z, scheme)
    hist = [float(np.abs(r).max())]
    for it in range(1, max_iter + 1):
        if _scaled_norm(r, z) <= tol:
            return _steady(p, z, hist, it - 1)
        J = jacobian(p, z, scheme)
        dz = spsolve(J, -r)
        if not np.all(np.isfinite(dz)):
            raise NewtonFailure("singular Jacobian", hist)
        lam = 1.0
        nr = hist[-1]
        while lam >= 1e-6:
            zt = z + lam * dz
            if np.all(zt > 0):
                rt = full_residual(p, zt, scheme)
                if float(np.abs(rt).max()) < nr or lam == 1.0 and float(np.abs(rt).max()) < 10 * nr:
                    break
            lam *= 0.5
        else:
            if np.any(z + dz <= 0):
                raise NewtonFailure("Newton step leaves the positive cone", hist)
            raise NewtonFailure("line search failed", hist)
        z, r = zt, rt
        hist.append(float(np.abs(r).max()))
    if _scaled_norm(r, z) <= tol:
        return _steady(p, z, hist, max_iter)
    raise NewtonFailure(f"no convergence after {max_iter} iterations (residual {hist[-1]:.3e})", hist)


def _steady(p, z, hist, its):
    u, v = _split(z)
    return SteadyState(p.chi, StateField(0.0, u.copy(), v.copy(), p.L), hist[-1], its, hist)


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

def _projection(p, z, ub, vb, k, Q):
    u, v = _split(z)
    cu = cosine_coefficients(u, p.L, k)[k - 1]
    cv = cosine_coefficients(v, p.L, k)[k - 1]
    return (cu * Q + cv) / (Q * Q + 1), cu, cv


def continue_branch(p: ScaledParams, k0, n=256, chi_start=None, steps=60, ds=1e-3,
                    direction=1, scheme=kernels.CENTRAL, tol=1e-10, ds_min=1e-6, max_corr=12,
                    chi_weight=1e-4):
    """Pseudo-arclength continuation of the mode-``k0`` branch off the constant state.

    The arclength metric weights the state part so that a pure
    ``(Q, 1) cos`` displacement of size ``s`` has length ``|s|``; ``chi``
    enters with weight ``chi_weight`` so that ``ds`` is close to an
    amplitude increment on a parabolic branch.  ``direction`` picks the wing by the sign of
    the first step along ``(Q, 1) cos(k0 pi x / L)``.
    """
    eq = coexistence(p)
    ub, vb = eq.u, eq.v
    dx = p.L / n
    chi0 = chi_k_value(p, k0, dx) if chi_start is None else float(chi_start)
    Q = mode_analysis(p, chi0, k0, dx).Q_k
    x = (np.arange(n) + 0.5) * dx
    c = np.cos(k0 * math.pi * x / p.L)
    wz = 2.0 * dx / (p.L * (1.0 + Q * Q))

    def inner(a, b):
        return wz * np.dot(a[:-1], b[:-1]) + chi_weight * a[-1] * b[-1]

    X = np.concatenate((np.full(n, ub), np.full(n, vb), [chi0]))
    tau = np.concatenate((Q * c, c, [0.0]))
    tau *= direction / math.sqrt(inner(tau, tau))
    pts = [BranchPoint(0.0, chi0, 0.0, 0.0, _scaled_norm(full_residual(p.with_(chi=chi0), X[:-1], scheme), X[:-1]))]
    arc = 0.0
    h = ds
    while len(pts) <= steps:
        ok = False
        while h >= ds_min:
            Y = X + h * tau
            for _ in range(max_corr):
                pc = p.with_(chi=float(Y[-1]))
                z = Y[:-1]
                R = full_residual(pc, z, scheme)
                N = inner(tau, Y - X) - h
                if _scaled_norm(R, z) <= tol and abs(N) <= 1e-12:
                    ok = True
                    break
                J = jacobian(pc, z, scheme)
                Jc = chi_derivative(pc, z, scheme)
                row = np.concatenate((wz * tau[:-1], [chi_weight * tau[-1]]))
                A = sps.bmat([[J, sps.csc_matrix(Jc[:, None])],
                              [sps.csr_matrix(row[None, :-1]), sps.csr_matrix([[row[-1]]])]], format="csc")
                dY = spsolve(A, -np.concatenate((R, [N])))
                if not np.all(np.isfinite(dY)):
                    break
                Y = Y + dY
                if np.any(Y[:-1] <= 0):
                    break
            if ok:
                break
            h *= 0.5
        if not ok:
            raise ContinuationError(f"step failed below ds_min={ds_min:g} at chi={X[-1]:.6g}", pts)
        sec = Y - X
        tau = sec / math.sqrt(inner(sec, sec))
        arc += h
        X = Y
        s_proj, cu, cv = _projection(p, X[:-1], ub, vb, k0, Q)
        res = _scaled_norm(full_residual(p.with_(chi=float(X[-1])), X[:-1], scheme), X[:-1])
        pts.append(BranchPoint(direction * arc, float(X[-1]), float(cu), float(s_proj), res, float(cv)))
        h = min(ds, 2 * h)
    return pts


def continue_both(p: ScaledParams, k0, **kw):
    """Both wings of the pitchfork, ordered by projection ``proj``."""
    left = continue_branch(p, k0, direction=-1, **kw)
    right = continue_branch(p, k0, direction=1, **kw)
    return left[::-1] + right[1:]


def fit_branch(points, chi0, s_max=0.05, degree=2):
    """Least-squares fit ``chi - chi0 = c1 s + c2 s^2 (+ ...)`` over ``|proj| <= s_max``.

    Returns ``(coefficients, used_s_max)`` with ``coefficients[j]`` the
    coefficient of ``s**(j+1)``.
    """
    s = np.array([q.proj for q in points])
    y = np.array([q.chi for q in points]) - chi0
    m = np.abs(s) <= s_max
    if m.sum() < degree + 2:
        raise ValueError("not enough branch points inside the fit window")
    V = np.vstack([s[m] ** j for j in range(1, degree + 1)]).T
    coef, *_ = np.linalg.lstsq(V, y[m], rcond=None)
    return coef, float(np.abs(s[m]).max())


def write_branch_csv(path, points):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "chi", "amplitude", "residual"])
        for q in points:
            w.writerow([repr(q.s), repr(q.chi), repr(q.amplitude), repr(q.residual)])

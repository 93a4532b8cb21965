"""Shadow system for large D1 and chi with r = chi / D1 fixed.

In that limit ``u = lam * exp(-r v)`` for a constant ``lam`` and v solves

    eps^2 v'' + (-1 + 1/(a2 + b2 lam e^{-r v} + c2 v)) v = 0,   v'(0) = v'(L) = 0,

together with the scalar constraint

    G(lam) = int_0^L (-1 + 1/(a1 + b1 lam e^{-r v} + c1 v)) lam e^{-r v} dx = 0.

With ``w = v* - v`` and ``v* = (1 - a2)/c2`` the v-equation becomes
``eps^2 w'' + f(lam; w) = 0`` where ``f = g (v* - w) / (1 + g)`` and
``g(lam; s) = b2 lam e^{-r (v* - s)} - c2 s``.  Shifting by the small root
``s1`` of g gives ``f~(s) = f(s + s1)`` with ``f~(0) = 0``; its homoclinic
ground state ``W0`` glued to a cutoff is the starting point of a Newton
solve on (0, L).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .evolve import StateField


class ShadowError(RuntimeError):
    pass


class NoAdmissibleRoot(ShadowError):
    def __init__(self, msg, scan=None):
        super().__init__(msg)
        self.scan = scan or []


@dataclass(frozen=True)
class ShadowParams:
    r: float
    eps: float
    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    L: float

    def __post_init__(self):
        if not (0 < self.a2 < 1):
            raise ValueError("a2 must lie in (0, 1)")
        for name in ("r", "eps", "a1", "b1", "c1", "b2", "c2", "L"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite")

    @property
    def vstar(self):
        return (1 - self.a2) / self.c2

    @classmethod
    def from_scaled(cls, p, eps=None):
        """Shadow parameters of a full parameter set (``r = chi/D1``, ``eps = sqrt(D2)``)."""
        return cls(p.chi / p.D1, math.sqrt(p.D2) if eps is None else eps,
                   p.a1, p.b1, p.c1, p.a2, p.b2, p.c2, p.L)

    def with_(self, **kw):
        d = {k: getattr(self, k) for k in ("r", "eps", "a1", "b1", "c1", "a2", "b2", "c2", "L")}
        d.update(kw)
        return ShadowParams(**d)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("r", "eps", "a1", "b1", "c1", "a2", "b2", "c2", "L")}


# ---------------------------------------------------------------------------
# the nonlinearity and its roots
# ---------------------------------------------------------------------------

def g(sp: ShadowParams, lam, s):
    return sp.b2 * lam * np.exp(-sp.r * (sp.vstar - s)) - sp.c2 * s


def g_prime(sp: ShadowParams, lam, s):
    return sp.r * sp.b2 * lam * np.exp(-sp.r * (sp.vstar - s)) - sp.c2


def f(sp: ShadowParams, lam, w):
    gw = g(sp, lam, w)
    return gw * (sp.vstar - w) / (1 + gw)


def f_prime(sp: ShadowParams, lam, w):
    gw = g(sp, lam, w)
    return (g_prime(sp, lam, w) * (sp.vstar - w) - gw * (1 + gw)) / (1 + gw) ** 2


def lambda_max(sp: ShadowParams):
    """Upper end of the admissible lambda interval."""
    r, v = sp.r, sp.vstar
    return min(sp.c2 / (sp.b2 * r) * math.exp(r * v - r / sp.c2 - 1.0), (1 - sp.a2) / sp.b2)


@dataclass(frozen=True)
class GRootStructure:
    lam: float
    s1: float
    s2: float
    s3: float
    s4: float
    sstar: float
    lambda_max: float


def _check_lambda(sp, lam):
    lm = lambda_max(sp)
    if not (0 < lam < lm):
        raise ValueError(f"lambda={lam!r} outside the admissible interval (0, {lm:.6g})")
    return lm


def _upper_root(fun, a):
    b = max(2 * a, a + 1.0)
    while fun(b) < 0:
        b = 2 * b
        if b > 1e6:
            raise ShadowError("no upper root found")
    return brentq(fun, a, b, xtol=1e-14, rtol=1e-15, maxiter=500)


def g_roots(sp: ShadowParams, lam) -> GRootStructure:
    """Roots ``s1 < s3 < s4 < s2`` of ``g`` and ``1 + g`` and the minimiser ``s*``."""
    lm = _check_lambda(sp, lam)
    r = sp.r
    sstar = math.log(sp.c2 * math.exp(r * sp.vstar) / (sp.b2 * lam * r)) / r

    def g0(s):
        return g(sp, lam, s)

    def g1(s):
        return 1 + g(sp, lam, s)

    lo = 0.0 if sstar > 0 else sstar
    kw = dict(xtol=1e-15, rtol=1e-15, maxiter=500)
    s1 = brentq(g0, lo, sstar, **kw)
    s3 = brentq(g1, lo, sstar, **kw)
    s2 = _upper_root(g0, sstar)
    s4 = _upper_root(g1, sstar)
    return GRootStructure(lam, s1, s2, s3, s4, sstar, lm)


def f_tilde(sp, lam, s, roots=None):
    roots = roots or g_roots(sp, lam)
    return f(sp, lam, np.asarray(s) + roots.s1)


def F_tilde(sp, lam, s, roots=None):
    """``int_0^s f~(t) dt`` by adaptive quadrature."""
    roots = roots or g_roots(sp, lam)
    val, _ = quad(lambda t: f(sp, lam, t + roots.s1), 0.0, float(s), epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def energy_zero(sp, lam, roots=None):
    """Smallest positive zero ``s0`` of the energy ``F~``.

    ``f~ < 0`` on ``(0, v* - s1)`` and ``f~ > 0`` beyond it up to the pole
    at ``s3 - s1``, so the zero lies in ``(v* - s1, s3 - s1)``.
    """
    roots = roots or g_roots(sp, lam)
    a = sp.vstar - roots.s1
    b = roots.s3 - roots.s1
    # F~ -> +inf logarithmically at the pole; approach it geometrically
    for j in range(1, 16):
        hi = b - (b - a) * 10.0**-j
        if F_tilde(sp, lam, hi, roots) > 0:
            break
    else:
        raise ShadowError("no sign change of the energy before the pole of f~")
    return brentq(lambda s: F_tilde(sp, lam, s, roots), a, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


# ---------------------------------------------------------------------------
# ground state
# ---------------------------------------------------------------------------

@dataclass
class GroundState:
    lam: float
    z: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    peak: float
    eta: float
    eta_linear: float
    hamiltonian: float
    peak_half: float
    roots: GRootStructure
    orbit: object = None      # dense output of the integrator, in tau = z_peak - z
    z_peak: float = 0.0

    def __call__(self, z):
        """Evaluate the even extension, with the linear tail beyond the samples."""
        z = np.abs(np.asarray(z, dtype=float))
        out = CubicHermiteSpline(self.z, self.W, self.dW)(np.minimum(z, self.z[-1]))
        tail = z > self.z[-1]
        if np.any(tail):
            out = np.where(tail, self.W[-1] * np.exp(-self.eta_linear * (z - self.z[-1])), out)
        return out


def ground_state(sp: ShadowParams, lam, z_max=None, n=4001, tail=1e-11) -> GroundState:
    """Homoclinic solution of ``W'' + f~(W) = 0`` with ``W(0) = s0``, ``W'(0) = 0``.

    Shooting forward from the peak is unstable, so the orbit is traced
    backwards from the tail: start at ``W = tail`` with the zero-energy
    slope ``W' = -sqrt(-2 F~(tail))`` and integrate towards smaller z until
    ``W' = 0``.  The result is shifted so that the peak sits at ``z = 0``.
    ``z_max`` (if given) truncates or extends the sampling window.
    """
    roots = g_roots(sp, lam)
    fp0 = float(f_prime(sp, lam, roots.s1))
    if fp0 >= 0:
        raise ShadowError("f~'(0) >= 0: the tail is not exponentially decaying")
    eta_lin = math.sqrt(-fp0)

    def rhs(tau, y):
        # tau = -z
        return [-y[1], f(sp, lam, y[0] + roots.s1)]

    def peak(tau, y):
        return y[1]

    peak.terminal = True
    peak.direction = 1
    E = F_tilde(sp, lam, tail, roots)
    y0 = [tail, -math.sqrt(max(-2.0 * E, 0.0))]
    span = 50.0 / eta_lin + 50.0
    sol = solve_ivp(rhs, (0.0, span), y0, method="DOP853", rtol=1e-13, atol=1e-16,
                    events=peak, dense_output=True)
    if sol.status != 1:
        raise ShadowError("backward integration did not reach the peak")
    tau_pk = float(sol.t_events[0][0])
    zmax = tau_pk if z_max is None else float(z_max)
    z = np.linspace(0.0, zmax, n)
    tau = tau_pk - z
    inside = tau >= 0
    Y = sol.sol(np.clip(tau, 0.0, tau_pk))
    W = Y[0]
    dW = Y[1]  # the second state component is W_z itself
    if not np.all(inside):
        W = np.where(inside, W, tail * np.exp(-eta_lin * (-tau)))
        dW = np.where(inside, dW, -eta_lin * W)
    # measured decay rate on the outer half of the window
    m = (z >= zmax / 2) & (W > 0)
    eta = -float(np.polyfit(z[m], np.log(W[m]), 1)[0])
    Fvals = np.array([F_tilde(sp, lam, w, roots) for w in W])
    ham = float(np.max(np.abs(0.5 * dW**2 + Fvals)))
    return GroundState(lam, z, W, dW, float(W[0]), eta, eta_lin, ham,
                       0.5 * (sp.vstar - roots.s1), roots, sol.sol, tau_pk)


def ode_residual(gs: GroundState, sp: ShadowParams, h=3e-3):
    """``W'' + f~(W)`` at the interior samples.

    ``W''`` comes from a fourth-order stencil applied to the integrator's
    dense output, so the check measures the integration error rather than
    the sample spacing.
    """
    z = gs.z[(gs.z > 2 * h) & (gs.z < gs.z_peak - 2 * h)]

    def W(zz):
        return gs.orbit(gs.z_peak - zz)[0]

    d2 = (-W(z + 2 * h) + 16 * W(z + h) - 30 * W(z) + 16 * W(z - h) - W(z - 2 * h)) / (12 * h * h)
    return d2 + f(sp, gs.lam, W(z) + gs.roots.s1)


# ---------------------------------------------------------------------------
# spike profile at fixed lambda
# ---------------------------------------------------------------------------

def cutoff(x, L):
    """Quintic smoothstep: 1 on [0, L/3], 0 on [2L/3, L]."""
    t = np.clip((np.asarray(x) - L / 3) / (L / 3), 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)


@dataclass
class ShadowProfile:
    lam: float
    x: np.ndarray
    w: np.ndarray          # shifted profile w~ (the ansatz variable)
    ansatz: np.ndarray
    v: np.ndarray
    residual: float
    ansatz_residual: float
    iterations: int
    roots: GRootStructure
    ground: GroundState


def _nodes(sp, n=None):
    if n is None:
        n = int(max(512, math.ceil(40 * sp.L / sp.eps)))
    return np.linspace(0.0, sp.L, n + 1)


def _bvp_residual(sp, lam, w, h, s1):
    # eps^2 w'' + f~(w) with mirrored ghosts at both ends
    wp = np.concatenate(([w[1]], w, [w[-2]]))
    return sp.eps**2 * (wp[:-2] - 2 * w + wp[2:]) / h**2 + f(sp, lam, w + s1)


def solve_shadow_profile(sp: ShadowParams, lam, n=None, tol=1e-10, max_iter=60) -> ShadowProfile:
    """Cutoff-glued ground state followed by Newton correction of the BVP."""
    roots = g_roots(sp, lam)
    gs = ground_state(sp, lam)
    x = _nodes(sp, n)
    h = x[1] - x[0]
    ans = cutoff(x, sp.L) * gs(x / sp.eps)
    w = ans.copy()
    r = _bvp_residual(sp, lam, w, h, roots.s1)
    r0 = float(np.abs(r).max())
    m = w.size
    k = sp.eps**2 / h**2
    for it in range(max_iter):
        nr = float(np.abs(r).max())
        if nr <= tol:
            break
        ab = np.zeros((3, m))
        ab[1] = -2 * k + f_prime(sp, lam, w + roots.s1)
        ab[0, 1:] = k
        ab[2, :-1] = k
        ab[0, 1] = 2 * k   # ghost w_{-1} = w_1
        ab[2, -2] = 2 * k  # ghost w_{m} = w_{m-2}
        dw = solve_banded((1, 1), ab, -r)
        lam_s = 1.0
        while lam_s > 1e-4:
            wt = w + lam_s * dw
            # stay left of the pole of f~
            if np.all(wt + roots.s1 < roots.s3):
                rt = _bvp_residual(sp, lam, wt, h, roots.s1)
                if np.abs(rt).max() < nr or lam_s == 1.0 and np.abs(rt).max() < 2 * nr:
                    break
            lam_s *= 0.5
        else:
            raise ShadowError(f"Newton diverged (ansatz residual {r0:.3e})")
        w, r = wt, rt
    else:
        raise ShadowError(f"Newton did not converge (ansatz residual {r0:.3e}, last {nr:.3e})")
    v = sp.vstar - roots.s1 - w
    return ShadowProfile(lam, x, w, ans, v, float(np.abs(r).max()), r0, it, roots, gs)


def v_residual(sp: ShadowParams, prof: ShadowProfile):
    """Residual of the original v-equation at the profile."""
    v = prof.v
    h = prof.x[1] - prof.x[0]
    vp = np.concatenate(([v[1]], v, [v[-2]]))
    u = prof.lam * np.exp(-sp.r * v)
    return sp.eps**2 * (vp[:-2] - 2 * v + vp[2:]) / h**2 + (-1 + 1 / (sp.a2 + sp.b2 * u + sp.c2 * v)) * v


# ---------------------------------------------------------------------------
# the constraint and the outer solve
# ---------------------------------------------------------------------------

def constraint(sp: ShadowParams, prof: ShadowProfile):
    """``G(eps, lam)`` by the trapezoidal rule on the profile nodes."""
    u = prof.lam * np.exp(-sp.r * prof.v)
    den = sp.a1 + sp.b1 * u + sp.c1 * prof.v
    if np.any(den <= 0):
        raise ShadowError("a1 + b1 u + c1 v <= 0 on the profile")
    integrand = (-1 + 1 / den) * u
    return float(np.trapezoid(integrand, prof.x))


@dataclass
class SpikeSolution:
    lambda_eps: float
    x: np.ndarray
    v_profile: np.ndarray
    u_profile: np.ndarray
    constraint_residual: float
    profile_residual: float
    eps: float
    roots: GRootStructure
    ground_peak: float
    ground_peak_half: float
    positive: bool
    history: list = field(default_factory=list)


def _H(sp, lam, n):
    prof = solve_shadow_profile(sp, lam, n)
    return constraint(sp, prof) / lam, prof


def constraint_scan(sp: ShadowParams, m=24, n=None):
    """``H = G / lam`` on a grid of admissible lambdas (diagnostic)."""
    lm = lambda_max(sp)
    out = []
    for lam in np.linspace(0.02, 0.98, m) * lm:
        try:
            H, _ = _H(sp, lam, n)
        except ShadowError as exc:
            H = float("nan")
            _ = exc
        out.append((float(lam), float(H)))
    return out


def solve_lambda(sp: ShadowParams, n=None, tol=1e-10, max_iter=60) -> SpikeSolution:
    """Find ``lam_eps`` in ``(0, lambda_max)`` with ``G(eps, lam_eps) = 0``.

    ``G`` carries an explicit factor ``lam``; the secant iteration runs on
    ``H = G / lam`` so that the trivial zero at ``lam = 0`` is not picked
    up.  If the secant leaves the admissible interval a scan for a sign
    change of ``H`` followed by bracketing is tried before giving up.
    """
    if math.isclose(sp.vstar, (1 - sp.a1) / sp.c1, rel_tol=1e-12):
        raise ShadowError("degenerate: v* == (1 - a1)/c1")
    lm = lambda_max(sp)
    hist = []

    def H(lam):
        val, prof = _H(sp, lam, n)
        hist.append((float(lam), float(val)))
        return val, prof

    l0, l1 = 0.1 * lm, 0.5 * lm
    h0, _ = H(l0)
    h1, prof = H(l1)
    root = None
    for _ in range(max_iter):
        if abs(h1) * l1 <= tol:
            root = l1
            break
        if h1 == h0:
            break
        l2 = l1 - h1 * (l1 - l0) / (h1 - h0)
        if not (0 < l2 < lm):
            break
        l0, h0 = l1, h1
        l1 = l2
        h1, prof = H(l1)
    if root is None:
        scan = constraint_scan(sp, n=n)
        hist.extend(scan)
        vals = [(lam, hv) for lam, hv in scan if np.isfinite(hv)]
        bracket = None
        for (la, ha), (lb, hb) in zip(vals, vals[1:]):
            if ha * hb < 0:
                bracket = (la, lb)
                break
        if bracket is None:
            sign = "positive" if all(hv > 0 for _, hv in vals) else "negative" if all(hv < 0 for _, hv in vals) else "mixed"
            raise NoAdmissibleRoot(
                f"G/lambda has no sign change on (0, {lm:.4g}); sampled values are {sign}", scan)
        root = brentq(lambda lam: H(lam)[0], *bracket, xtol=1e-15, rtol=1e-13)
        _, prof = H(root)
    G = constraint(sp, prof)
    u = root * np.exp(-sp.r * prof.v)
    return SpikeSolution(
        lambda_eps=float(root), x=prof.x, v_profile=prof.v, u_profile=u,
        constraint_residual=abs(G), profile_residual=prof.residual, eps=sp.eps,
        roots=prof.roots, ground_peak=prof.ground.peak, ground_peak_half=prof.ground.peak_half,
        positive=bool(np.all(prof.v > 0)), history=hist,
    )


def spike_at(sp: ShadowParams, lam, n=None) -> SpikeSolution:
    """Profile at a prescribed lambda, packaged like :func:`solve_lambda` output."""
    prof = solve_shadow_profile(sp, lam, n)
    try:
        G = constraint(sp, prof)
    except ShadowError:
        G = float("nan")
    u = lam * np.exp(-sp.r * prof.v)
    return SpikeSolution(float(lam), prof.x, prof.v, u, abs(G), prof.residual, sp.eps, prof.roots,
                         prof.ground.peak, prof.ground.peak_half, bool(np.all(prof.v > 0)))


def reconstruct_full(sp: ShadowParams, sol: SpikeSolution, D1, n=None) -> StateField:
    """``(u, v) = (lam e^{-r v}, v)`` on a cell-centred grid for the full solver."""
    if n is None:
        x, v = sol.x, sol.v_profile
        xc = 0.5 * (x[:-1] + x[1:])
        vc = np.interp(xc, x, v)
    else:
        xc = (np.arange(n) + 0.5) * sp.L / n
        vc = np.interp(xc, sol.x, sol.v_profile)
    u = sol.lambda_eps * np.exp(-sp.r * vc)
    return StateField(0.0, u, vc, sp.L)


def export_spike(sol: SpikeSolution, sp: ShadowParams, csv_path, json_path=None):
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "v_eps", "u_eps"])
        for xi, vi, ui in zip(sol.x, sol.v_profile, sol.u_profile):
            w.writerow([repr(float(xi)), repr(float(vi)), repr(float(ui))])
    rec = {
        "eps": sol.eps,
        "lambda_eps": sol.lambda_eps,
        "constraint_residual": sol.constraint_residual,
        "profile_residual": sol.profile_residual,
        "lambda_max": sol.roots.lambda_max,
        "roots": {k: getattr(sol.roots, k) for k in ("s1", "s2", "s3", "s4", "sstar")},
        "ground_peak_energy": sol.ground_peak,
        "ground_peak_half_gap": sol.ground_peak_half,
        "v_at_0": float(sol.v_profile[0]),
        "v_at_half": float(np.interp(sp.L / 2, sol.x, sol.v_profile)),
        "positive": sol.positive,
        "params": sp.to_dict(),
    }
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, indent=2, sort_keys=True)
    return rec

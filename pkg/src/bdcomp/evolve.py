"""Time integration of the scaled system on (0, L) with no-flux ends.

The u-equation is discretised in conservative form on a cell-centred grid,

    du_i/dt = (F_{i+1/2} - F_{i-1/2}) / dx + f(u_i, v_i),
    F_{i+1/2} = D1 (u_{i+1} - u_i) / dx + chi u_up phi(v_face) (v_{i+1} - v_i) / dx,

with ``u_up`` taken from the upwind side of the drift and ``F = 0`` on both
end faces.  Steps are first-order IMEX: diffusion implicit (one tridiagonal
solve per species), advection and reactions explicit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kinetics import ScaledParams


class PositivityError(RuntimeError):
    """A density fell below the round-off floor during a step."""

    def __init__(self, msg, t=None, dt=None):
        super().__init__(msg)
        self.t = t
        self.dt = dt


@dataclass(frozen=True)
class Grid1D:
    L: float
    n: int

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("grid needs at least 16 cells")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self):
        return self.L / self.n

    @property
    def x(self):
        return (np.arange(self.n) + 0.5) * self.dx


@dataclass
class StateField:
    t: float
    u: np.ndarray
    v: np.ndarray
    L: float

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 1:
            raise ValueError("u and v must be 1-D arrays of equal length")

    @property
    def n(self):
        return self.u.size

    @property
    def grid(self):
        return Grid1D(self.L, self.n)

    @property
    def x(self):
        return self.grid.x

    def copy(self):
        return StateField(self.t, self.u.copy(), self.v.copy(), self.L)


@dataclass
class SimOptions:
    """Controls for :func:`simulate`.

    ``stride`` is the time between recorded snapshots; the steady-state
    residual is checked at the same instants.
    """

    tol: float = 1e-8
    stride: float = 1.0
    dt_max: float = 0.25
    backend: str | None = None
    scheme: int = kernels.UPWIND
    stop_at_steady: bool = True
    max_steps: int = 10**9


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    converged: bool = False
    steps: int = 0
    message: str = ""

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self):
        return self.snapshots[-1]


# ---------------------------------------------------------------------------

def _packs(p, n):
    return kernels.pack_params(p, p.L / n), kernels.pack_phi(p.phi)


def residual(p: ScaledParams, s: StateField, backend=None, scheme=kernels.UPWIND):
    """Discrete right-hand side ``(u_t, v_t)`` at state ``s``."""
    prm, ph = _packs(p, s.n)
    return kernels.get_backend(backend).rhs(s.u, s.v, prm, ph, scheme)


def residual_norm(p, s, backend=None, scheme=kernels.UPWIND):
    ru, rv = residual(p, s, backend, scheme)
    return float(max(np.abs(ru).max(), np.abs(rv).max()))


def face_fluxes(p: ScaledParams, s: StateField, backend=None, scheme=kernels.UPWIND):
    """Total u-flux on all ``n + 1`` faces, end faces included."""
    prm, ph = _packs(p, s.n)
    adv = kernels.get_backend(backend).flux(s.u, s.v, prm, ph, scheme)
    diff = p.D1 * np.diff(s.u) / (p.L / s.n)
    return np.concatenate(([0.0], diff + adv, [0.0]))


def stable_dt(p: ScaledParams, s: StateField, dt_max=0.25, backend=None):
    """Largest step for which the explicit part keeps densities non-negative."""
    prm, ph = _packs(p, s.n)
    return kernels.get_backend(backend).stable_dt(s.u, s.v, prm, ph, dt_max)


def step(p: ScaledParams, s: StateField, dt, backend=None, scheme=kernels.UPWIND) -> StateField:
    """One IMEX step of length ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    prm, ph = _packs(p, s.n)
    out = s.copy()
    t, _, status, _ = kernels.get_backend(backend).advance(
        out.u, out.v, prm, ph, s.t, s.t + dt, dt, adaptive=False, max_steps=1, scheme=scheme)
    if status != kernels.OK:
        lim = stable_dt(p, s)
        raise PositivityError(
            f"step of dt={dt:.3e} lost positivity at t={s.t:.6g}; stable bound is {lim:.3e}", s.t, dt)
    out.t = s.t + dt
    return out


def dominant_mode(s: StateField, rel_floor=1e-10):
    """Index ``k >= 1`` of the largest cosine coefficient of ``u - mean(u)``; 0 if flat."""
    coef = cosine_coefficients(s.u, s.L)
    if coef.size == 0:
        return 0
    scale = max(np.abs(s.u).max(), 1e-300)
    if np.abs(coef).max() <= rel_floor * scale:
        return 0
    return int(np.argmax(np.abs(coef))) + 1


def cosine_coefficients(w, L, k_max=None):
    """Amplitudes ``(2/L) int (w - mean w) cos(k pi x / L) dx`` for k = 1..k_max."""
    w = np.asarray(w, dtype=float)
    n = w.size
    k_max = n // 2 if k_max is None else k_max
    dx = L / n
    x = (np.arange(n) + 0.5) * dx
    k = np.arange(1, k_max + 1)[:, None]
    basis = np.cos(k * np.pi * x[None, :] / L)
    return (2.0 / L) * (basis @ (w - w.mean())) * dx


def _diagnose(p, s, backend, scheme):
    dx = s.L / s.n
    ru, rv = residual(p, s, backend, scheme)
    return {
        "t": s.t,
        "mass_u": float(s.u.sum() * dx),
        "mass_v": float(s.v.sum() * dx),
        "sup_u": float(s.u.max()),
        "sup_v": float(s.v.max()),
        "min_u": float(s.u.min()),
        "min_v": float(s.v.min()),
        "mode": dominant_mode(s),
        "residual": float(max(np.abs(ru).max(), np.abs(rv).max())),
    }


def simulate(p: ScaledParams, ic: StateField, T, opts: SimOptions | None = None) -> Trajectory:
    """Integrate from ``ic`` up to time ``ic.t + T`` or until steady.

    The time step is re-estimated before every step from the current
    drift, capped by ``opts.dt_max``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    opts = opts or SimOptions()
    be = kernels.get_backend(opts.backend)
    prm, ph = _packs(p, ic.n)
    cur = ic.copy()
    traj = Trajectory()
    traj.snapshots.append(cur.copy())
    traj.diagnostics.append(_diagnose(p, cur, opts.backend, opts.scheme))
    t_end = ic.t + T
    while cur.t < t_end - 1e-12:
        target = min(cur.t + opts.stride, t_end)
        t, nsteps, status, dt = be.advance(cur.u, cur.v, prm, ph, cur.t, target, opts.dt_max,
                                           adaptive=True, max_steps=opts.max_steps - traj.steps,
                                           scheme=opts.scheme)
        traj.steps += int(nsteps)
        cur.t = float(t)
        if status != kernels.OK:
            kind = "non-finite values" if status == kernels.NONFINITE else "negative density"
            raise PositivityError(f"{kind} at t={cur.t:.6g} (last dt={dt:.3e})", cur.t, dt)
        diag = _diagnose(p, cur, opts.backend, opts.scheme)
        traj.snapshots.append(cur.copy())
        traj.diagnostics.append(diag)
        if opts.stop_at_steady and diag["residual"] < opts.tol:
            traj.converged = True
            traj.message = f"steady at t={cur.t:.6g}"
            return traj
        if traj.steps >= opts.max_steps:
            break
    traj.converged = traj.diagnostics[-1]["residual"] < opts.tol
    traj.message = "steady" if traj.converged else f"not steady at horizon (residual {traj.diagnostics[-1]['residual']:.3e})"
    return traj


def mass_bounds_check(traj: Trajectory, p: ScaledParams, rtol=1e-6, vtol=1e-8):
    """Check the L1 bound on u and the sup bound on v along a trajectory."""
    s0 = traj.snapshots[0]
    dx = s0.L / s0.n
    m0 = float(s0.u.sum() * dx)
    mass_cap = max(m0, p.L / p.b1) * (1 + rtol)
    v_cap = max(float(s0.v.max()), (1 - p.a2) / p.c2) + vtol
    rows = []
    for s in traj.snapshots:
        m = float(s.u.sum() * (s.L / s.n))
        vm = float(s.v.max())
        rows.append({"t": s.t, "mass_u": m, "mass_ok": m <= mass_cap, "sup_v": vm, "sup_v_ok": vm <= v_cap})
    return {
        "mass_cap": mass_cap,
        "v_cap": v_cap,
        "rows": rows,
        "passed": all(r["mass_ok"] and r["sup_v_ok"] for r in rows),
    }


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def constant_state(u0, v0, grid: Grid1D, t=0.0):
    return StateField(t, np.full(grid.n, float(u0)), np.full(grid.n, float(v0)), grid.L)


def cosine_perturbation(ubar, vbar, grid: Grid1D, amp=0.01, k=1, ratio=(1.0, 1.0)):
    """``(ubar, vbar) + amp cos(k pi x / L) * ratio``."""
    c = np.cos(k * np.pi * grid.x / grid.L)
    return StateField(0.0, ubar + amp * ratio[0] * c, vbar + amp * ratio[1] * c, grid.L)


def broadband_perturbation(ubar, vbar, grid: Grid1D, modes=range(1, 7), amp=0.005):
    """Sum of cosine modes with equal amplitude added to both components."""
    pert = sum(amp * np.cos(k * np.pi * grid.x / grid.L) for k in modes)
    return StateField(0.0, ubar + pert, vbar + pert, grid.L)


def tabulated(x, u, v, grid: Grid1D):
    """Linear interpolation of user profiles onto the grid."""
    x = np.asarray(x, dtype=float)
    uu = np.interp(grid.x, x, np.asarray(u, dtype=float))
    vv = np.interp(grid.x, x, np.asarray(v, dtype=float))
    if np.any(uu < 0) or np.any(vv < 0):
        raise ValueError("tabulated profiles must be non-negative")
    return StateField(0.0, uu, vv, grid.L)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_snapshot_csv(path, s: StateField):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u", "v"])
        for xi, ui, vi in zip(s.x, s.u, s.v):
            w.writerow([repr(float(xi)), repr(float(ui)), repr(float(vi))])


def export_trajectory(traj: Trajectory, p: ScaledParams, outdir, every=1):
    """One CSV per recorded snapshot plus ``manifest.json``; returns the manifest dict."""
    os.makedirs(outdir, exist_ok=True)
    files = []
    idx = list(range(0, len(traj.snapshots), max(1, every)))
    if idx[-1] != len(traj.snapshots) - 1:
        idx.append(len(traj.snapshots) - 1)
    width = max(4, len(str(len(traj.snapshots))))
    for i in idx:
        name = f"snapshot_{i:0{width}d}.csv"
        write_snapshot_csv(os.path.join(outdir, name), traj.snapshots[i])
        files.append({"file": name, "t": traj.snapshots[i].t, "diagnostics": traj.diagnostics[i]})
    g = traj.snapshots[0]
    manifest = {
        "params": p.to_dict(),
        "grid": {"L": g.L, "n": g.n, "dx": g.L / g.n},
        "times": [traj.snapshots[i].t for i in idx],
        "snapshots": files,
        "converged": traj.converged,
        "steps": traj.steps,
        "message": traj.message,
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def growth_rate(times, amplitudes):
    """Least-squares slope of ``log|a(t)|``."""
    t = np.asarray(times, dtype=float)
    a = np.log(np.abs(np.asarray(amplitudes, dtype=float)))
    return float(np.polyfit(t, a, 1)[0])


__all__ = [
    "Grid1D", "StateField", "SimOptions", "Trajectory", "PositivityError",
    "step", "simulate", "dominant_mode", "mass_bounds_check", "residual", "residual_norm",
    "cosine_coefficients", "constant_state", "cosine_perturbation", "broadband_perturbation",
    "tabulated", "export_trajectory", "write_snapshot_csv", "growth_rate", "stable_dt",
    "face_fluxes",
]

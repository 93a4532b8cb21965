"""Linear stability of the coexistence state and the local bifurcation branches.

For the cosine mode ``cos(k pi x / L)`` with ``kappa = k pi / L`` the
linearisation about ``(ubar, vbar)`` reduces to the 2x2 matrix

    [ -D1 kappa^2 - b1 ubar    -chi ubar phi(vbar) kappa^2 - c1 ubar ]
    [ -b2 vbar                 -D2 kappa^2 - c2 vbar                 ]

whose characteristic polynomial is ``lam^2 + T_k lam + D_k``.  ``chi_k`` is
the value of ``chi`` at which ``D_k`` vanishes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kinetics import ScaledParams, coexistence, kinetics_derivatives


class DegenerateResonance(ArithmeticError):
    """The mode-2k system used for the second-order correction is singular."""


def _kappa2(p: ScaledParams, k, dx=None):
    # Continuous eigenvalue (k pi / L)^2, or the one of the three-point
    # Neumann Laplacian on a cell-centred grid of spacing dx.
    if dx is None:
        return (k * math.pi / p.L) ** 2
    return (4.0 / dx**2) * math.sin(k * math.pi * dx / (2.0 * p.L)) ** 2


def _base(p: ScaledParams):
    eq = coexistence(p)
    vb = eq.v
    return eq.u, vb, float(p.phi(vb)), float(p.phi.d1(vb)), float(p.phi.d2(vb))


def chi_k_value(p: ScaledParams, k, dx=None):
    """Bifurcation value for mode ``k`` (optionally for the discrete Laplacian)."""
    ub, vb, ph, _, _ = _base(p)
    kap2 = _kappa2(p, k, dx)
    num = (p.D1 * kap2 + p.b1 * ub) * (p.D2 * kap2 + p.c2 * vb) - p.b2 * p.c1 * ub * vb
    return num / (p.b2 * kap2 * ph * ub * vb)


def _stable_roots(T, D):
    """Roots of lam^2 + T lam + D avoiding cancellation."""
    disc = T * T - 4.0 * D
    if disc >= 0:
        q = -0.5 * (T + math.copysign(math.sqrt(disc), T))
        r1 = q
        r2 = D / q if q != 0 else 0.0
        return tuple(sorted((complex(r1), complex(r2)), key=lambda z: -z.real))
    s = math.sqrt(-disc)
    return (complex(-T / 2, s / 2), complex(-T / 2, -s / 2))


@dataclass(frozen=True)
class ModeAnalysis:
    k: int
    mu_k: float
    T_k: float
    D_k: float
    eigenvalues: tuple
    chi_k: float
    Q_k: float

    def leading(self):
        """Eigenvalue with the largest real part."""
        return max(self.eigenvalues, key=lambda z: z.real)


def mode_matrix(p: ScaledParams, chi, k, dx=None):
    """The 2x2 linearisation restricted to mode ``k``."""
    ub, vb, ph, _, _ = _base(p)
    kap2 = _kappa2(p, k, dx)
    return np.array([
        [-p.D1 * kap2 - p.b1 * ub, -chi * ub * ph * kap2 - p.c1 * ub],
        [-p.b2 * vb, -p.D2 * kap2 - p.c2 * vb],
    ])


def mode_analysis(p: ScaledParams, chi, k, dx=None) -> ModeAnalysis:
    """Spectral data of mode ``k`` at advection strength ``chi``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    k = int(k)
    ub, vb, ph, _, _ = _base(p)
    kap2 = _kappa2(p, k, dx)
    T = (p.D1 + p.D2) * kap2 + p.b1 * ub + p.c2 * vb
    D = (p.D1 * kap2 + p.b1 * ub) * (p.D2 * kap2 + p.c2 * vb) \
        - (chi * ub * ph * kap2 + p.c1 * ub) * p.b2 * vb
    Q = -(p.D2 * kap2 + p.c2 * vb) / (p.b2 * vb)
    return ModeAnalysis(k, kap2, T, D, _stable_roots(T, D), chi_k_value(p, k, dx), Q)


def chi_threshold(p: ScaledParams, k_max=200, run=10, dx=None):
    """Minimising mode ``k0`` and ``chi_k0 = min_k chi_k``.

    The scan stops once ``chi_k`` has increased for ``run`` consecutive modes
    beyond the current minimiser.
    """
    best_k, best = 1, chi_k_value(p, 1, dx)
    prev, rising = best, 0
    for k in range(2, k_max + 1):
        if dx is not None and k * dx >= p.L:
            break
        c = chi_k_value(p, k, dx)
        if c < best:
            best_k, best = k, c
        rising = rising + 1 if c > prev else 0
        prev = c
        if rising >= run and k > best_k:
            break
    if best <= 0:
        warnings.warn(f"chi_k0 = {best:.6g} <= 0: the constant state is unstable without advection",
                      RuntimeWarning, stacklevel=2)
    return best_k, best


def chi_table(p: ScaledParams, k_max=20):
    return [(k, chi_k_value(p, k)) for k in range(1, k_max + 1)]


def unstable_modes(p: ScaledParams, chi, k_max=200):
    """Modes with a positive real eigenvalue, i.e. ``D_k < 0``."""
    return {k for k in range(1, k_max + 1) if mode_analysis(p, chi, k).D_k < 0}


def simplicity_check(p: ScaledParams, k_max=50, rtol=1e-10):
    """Pairs ``k != j`` for which ``chi_k == chi_j`` (within ``rtol``)."""
    eq = coexistence(p)
    lhs = (p.b1 * p.c2 - p.b2 * p.c1) * eq.u * eq.v
    base = p.D1 * p.D2 * (math.pi / p.L) ** 4
    bad = []
    for k in range(1, k_max + 1):
        for j in range(k + 1, k_max + 1):
            rhs = k * k * j * j * base
            if abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs)):
                bad.append((k, j))
    return bad


def mu_dot(p: ScaledParams, k0):
    """Rate ``-b2 ubar phi vbar kappa^2 / T_k`` at the threshold of mode ``k0``.

    This is minus the derivative of the near-zero eigenvalue of
    :func:`mode_matrix` with respect to ``chi`` (the eigenvalue itself
    crosses zero upwards as ``chi`` grows).
    """
    ub, vb, ph, _, _ = _base(p)
    kap2 = _kappa2(p, k0)
    T = (p.D1 + p.D2) * kap2 + p.b1 * ub + p.c2 * vb
    return -p.b2 * ub * ph * vb * kap2 / T


# ---------------------------------------------------------------------------
# second-order branch coefficient
# ---------------------------------------------------------------------------

@dataclass
class BifurcationReport:
    k: int
    k0: int
    chi_k: float
    chi_k0: float
    Q: float
    P: tuple
    I_psi1: float
    I_phi1: float
    J_psi1: float
    J_phi1: float
    detA: float
    detA1: float
    detA2: float
    S_psi2: float
    S_phi2: float
    K1: float
    K2: float
    branch_stable: bool | None
    mu_dot: float
    terms: dict = field(default_factory=dict)


def p_coefficients(p: ScaledParams, Q, ub, vb):
    """``P1 .. P8`` in their closed polynomial forms."""
    b1, c1, b2, c2 = p.b1, p.c1, p.b2, p.c2
    P1 = b1 * (b1 * ub - 1) * Q**2 + c1 * (2 * b1 * ub - 1) * Q + c1**2 * ub
    P2 = b2**2 * vb * Q**2 + b2 * (2 * c2 * vb - 1) * Q + c2 * (c2 * vb - 1)
    P3 = (b1**2 * (1 - b1 * ub) * Q**3 + b1 * c1 * (2 - 3 * b1 * ub) * Q**2
          + c1**2 * (1 - 3 * b1 * ub) * Q - c1**3 * ub)
    P4 = (-b2**3 * vb * Q**3 + b2**2 * (1 - 3 * c2 * vb) * Q**2
          + b2 * c2 * (2 - 3 * c2 * vb) * Q + c2**2 * (1 - c2 * vb))
    P5 = 2 * b1 * (b1 * ub - 1) * Q + c1 * (2 * b1 * ub - 1)
    P6 = c1 * (2 * b1 * ub - 1) * Q + 2 * c1**2 * ub
    P7 = 2 * b2**2 * vb * Q + b2 * (2 * c2 * vb - 1)
    P8 = b2 * (2 * c2 * vb - 1) * Q + 2 * c2 * (c2 * vb - 1)
    return (P1, P2, P3, P4, P5, P6, P7, P8)


def p_coefficients_from_derivatives(p: ScaledParams, Q, ub, vb):
    """``P1 .. P8`` assembled from the derivative table of the kinetics."""
    d = kinetics_derivatives(p, ub, vb, order=3)
    P1 = 0.5 * (d["f_uu"] * Q**2 + 2 * d["f_uv"] * Q + d["f_vv"])
    P2 = 0.5 * (d["g_uu"] * Q**2 + 2 * d["g_uv"] * Q + d["g_vv"])
    P3 = (d["f_uuu"] * Q**3 + 3 * d["f_uuv"] * Q**2 + 3 * d["f_uvv"] * Q + d["f_vvv"]) / 6
    P4 = (d["g_uuu"] * Q**3 + 3 * d["g_uuv"] * Q**2 + 3 * d["g_uvv"] * Q + d["g_vvv"]) / 6
    P5 = d["f_uu"] * Q + d["f_uv"]
    P6 = d["f_uv"] * Q + d["f_vv"]
    P7 = d["g_uu"] * Q + d["g_uv"]
    P8 = d["g_uv"] * Q + d["g_vv"]
    return (P1, P2, P3, P4, P5, P6, P7, P8)


def _second_order(p, k):
    # shared pieces of the printed assembly and the projection oracle
    ub, vb, ph, ph1, ph2 = _base(p)
    kap2 = _kappa2(p, k)
    chi = chi_k_value(p, k)
    Q = -(p.D2 * kap2 + p.c2 * vb) / (p.b2 * vb)
    P = p_coefficients(p, Q, ub, vb)
    E = ph * Q + ub * ph1
    return ub, vb, ph, ph1, ph2, kap2, chi, Q, P, E


def weakly_nonlinear(p: ScaledParams, k=None, k_max=200, atol=1e-12) -> BifurcationReport:
    """Branch coefficients ``K1`` (zero) and ``K2`` for mode ``k``.

    ``K2`` is solved from the projection of the third-order equation onto
    ``cos(k pi x / L)``, with the mean and ``cos(2 k pi x / L)`` moments of
    the second-order correction taken from their closed forms.  The branch
    verdict (stable iff ``K2 > 0``) is only filled in when ``k`` is the
    minimising mode.
    """
    k0, chi0 = chi_threshold(p, k_max)
    k = k0 if k is None else int(k)
    ub, vb, ph, ph1, ph2, kap2, chi, Q, P, E = _second_order(p, k)
    P1, P2, P3, P4, P5, P6, P7, P8 = P
    L = p.L
    det_bc = p.b1 * p.c2 - p.b2 * p.c1
    if abs(det_bc) < atol:
        raise DegenerateResonance("b1 c2 == b2 c1: mean mode of the second-order system is singular")

    I_psi = L * (p.c2 * vb * P1 - p.c1 * ub * P2) / (2 * det_bc * ub * vb)
    I_phi = L * (p.b1 * ub * P2 - p.b2 * vb * P1) / (2 * det_bc * ub * vb)

    kap4 = kap2 * kap2
    detA = 12 * p.D1 * p.D2 * kap4 - 3 * det_bc * ub * vb
    scale = 12 * p.D1 * p.D2 * kap4 + 3 * abs(det_bc) * ub * vb
    if abs(detA) <= 1e-12 * scale:
        raise DegenerateResonance(f"mode {2 * k} is resonant with mode {k} (|A| = {detA:.3e})")
    detA1 = (-2 * chi * p.D2 * L * kap4 * E + (L / 4) * (p.c2 * vb * P1 - p.c1 * ub * P2)
             + kap2 * L * (p.D2 * P1 - chi * ub * ph * P2 - 0.5 * chi * p.c2 * vb * E))
    detA2 = kap2 * L * (p.D1 * P2 + 0.5 * chi * p.b2 * vb * E) \
        + (L / 4) * (p.b1 * ub * P2 - p.b2 * vb * P1)
    J_psi = detA1 / detA
    J_phi = detA2 / detA

    den = 2 * p.b2 * vb * (Q**2 + 1)
    rhs2 = (J_psi + I_psi) * P7 + (J_phi + I_phi) * P8 + 0.75 * P4 * L
    S_psi = rhs2 / den
    S_phi = -Q * rhs2 / den

    terms = {
        "S_psi2": -2 * (p.D1 * kap2 + p.b1 * ub) * S_psi,
        "S_phi2": -2 * (chi * ub * ph * kap2 + p.c1 * ub) * S_phi,
        "I_psi1": (P5 - chi * ph * kap2) * I_psi,
        "I_phi1": (P6 - chi * ub * ph1 * kap2) * I_phi,
        "J_psi1": (P5 + chi * ph * kap2) * J_psi,
        "J_phi1": (P6 - chi * (2 * ph * Q + ub * ph1) * kap2) * J_phi,
        "cubic": 0.75 * L * P3 - (ph1 * Q + 0.5 * ub * ph2) * kap2 * L * chi / 4,
    }
    lhs = ub * ph * kap2 * L
    K2 = sum(terms.values()) / lhs
    stable = bool(K2 > 0) if k == k0 else None
    return BifurcationReport(
        k=k, k0=k0, chi_k=chi, chi_k0=chi0, Q=Q, P=P,
        I_psi1=I_psi, I_phi1=I_phi, J_psi1=J_psi, J_phi1=J_phi,
        detA=detA, detA1=detA1, detA2=detA2, S_psi2=S_psi, S_phi2=S_phi,
        K1=0.0, K2=K2, branch_stable=stable, mu_dot=mu_dot(p, k), terms=terms,
    )


def k2_projection(p: ScaledParams, k, nquad=64):
    """Independent evaluation of ``K2`` by solving the second-order problem
    mode by mode and projecting the third-order residual with the left null
    vector of the mode-``k`` matrix.  Integrals use Gauss-Legendre quadrature.

    Returns ``(K2, (A0, A2, B0, B2))`` where the second-order correction is
    ``psi1 = A0 + A2 cos(2 kappa x)``, ``phi1 = B0 + B2 cos(2 kappa x)``.
    """
    ub, vb, ph, ph1, ph2, kap2, chi, Q, P, E = _second_order(p, k)
    P1, P2, P3, P4, P5, P6, P7, P8 = P
    kap = math.sqrt(kap2)
    L = p.L
    A0, B0 = np.linalg.solve(
        [[p.b1 * ub, p.c1 * ub], [p.b2 * vb, p.c2 * vb]], [P1 / 2, P2 / 2])
    A2, B2 = np.linalg.solve(
        [[4 * p.D1 * kap2 + p.b1 * ub, 4 * chi * ub * ph * kap2 + p.c1 * ub],
         [p.b2 * vb, 4 * p.D2 * kap2 + p.c2 * vb]],
        [P1 / 2 - chi * kap2 * E, P2 / 2])

    xg, wg = np.polynomial.legendre.leggauss(nquad)
    x = 0.5 * L * (xg + 1)
    w = 0.5 * L * wg
    c = np.cos(kap * x)
    sn = np.sin(kap * x)
    c2 = np.cos(2 * kap * x)
    psi1 = A0 + A2 * c2
    phi1 = B0 + B2 * c2
    dphi1 = -2 * kap * B2 * np.sin(2 * kap * x)
    N3 = (psi1 * ph + ub * ph1 * phi1 + 0.5 * ub * ph2 * c * c + ph1 * Q * c * c) * (-kap * sn) \
        + E * c * dphi1
    w1 = p.b2 * vb
    w2 = -(p.D1 * kap2 + p.b1 * ub)
    u_part = chi * kap * np.dot(w, N3 * sn) + np.dot(w, (P5 * psi1 + P6 * phi1) * c * c) \
        + np.dot(w, P3 * c**4)
    v_part = np.dot(w, (P7 * psi1 + P8 * phi1) * c * c) + np.dot(w, P4 * c**4)
    K2 = (w1 * u_part + w2 * v_part) / (w1 * ub * ph * kap2 * L / 2)
    return K2, (A0, A2, B0, B2)

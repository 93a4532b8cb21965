"""Named parameter sets used by the examples, tests and CLI configs."""

from __future__ import annotations

from .kinetics import ScaledParams
from .shadow import ShadowParams

PATTERN_LENGTHS = (3, 5, 7, 9, 11, 13, 15, 17, 19, 21)


def pattern_params(L=3.0, chi=0.0) -> ScaledParams:
    """Weak-competition set with ``D2/D1 = 0.1`` and constant sensitivity."""
    return ScaledParams(D1=1.0, D2=0.1, chi=chi, a1=0.5, b1=2.0, c1=0.5,
                        a2=0.5, b2=1.0, c2=1.0, L=float(L))


def spike_params(L=5.0, chi=30.0) -> ScaledParams:
    """Slow-diffusing ``v`` with strong advection; forms a single spike."""
    return ScaledParams(D1=5.0, D2=5e-3, chi=chi, a1=0.2, b1=0.8, c1=0.1,
                        a2=0.6, b2=0.2, c2=0.4, L=float(L))


def spike_initial(grid, amp=0.5, k=2):
    """Equilibrium plus ``amp cos(k pi x / L)`` in both components."""
    from .evolve import cosine_perturbation
    from .kinetics import coexistence

    e = coexistence(spike_params(grid.L))
    return cosine_perturbation(e.u, e.v, grid, amp, k)


def shadow_default(eps=0.1, L=5.0) -> ShadowParams:
    """``r = 1``, ``v* = 1`` with the kinetics of :func:`spike_params`."""
    return ShadowParams(r=1.0, eps=eps, a1=0.2, b1=0.8, c1=0.1, a2=0.6, b2=0.2, c2=0.4, L=L)


def shadow_limit_target(sp: ShadowParams):
    """``(1 - a2) / (2 c2)``, the small-lambda value of ``v(0)``."""
    return (1.0 - sp.a2) / (2.0 * sp.c2)


SHADOW_EPS = (0.1, 0.05, 0.025, 0.0125)

__all__ = ["PATTERN_LENGTHS", "pattern_params", "spike_params", "spike_initial", "shadow_default",
           "shadow_limit_target", "SHADOW_EPS"]

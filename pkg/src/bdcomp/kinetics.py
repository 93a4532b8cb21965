"""Beddington-DeAngelis competition kinetics.

The reaction terms are

    f(u, v) = (-1 + 1 / (a1 + b1 u + c1 v)) u
    g(u, v) = (-1 + 1 / (a2 + b2 u + c2 v)) v

in the scaled form where all death and growth rates equal one.  Raw
parameter sets with general rates are held in :class:`SystemParams` and
reduced by :func:`nondimensionalize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from math import factorial

import numpy as np

_DEGENERATE_RTOL = 1e-14


class KineticsDomainError(ValueError):
    """Raised when densities are negative."""


class NoCoexistence(ValueError):
    """Raised when the positive constant state does not exist."""


# ---------------------------------------------------------------------------
# sensitivity function phi(v)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sensitivity:
    """Sensitivity function phi(v) of the directed movement.

    Three forms are supported: ``constant`` (``phi = c0``), ``linear``
    (``phi = c0 + c1 v``) and ``table`` (natural cubic spline through
    ``(knots, values)``, held constant outside the knot range).  Use the
    classmethod constructors rather than the raw fields.
    """

    kind: str = "constant"
    c0: float = 1.0
    c1: float = 0.0
    knots: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "table"):
            raise ValueError(f"unknown sensitivity kind {self.kind!r}")
        if self.kind in ("constant", "linear"):
            if not self.c0 > 0:
                raise ValueError("phi(0) must be positive")
            if self.c1 < 0:
                raise ValueError("linear phi needs c1 >= 0 to stay positive for all v >= 0")
        else:
            t = np.asarray(self.knots, dtype=float)
            y = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.size < 3 or t.shape != y.shape:
                raise ValueError("table phi needs at least three (knot, value) pairs")
            if np.any(np.diff(t) <= 0):
                raise ValueError("table knots must be strictly increasing")
            dense = self(np.linspace(t[0], t[-1], 64 * t.size))
            if np.any(dense <= 0):
                raise ValueError("table phi must stay positive")

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", float(c), 0.0)

    @classmethod
    def linear(cls, c0, c1):
        return cls("linear", float(c0), float(c1))

    @classmethod
    def table(cls, knots, values):
        return cls("table", 1.0, 0.0, tuple(map(float, knots)), tuple(map(float, values)))

    # spline coefficients in scipy's PPoly layout (highest power first)
    def spline_arrays(self):
        """Return ``(knots, coef)`` arrays usable by the compiled kernels."""
        if self.kind == "table":
            from scipy.interpolate import CubicSpline

            cs = CubicSpline(np.asarray(self.knots), np.asarray(self.values), bc_type="natural")
            return np.ascontiguousarray(cs.x, dtype=float), np.ascontiguousarray(cs.c, dtype=float)
        coef = np.array([[0.0], [0.0], [self.c1], [self.c0]])
        return np.array([0.0, 1.0]), coef

    def _eval(self, v, nu):
        v = np.asarray(v, dtype=float)
        if self.kind == "constant":
            return np.full_like(v, self.c0 if nu == 0 else 0.0)
        if self.kind == "linear":
            return (self.c0 + self.c1 * v) if nu == 0 else np.full_like(v, self.c1 if nu == 1 else 0.0)
        t, c = self.spline_arrays()
        vc = np.clip(v, t[0], t[-1])
        i = np.clip(np.searchsorted(t, vc, side="right") - 1, 0, t.size - 2)
        h = vc - t[i]
        a3, a2, a1, a0 = c[0, i], c[1, i], c[2, i], c[3, i]
        if nu == 0:
            return ((a3 * h + a2) * h + a1) * h + a0
        outside = (v < t[0]) | (v > t[-1])
        if nu == 1:
            out = (3 * a3 * h + 2 * a2) * h + a1
        else:
            out = 6 * a3 * h + 2 * a2
        return np.where(outside, 0.0, out)

    def __call__(self, v):
        return self._eval(v, 0)

    def d1(self, v):
        return self._eval(v, 1)

    def d2(self, v):
        return self._eval(v, 2)

    def scaled(self, factor):
        """phi multiplied by a positive constant."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "table":
            return Sensitivity.table(self.knots, [factor * y for y in self.values])
        return replace(self, c0=self.c0 * factor, c1=self.c1 * factor)

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c0}
        if self.kind == "linear":
            return {"kind": "linear", "c0": self.c0, "c1": self.c1}
        return {"kind": "table", "knots": list(self.knots), "values": list(self.values)}

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls.constant()
        if isinstance(d, (int, float)):
            return cls.constant(d)
        kind = d.get("kind", "constant")
        if kind == "constant":
            return cls.constant(d.get("c", 1.0))
        if kind == "linear":
            return cls.linear(d["c0"], d["c1"])
        if kind == "table":
            return cls.table(d["knots"], d["values"])
        raise ValueError(f"unknown sensitivity kind {kind!r}")


# ---------------------------------------------------------------------------
# parameter sets
# ---------------------------------------------------------------------------

_POSITIVE = ("D1", "D2", "a1", "a2", "b1", "b2", "c1", "c2", "L")


@dataclass(frozen=True)
class ScaledParams:
    """Model constants with unit death and growth rates.

    ``time_scale``, ``length_scale``, ``beta1`` and ``beta2`` record the
    factors used by :func:`nondimensionalize` so the raw parameters can be
    recovered; they are all one for parameter sets written directly in
    scaled form.
    """

    D1: float
    D2: float
    chi: float
    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    L: float
    phi: Sensitivity = field(default_factory=Sensitivity.constant)
    time_scale: float = 1.0
    length_scale: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0

    def __post_init__(self):
        for name in _POSITIVE:
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not np.isfinite(self.chi):
            raise ValueError("chi must be finite")

    def with_(self, **changes):
        return replace(self, **changes)

    @property
    def kinetic(self):
        """``(a1, b1, c1, a2, b2, c2)`` as a tuple."""
        return (self.a1, self.b1, self.c1, self.a2, self.b2, self.c2)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "phi"}
        out["phi"] = self.phi.to_dict()
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["phi"] = Sensitivity.from_dict(d.get("phi"))
        return cls(**d)


@dataclass(frozen=True)
class SystemParams:
    """Raw model constants, including the death rates ``alpha`` and growth rates ``beta``."""

    D1: float
    D2: float
    chi: float
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    L: float
    phi: Sensitivity = field(default_factory=Sensitivity.constant)

    def __post_init__(self):
        for name in _POSITIVE + ("alpha1", "alpha2", "beta1", "beta2"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not np.isfinite(self.chi):
            raise ValueError("chi must be finite")

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "phi"}
        out["phi"] = self.phi.to_dict()
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["phi"] = Sensitivity.from_dict(d.get("phi"))
        return cls(**d)


def nondimensionalize(p: SystemParams) -> ScaledParams:
    """Rescale time and space so that every death and growth rate is one.

    With ``t' = alpha t`` and ``x' = sqrt(alpha) x`` the diffusion and
    advection coefficients are unchanged, the domain becomes
    ``sqrt(alpha) L`` and each kinetic constant is multiplied by
    ``alpha / beta_i``.  A single time scale cannot normalise two
    different death rates, so ``alpha1 == alpha2`` is required.
    """
    if not math.isclose(p.alpha1, p.alpha2, rel_tol=1e-12):
        raise ValueError(
            "alpha1 != alpha2: one time scale cannot bring both death rates to one"
        )
    alpha = p.alpha1
    k1 = alpha / p.beta1
    k2 = alpha / p.beta2
    return ScaledParams(
        D1=p.D1, D2=p.D2, chi=p.chi,
        a1=p.a1 * k1, b1=p.b1 * k1, c1=p.c1 * k1,
        a2=p.a2 * k2, b2=p.b2 * k2, c2=p.c2 * k2,
        L=p.L * math.sqrt(alpha), phi=p.phi,
        time_scale=alpha, length_scale=math.sqrt(alpha),
        beta1=p.beta1, beta2=p.beta2,
    )


def dimensionalize(s: ScaledParams) -> SystemParams:
    """Inverse of :func:`nondimensionalize`."""
    alpha = s.time_scale
    k1 = alpha / s.beta1
    k2 = alpha / s.beta2
    return SystemParams(
        D1=s.D1, D2=s.D2, chi=s.chi, alpha1=alpha, alpha2=alpha,
        beta1=s.beta1, beta2=s.beta2,
        a1=s.a1 / k1, b1=s.b1 / k1, c1=s.c1 / k1,
        a2=s.a2 / k2, b2=s.b2 / k2, c2=s.c2 / k2,
        L=s.L / s.length_scale, phi=s.phi,
    )


# ---------------------------------------------------------------------------
# reaction terms
# ---------------------------------------------------------------------------

def _check_domain(u, v):
    if np.any(np.asarray(u) < 0) or np.any(np.asarray(v) < 0):
        raise KineticsDomainError("densities must be non-negative")


def eval_kinetics(p: ScaledParams, u, v):
    """Return ``(f, g)`` at densities ``u``, ``v`` (scalars or arrays)."""
    _check_domain(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    f = (-1.0 + 1.0 / (p.a1 + p.b1 * u + p.c1 * v)) * u
    g = (-1.0 + 1.0 / (p.a2 + p.b2 * u + p.c2 * v)) * v
    if f.ndim == 0:
        return float(f), float(g)
    return f, g


def _recip_partial(q, b, c, i, j):
    # d^{i+j}/du^i dv^j of 1/(a + b u + c v), written through q = 1/(...)
    n = i + j
    return (-1) ** n * factorial(n) * b**i * c**j * q ** (n + 1)


def kinetics_derivatives(p: ScaledParams, u, v, order=1):
    """Analytic partial derivatives of ``f`` and ``g`` up to ``order`` (1, 2 or 3).

    Keys are ``"f_u"``, ``"f_uv"``, ``"g_vvv"`` and so on; ``"f"`` and ``"g"``
    hold the values themselves.  For ``f = u q - u`` with
    ``q = 1/(a1 + b1 u + c1 v)`` the Leibniz rule gives
    ``f_{u^i v^j} = u q_{u^i v^j} + i q_{u^(i-1) v^j} - [i=1, j=0]``.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    _check_domain(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    q1 = 1.0 / (p.a1 + p.b1 * u + p.c1 * v)
    q2 = 1.0 / (p.a2 + p.b2 * u + p.c2 * v)
    out = {"f": (q1 - 1.0) * u, "g": (q2 - 1.0) * v}
    for n in range(1, order + 1):
        for i in range(n, -1, -1):
            j = n - i
            key = "u" * i + "v" * j
            fq = u * _recip_partial(q1, p.b1, p.c1, i, j)
            if i:
                fq = fq + i * _recip_partial(q1, p.b1, p.c1, i - 1, j)
            gq = v * _recip_partial(q2, p.b2, p.c2, i, j)
            if j:
                gq = gq + j * _recip_partial(q2, p.b2, p.c2, i, j - 1)
            if (i, j) == (1, 0):
                fq = fq - 1.0
            if (i, j) == (0, 1):
                gq = gq - 1.0
            out["f_" + key] = fq
            out["g_" + key] = gq
    if u.ndim == 0 and v.ndim == 0:
        out = {k: float(val) for k, val in out.items()}
    return out


# ---------------------------------------------------------------------------
# constant states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    u: float
    v: float
    kind: str  # extinction | u-only | v-only | coexistence


@dataclass(frozen=True)
class CompetitionRegime:
    tag: str  # weak | strong | none
    ratios: tuple  # (c1/c2, (1-a1)/(1-a2), b1/b2)
    reason: str = ""


@dataclass
class EquilibriumSet:
    """Admissible constant states plus the reason each omitted state was dropped."""

    states: list
    omitted: dict

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def get(self, kind):
        for s in self.states:
            if s.kind == kind:
                return s
        return None


def classify_regime(p: ScaledParams) -> CompetitionRegime:
    if p.a1 >= 1 or p.a2 >= 1:
        return CompetitionRegime("none", (p.c1 / p.c2, float("nan"), p.b1 / p.b2),
                                 "a1 >= 1 or a2 >= 1: a semi-trivial state is not positive")
    r1, r2, r3 = p.c1 / p.c2, (1 - p.a1) / (1 - p.a2), p.b1 / p.b2
    if r1 < r2 < r3:
        return CompetitionRegime("weak", (r1, r2, r3))
    if r3 < r2 < r1:
        return CompetitionRegime("strong", (r1, r2, r3))
    return CompetitionRegime("none", (r1, r2, r3), "ratios are not strictly ordered")


def coexistence(p: ScaledParams) -> Equilibrium:
    """The positive constant state, or :class:`NoCoexistence` with the reason."""
    den = p.b2 * p.c1 - p.b1 * p.c2
    scale = max(abs(p.b2 * p.c1), abs(p.b1 * p.c2))
    if abs(den) <= _DEGENERATE_RTOL * scale:
        raise NoCoexistence("degenerate: b2*c1 == b1*c2")
    regime = classify_regime(p)
    if regime.tag == "none":
        raise NoCoexistence("ordering condition fails: " + (regime.reason or "no strict chain"))
    ubar = ((1 - p.a2) * p.c1 - (1 - p.a1) * p.c2) / den
    vbar = ((1 - p.a1) * p.b2 - (1 - p.a2) * p.b1) / den
    return Equilibrium(ubar, vbar, "coexistence")


def compute_equilibria(p: ScaledParams) -> EquilibriumSet:
    """Closed-form constant states with non-negative components."""
    states = [Equilibrium(0.0, 0.0, "extinction")]
    omitted = {}
    if p.a2 < 1:
        states.append(Equilibrium(0.0, (1 - p.a2) / p.c2, "v-only"))
    else:
        omitted["v-only"] = "a2 >= 1 gives v <= 0"
    if p.a1 < 1:
        states.append(Equilibrium((1 - p.a1) / p.b1, 0.0, "u-only"))
    else:
        omitted["u-only"] = "a1 >= 1 gives u <= 0"
    try:
        states.append(coexistence(p))
    except NoCoexistence as exc:
        omitted["coexistence"] = str(exc)
    return EquilibriumSet(states, omitted)

"""Command-line front end.

``bdcomp analyze|simulate|continue|shadow --config run.json [--out DIR] [--check]``

A run is described by one JSON document.  Top-level fields can be
overridden from the command line.  Every run writes ``report.json`` and
``manifest.json`` into the output directory; the manifest lists every
other file the run produced.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed ``--check``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels
from . import evolve as ev
from . import shadow as sh
from . import spectral, steady, svgplot
from .kinetics import (NoCoexistence, ScaledParams, Sensitivity, SystemParams, classify_regime,
                       compute_equilibria, coexistence, nondimensionalize)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
WORKFLOWS = ("analyze", "simulate", "continue", "shadow")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {"workflow", "params", "grid", "time", "sweep", "output", "seed", "workers",
             "analyze", "simulate", "continue", "shadow", "expect"}
_SCALED_KEYS = {"D1", "D2", "chi", "a1", "b1", "c1", "a2", "b2", "c2", "L", "phi"}
_RAW_KEYS = _SCALED_KEYS | {"alpha1", "alpha2", "beta1", "beta2"}
_SECTION_DEFAULTS = {
    "analyze": {"k_max": 20},
    "simulate": {"chi_factor": None, "initial": {"type": "cosine", "amp": 0.01, "k": 1},
                 "scheme": "upwind", "backend": None, "dt_max": 0.25, "max_snapshots": 200},
    "continue": {"k0": None, "steps": 60, "ds": 1e-3, "chi_weight": 1e-4, "fit_window": 0.05},
    "shadow": {"r": 1.0, "eps": [0.1, 0.05, 0.025, 0.0125], "lambda": None, "n": None},
}
_TIME_DEFAULTS = {"T": 500.0, "tol": 1e-8, "stride": 1.0}
_GRID_DEFAULTS = {"n": 256}


@dataclass
class RunConfig:
    workflow: str
    params: dict
    grid: dict
    time: dict = field(default_factory=lambda: dict(_TIME_DEFAULTS))
    sweep: dict | None = None
    output: str = "bdcomp_out"
    seed: int = 0
    workers: int = 1
    options: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)

    # -- derived ------------------------------------------------------------

    def scaled_params(self) -> ScaledParams:
        d = dict(self.params)
        d["L"] = self.grid["L"]
        phi = Sensitivity.from_dict(d.pop("phi", None))
        d.setdefault("chi", 0.0)
        if "alpha1" in d:
            return nondimensionalize(SystemParams(phi=phi, **d))
        return ScaledParams(phi=phi, **d)

    def to_dict(self):
        out = {
            "workflow": self.workflow,
            "params": copy.deepcopy(self.params),
            "grid": dict(self.grid),
            "time": dict(self.time),
            "output": self.output,
            "seed": self.seed,
            "workers": self.workers,
            self.workflow: copy.deepcopy(self.options),
        }
        if self.sweep is not None:
            out["sweep"] = copy.deepcopy(self.sweep)
        if self.expect:
            out["expect"] = copy.deepcopy(self.expect)
        return out

    @classmethod
    def from_dict(cls, d, workflow=None):
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = sorted(set(d) - _TOP_KEYS)
        if unknown:
            raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
        wf = workflow or d.get("workflow")
        if wf not in WORKFLOWS:
            raise ConfigError(f"workflow: expected one of {', '.join(WORKFLOWS)}, got {wf!r}")
        if d.get("workflow") not in (None, wf):
            raise ConfigError(f"workflow: config says {d['workflow']!r} but command is {wf!r}")
        params = _section(d, "params", required=True)
        bad = sorted(set(params) - _RAW_KEYS)
        if bad:
            raise ConfigError(f"params: unknown field(s) {', '.join(bad)}")
        grid = {**_GRID_DEFAULTS, **_section(d, "grid")}
        if "L" not in grid:
            if "L" not in params:
                raise ConfigError("grid.L: domain length is required")
            grid["L"] = params["L"]
        elif "L" in params and float(params["L"]) != float(grid["L"]):
            raise ConfigError("params.L and grid.L disagree")
        params = {k: v for k, v in params.items() if k != "L"}
        time = {**_TIME_DEFAULTS, **_section(d, "time")}
        opts = _merge(_SECTION_DEFAULTS[wf], _section(d, wf), wf)
        sweep = d.get("sweep")
        cfg = cls(wf, params, grid, time, sweep, str(d.get("output", "bdcomp_out")),
                  int(d.get("seed", 0)), int(d.get("workers", 1)), opts, dict(d.get("expect", {})))
        cfg.validate()
        return cfg

    def validate(self):
        for k in set(self.params) - {"phi", "chi"}:
            _positive(f"params.{k}", self.params[k])
        if "chi" in self.params:
            _finite("params.chi", self.params["chi"])
        _positive("grid.L", self.grid["L"])
        n = self.grid["n"]
        if not isinstance(n, int) or n < 16:
            raise ConfigError(f"grid.n: expected an integer >= 16, got {n!r}")
        for k in ("T", "tol", "stride"):
            _positive(f"time.{k}", self.time[k])
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if self.sweep is not None:
            if not isinstance(self.sweep, dict) or set(self.sweep) != {"parameter", "values"}:
                raise ConfigError("sweep: expected {\"parameter\": name, \"values\": [...]}")
            name = self.sweep["parameter"]
            if name not in _RAW_KEYS - {"phi"} and name not in ("n", "eps"):
                raise ConfigError(f"sweep.parameter: unknown parameter {name!r}")
            vals = self.sweep["values"]
            if not isinstance(vals, list) or not vals:
                raise ConfigError("sweep.values: expected a non-empty list")
            for i, v in enumerate(vals):
                if name == "chi":
                    _finite(f"sweep.values[{i}]", v)
                else:
                    _positive(f"sweep.values[{i}]", v)
        if self.workflow == "simulate":
            sch = self.options["scheme"]
            if sch not in ("upwind", "central"):
                raise ConfigError(f"simulate.scheme: expected 'upwind' or 'central', got {sch!r}")
            ic = self.options["initial"]
            if ic.get("type") not in ("cosine", "broadband", "constant", "random", "table"):
                raise ConfigError(f"simulate.initial.type: unknown type {ic.get('type')!r}")
        if self.workflow == "shadow":
            eps = self.options["eps"]
            if not isinstance(eps, list) or not eps:
                raise ConfigError("shadow.eps: expected a non-empty list")
            for i, e in enumerate(eps):
                _positive(f"shadow.eps[{i}]", e)
        try:
            self.scaled_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"params: {exc}") from None

    def with_value(self, name, value):
        """Copy with one sweep parameter replaced."""
        c = copy.deepcopy(self)
        c.sweep = None
        if name == "L":
            c.grid["L"] = value
        elif name == "n":
            c.grid["n"] = int(value)
        elif name == "eps":
            c.options["eps"] = [value]
        else:
            c.params[name] = value
        return c


def _section(d, key, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"{key}: section is required")
        return {}
    val = d[key]
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected an object")
    return dict(val)


def _merge(defaults, given, prefix):
    bad = sorted(set(given) - set(defaults))
    if bad:
        raise ConfigError(f"{prefix}: unknown field(s) {', '.join(bad)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _finite(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name}: expected a finite number, got {v!r}")


def _positive(name, v):
    _finite(name, v)
    if v <= 0:
        raise ConfigError(f"{name}: must be positive, got {v!r}")


def load_config(path, workflow=None, overrides=None) -> RunConfig:
    """Parse a JSON config; decoding errors report line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for k, v in (overrides or {}).items():
        if v is not None:
            d[k] = v
    try:
        return RunConfig.from_dict(d, workflow)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def tagged(value, op, tol=None):
    """A numeric result together with the operation that produced it and its tolerance."""
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        value = None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return {"value": value, "op": op, "tol": tol}


@dataclass
class Report:
    workflow: str
    results: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    status: str = "ok"

    def to_dict(self):
        return {"workflow": self.workflow, "status": self.status, "results": self.results,
                "files": sorted(self.files), "checks": self.checks, "summary": "\n".join(self.summary),
                "version": __version__}

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def check(self, name, passed, detail=""):
        self.checks[name] = {"passed": bool(passed), "detail": detail}


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _emit(rep, outdir, name):
    rep.files.append(name)
    return os.path.join(outdir, name)


# ---------------------------------------------------------------------------
# workflows
# ---------------------------------------------------------------------------

def run_analyze(cfg: RunConfig, outdir) -> Report:
    p = cfg.scaled_params()
    rep = Report("analyze")
    eqs = compute_equilibria(p)
    reg = classify_regime(p)
    rep.results["equilibria"] = [{"kind": e.kind, "u": tagged(e.u, "kinetics.compute_equilibria", 1e-12),
                                  "v": tagged(e.v, "kinetics.compute_equilibria", 1e-12)} for e in eqs]
    rep.results["omitted"] = dict(eqs.omitted)
    rep.results["regime"] = {"tag": reg.tag, "reason": reg.reason,
                             "ratios": [tagged(r, "kinetics.classify_regime", 0.0) for r in reg.ratios]}
    rep.results["scaled_params"] = p.to_dict()
    try:
        eq = coexistence(p)
    except NoCoexistence as exc:
        rep.results["skipped"] = f"no coexistence state: {exc}"
        rep.summary.append(f"no coexistence state ({exc}); mode analysis skipped")
        return rep
    kmax = int(cfg.options["k_max"])
    table = spectral.chi_table(p, kmax)
    k0, chi0 = spectral.chi_threshold(p)
    rows = [(k, c) for k, c in table]
    path = _emit(rep, outdir, "chi_k.csv")
    _write_csv(path, ["k", "chi_k"], rows)
    ks = np.array([r[0] for r in rows], dtype=float)
    cs = np.array([r[1] for r in rows], dtype=float)
    fig = svgplot.Figure(f"bifurcation values, L = {p.L:g}", "k", "chi_k")
    fig.line(ks, cs, "chi_k", markers=True)
    fig.line([k0], [chi0], f"k0 = {k0}", color="#d62728", markers=True)
    fig.save(_emit(rep, outdir, "chi_k.svg"))
    rep.results["chi_k"] = [{"k": k, "chi_k": tagged(c, "spectral.chi_k_value", 1e-12)} for k, c in rows]
    rep.results["k0"] = tagged(k0, "spectral.chi_threshold", 0)
    rep.results["chi_k0"] = tagged(chi0, "spectral.chi_threshold", 1e-12)
    rep.results["coexistence"] = {"u": tagged(eq.u, "kinetics.coexistence", 1e-12),
                                  "v": tagged(eq.v, "kinetics.coexistence", 1e-12)}
    try:
        br = spectral.weakly_nonlinear(p)
        rep.results["K1"] = tagged(br.K1, "spectral.weakly_nonlinear", 1e-12)
        rep.results["K2"] = tagged(br.K2, "spectral.weakly_nonlinear", 1e-9)
        rep.results["branch_stable"] = br.branch_stable
        rep.results["mu_dot"] = tagged(br.mu_dot, "spectral.mu_dot", 1e-12)
        verdict = "stable (supercritical)" if br.branch_stable else "unstable (subcritical)"
    except spectral.DegenerateResonance as exc:
        rep.results["K2"] = tagged(None, "spectral.weakly_nonlinear", None)
        rep.results["K2_reason"] = str(exc)
        verdict = "undetermined"
    rep.summary.append(f"L={p.L:g}: k0={k0}, chi_k0={chi0:.6g}, branch {verdict}")
    exp = cfg.expect
    if "k0" in exp:
        rep.check("k0", k0 == exp["k0"], f"{k0} vs {exp['k0']}")
    if "chi_k0" in exp:
        tol = exp.get("chi_tol", 1e-3)
        rep.check("chi_k0", abs(chi0 - exp["chi_k0"]) <= tol, f"|{chi0:.6g} - {exp['chi_k0']}| <= {tol}")
    if "branch_stable" in exp:
        rep.check("branch_stable", rep.results.get("branch_stable") == exp["branch_stable"])
    return rep


def _initial(cfg, p, grid):
    ic = cfg.options["initial"]
    kind = ic["type"]
    if kind == "table":
        x, u, v = ic["x"], ic["u"], ic["v"]
        return ev.tabulated(x, u, v, grid)
    eq = coexistence(p)
    amp = float(ic.get("amp", 0.01))
    if kind == "cosine":
        return ev.cosine_perturbation(eq.u, eq.v, grid, amp, int(ic.get("k", 1)))
    if kind == "broadband":
        modes = ic.get("modes", [1, 6])
        return ev.broadband_perturbation(eq.u, eq.v, grid, range(modes[0], modes[1] + 1), amp)
    if kind == "random":
        rng = np.random.default_rng(cfg.seed)
        pu = amp * rng.uniform(-1, 1, grid.n)
        pv = amp * rng.uniform(-1, 1, grid.n)
        return ev.StateField(0.0, eq.u + pu, eq.v + pv, grid.L)
    return ev.constant_state(eq.u, eq.v, grid)


def _chi_for_run(cfg, p):
    fac = cfg.options.get("chi_factor")
    if fac is None:
        return p, None, None
    k0, c0 = spectral.chi_threshold(p)
    return p.with_(chi=float(fac) * c0), k0, c0


def run_simulate(cfg: RunConfig, outdir) -> Report:
    p = cfg.scaled_params()
    p, k0, c0 = _chi_for_run(cfg, p)
    if k0 is None:
        try:
            k0, c0 = spectral.chi_threshold(p)
        except NoCoexistence:
            k0 = c0 = None
    rep = Report("simulate")
    grid = ev.Grid1D(p.L, cfg.grid["n"])
    ic = _initial(cfg, p, grid)
    scheme = kernels.UPWIND if cfg.options["scheme"] == "upwind" else kernels.CENTRAL
    opts = ev.SimOptions(tol=cfg.time["tol"], stride=cfg.time["stride"], dt_max=cfg.options["dt_max"],
                         backend=cfg.options["backend"], scheme=scheme)
    traj = ev.simulate(p, ic, cfg.time["T"], opts)
    fin = traj.final
    # space-time data, thinned to at most max_snapshots rows
    m = int(cfg.options["max_snapshots"])
    idx = np.unique(np.linspace(0, len(traj.snapshots) - 1, min(m, len(traj.snapshots))).round().astype(int))
    U = np.array([traj.snapshots[i].u for i in idx])
    path = _emit(rep, outdir, "spacetime_u.csv")
    _write_csv(path, ["t"] + [f"x={x:.6g}" for x in grid.x],
               [[traj.snapshots[i].t, *traj.snapshots[i].u] for i in idx])
    ev.write_snapshot_csv(_emit(rep, outdir, "final.csv"), fin)
    _write_csv(_emit(rep, outdir, "history.csv"), ["t", "mass_u", "mass_v", "sup_u", "min_u", "mode", "residual"],
               [[d["t"], d["mass_u"], d["mass_v"], d["sup_u"], d["min_u"], d["mode"], d["residual"]]
                for d in traj.diagnostics])
    t_lo, t_hi = traj.snapshots[0].t, fin.t
    svgplot.heatmap_plot(_emit(rep, outdir, "spacetime_u.svg"), U, (0, p.L), (t_lo, max(t_hi, t_lo + 1e-12)),
                         f"u(x, t), chi = {p.chi:.6g}", "x", "t")
    fig = svgplot.Figure("final profiles", "x", "density")
    fig.line(fin.x, fin.u, "u").line(fin.x, fin.v, "v")
    fig.save(_emit(rep, outdir, "final.svg"))
    mode = ev.dominant_mode(fin)
    bounds = ev.mass_bounds_check(traj, p)
    ratio = float(max(fin.u[0], fin.u[-1]) / np.interp(p.L / 2, fin.x, fin.u))
    rep.results.update({
        "chi": tagged(p.chi, "cli.run_simulate", 0.0),
        "k0": tagged(k0, "spectral.chi_threshold", 0),
        "chi_k0": tagged(c0, "spectral.chi_threshold", 1e-12),
        "converged": traj.converged,
        "message": traj.message,
        "t_final": tagged(fin.t, "evolve.simulate", None),
        "steps": traj.steps,
        "residual": tagged(traj.diagnostics[-1]["residual"], "evolve.residual_norm", cfg.time["tol"]),
        "dominant_mode": tagged(mode, "evolve.dominant_mode", 0),
        "sup_dev_u": tagged(float(np.abs(fin.u - fin.u.mean()).max()), "evolve.simulate", None),
        "argmax_u": int(np.argmax(fin.u)),
        "argmin_v": int(np.argmin(fin.v)),
        "boundary_ratio": tagged(ratio, "cli.run_simulate", None),
        "bounds_ok": bounds["passed"],
        "params": p.to_dict(),
    })
    rep.summary.append(f"{traj.message}; dominant mode {mode}; max boundary/centre ratio {ratio:.4g}")
    exp = cfg.expect
    if exp.get("dominant_mode_is_k0"):
        rep.check("dominant_mode", mode == k0, f"{mode} vs k0 {k0}")
    if "dominant_mode" in exp:
        rep.check("dominant_mode", mode == exp["dominant_mode"], f"{mode} vs {exp['dominant_mode']}")
    if "boundary_ratio_min" in exp:
        ok = ratio >= exp["boundary_ratio_min"] and np.argmax(fin.u) in (0, grid.n - 1) \
            and np.argmin(fin.v) == np.argmax(fin.u)
        rep.check("boundary_spike", ok, f"ratio {ratio:.4g}, argmax u {np.argmax(fin.u)}")
    if "decay_tol" in exp:
        dev = float(np.abs(fin.u - coexistence(p).u).max())
        rep.check("decay", dev <= exp["decay_tol"], f"{dev:.3e}")
    if exp.get("converged"):
        rep.check("converged", traj.converged, traj.message)
    if exp.get("bounds"):
        rep.check("bounds", bounds["passed"])
    return rep


def run_continue(cfg: RunConfig, outdir) -> Report:
    p = cfg.scaled_params()
    o = cfg.options
    k0 = o["k0"] or spectral.chi_threshold(p)[0]
    n = cfg.grid["n"]
    pts = steady.continue_both(p, k0, n=n, steps=int(o["steps"]), ds=float(o["ds"]),
                               chi_weight=float(o["chi_weight"]))
    chi0 = spectral.chi_k_value(p, k0, p.L / n)
    rep = Report("continue")
    steady.write_branch_csv(_emit(rep, outdir, "branch.csv"), pts)
    fig = svgplot.Figure(f"branch off mode {k0}", "chi", "mode amplitude of u")
    fig.line([q.chi for q in pts], [q.amplitude for q in pts], "continuation", markers=True)
    fig.save(_emit(rep, outdir, "branch.svg"))
    coef2, sm = steady.fit_branch(pts, chi0, o["fit_window"], 2)
    coef4, _ = steady.fit_branch(pts, chi0, o["fit_window"], 4)
    try:
        br = spectral.weakly_nonlinear(p, k=k0)
        K2 = br.K2
    except spectral.DegenerateResonance:
        K2 = float("nan")
    rep.results.update({
        "k0": tagged(k0, "spectral.chi_threshold", 0),
        "chi_k0_discrete": tagged(chi0, "spectral.chi_k_value", 1e-12),
        "points": len(pts),
        "fit_linear": tagged(coef2[0], "steady.fit_branch", None),
        "fit_K2": tagged(coef2[1], "steady.fit_branch", None),
        "fit_K2_quartic": tagged(coef4[1], "steady.fit_branch", None),
        "fit_s_max": tagged(sm, "steady.fit_branch", None),
        "K2_analytic": tagged(K2, "spectral.weakly_nonlinear", 1e-9),
        "max_residual": tagged(max(q.residual for q in pts), "steady.continue_branch", 1e-10),
    })
    rep.check("K1_zero", abs(coef2[0]) <= 1e-3 * abs(coef2[1] * sm), f"|c1| = {abs(coef2[0]):.3e}")
    rep.check("K2_sign", math.isfinite(K2) and np.sign(K2) == np.sign(coef2[1]),
              f"analytic {K2:.6g}, fitted {coef2[1]:.6g}")
    rep.summary.append(f"{len(pts)} points; fitted K2 {coef2[1]:.6g} (quartic {coef4[1]:.6g}), analytic {K2:.6g}")
    return rep


def _shadow_item(args):
    sp, lam, n = args
    try:
        sol = sh.spike_at(sp, lam, n) if lam is not None else sh.solve_lambda(sp, n)
        return sol, None
    except sh.NoAdmissibleRoot as exc:
        return None, (str(exc), exc.scan)
    except sh.ShadowError as exc:
        return None, (str(exc), None)


def run_shadow(cfg: RunConfig, outdir) -> Report:
    p = cfg.scaled_params()
    o = cfg.options
    rep = Report("shadow")
    base = sh.ShadowParams(float(o["r"]), float(o["eps"][0]), p.a1, p.b1, p.c1, p.a2, p.b2, p.c2, p.L)
    eps = [float(e) for e in o["eps"]]
    jobs = [(base.with_(eps=e), o["lambda"], o["n"]) for e in eps]
    results = _map(_shadow_item, jobs, cfg.workers)
    target = (1 - p.a2) / (2 * p.c2)
    fig = svgplot.Figure("shadow profiles", "x", "v")
    rows = []
    for e, (sol, err) in zip(eps, results):
        tag = f"eps_{e:g}"
        if sol is None:
            msg, scan = err
            scan = [[lam, h if math.isfinite(h) else None] for lam, h in (scan or [])]
            rows.append({"eps": e, "error": msg, "scan": scan})
            rep.summary.append(f"eps={e:g}: {msg}")
            continue
        rec = sh.export_spike(sol, base.with_(eps=e), _emit(rep, outdir, f"{tag}.csv"))
        fig.line(sol.x, sol.v_profile, f"eps = {e:g}")
        rows.append({"eps": e,
                     "lambda_eps": tagged(rec["lambda_eps"], "shadow.solve_lambda", 1e-10),
                     "v_at_0": tagged(rec["v_at_0"], "shadow.solve_shadow_profile", 1e-10),
                     "v_at_half": tagged(rec["v_at_half"], "shadow.solve_shadow_profile", 1e-10),
                     "constraint_residual": tagged(rec["constraint_residual"], "shadow.constraint", None),
                     "positive": rec["positive"]})
        rep.summary.append(f"eps={e:g}: lambda={rec['lambda_eps']:.6g}, v(0)={rec['v_at_0']:.6g}")
    if fig.series:
        fig.line([0, p.L], [target, target], "(1-a2)/(2 c2)", color="#555555", dashed=True)
        fig.save(_emit(rep, outdir, "profiles.svg"))
    rep.results.update({"target_v0": tagged(target, "cli.run_shadow", 0.0), "runs": rows,
                        "vstar": tagged(base.vstar, "shadow.ShadowParams", 0.0)})
    good = [r for r in rows if "error" not in r]
    if not good:
        rep.status = "no-solution"
    lam = [r["lambda_eps"]["value"] for r in good]
    d0 = [abs(r["v_at_0"]["value"] - target) for r in good]
    complete = len(good) == len(rows)
    rep.check("lambda_decreasing", complete and all(a > b for a, b in zip(lam, lam[1:])), str(lam))
    rep.check("v0_trend", complete and all(a > b for a, b in zip(d0, d0[1:])), str(d0))
    if good:
        dh = abs(good[-1]["v_at_half"]["value"] - base.vstar)
        rep.check("v_half", complete and dh <= 1e-4, f"{dh:.3e}")
    return rep


RUNNERS = {"analyze": run_analyze, "simulate": run_simulate, "continue": run_continue, "shadow": run_shadow}


# ---------------------------------------------------------------------------
# sweeps and driver
# ---------------------------------------------------------------------------

def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _sweep_item(args):
    cfg, outdir = args
    os.makedirs(outdir, exist_ok=True)
    try:
        rep = RUNNERS[cfg.workflow](cfg, outdir)
    except NUMERIC_ERRORS as exc:
        rep = Report(cfg.workflow, status="failed")
        rep.summary.append(f"{type(exc).__name__}: {exc}")
    _write_json(os.path.join(outdir, "report.json"), rep.to_dict())
    rep.files.append("report.json")
    return rep


NUMERIC_ERRORS = (ev.PositivityError, steady.NewtonFailure, steady.ContinuationError, sh.ShadowError,
                  NoCoexistence, spectral.DegenerateResonance, FloatingPointError, np.linalg.LinAlgError)


def execute(cfg: RunConfig, outdir=None, check=False):
    """Run ``cfg``, write report and manifest, and return ``(report, exit_code)``."""
    outdir = outdir or cfg.output
    os.makedirs(outdir, exist_ok=True)
    if cfg.sweep is None:
        rep = RUNNERS[cfg.workflow](cfg, outdir)
        rep.files.append("report.json")
        _write_json(os.path.join(outdir, "report.json"), rep.to_dict())
    else:
        rep = _run_sweep(cfg, outdir)
    rep.files.append("config.json")
    _write_json(os.path.join(outdir, "config.json"), cfg.to_dict())
    _write_manifest(outdir, rep, cfg)
    code = EXIT_OK
    if rep.status in ("failed", "no-solution"):
        code = EXIT_NUMERIC
    elif check and not rep.passed:
        code = EXIT_CHECK
    return rep, code


def _run_sweep(cfg, outdir):
    name, vals = cfg.sweep["parameter"], cfg.sweep["values"]
    width = len(str(len(vals) - 1))
    items = []
    for i, v in enumerate(vals):
        sub = f"sweep_{i:0{width}d}_{name}={v:g}"
        items.append((cfg.with_value(name, v), os.path.join(outdir, sub)))
    reps = _map(_sweep_item, items, cfg.workers)
    top = Report(cfg.workflow)
    rows = []
    for (c, sub), r, v in zip(items, reps, vals):
        rel = os.path.basename(sub)
        top.files += [f"{rel}/{f}" for f in r.files]
        for k, chk in r.checks.items():
            top.checks[f"{rel}:{k}"] = chk
        rows.append({"value": v, "dir": rel, "status": r.status, "summary": "\n".join(r.summary),
                     "k0": r.results.get("k0"), "chi_k0": r.results.get("chi_k0")})
        top.summary.append(f"[{rel}] " + "; ".join(r.summary))
    top.results["sweep"] = {"parameter": name, "items": rows}
    if any(r.status != "ok" for r in reps):
        top.status = "failed"
    if cfg.workflow == "analyze":
        good = [(row["value"], row["k0"]["value"], row["chi_k0"]["value"]) for row in rows
                if row["k0"] is not None]
        _write_csv(_emit(top, outdir, f"k0_vs_{name}.csv"), [name, "k0", "chi_k0"], good)
        if good:
            fig = svgplot.Figure(f"selected mode versus {name}", name, "k0")
            fig.line([g[0] for g in good], [g[1] for g in good], "k0", markers=True)
            fig.save(_emit(top, outdir, f"k0_vs_{name}.svg"))
    top.files.append("report.json")
    _write_json(os.path.join(outdir, "report.json"), top.to_dict())
    return top


def _write_manifest(outdir, rep, cfg):
    files = sorted(set(rep.files))
    man = {"workflow": cfg.workflow, "files": files, "status": rep.status,
           "checks": {k: v["passed"] for k, v in rep.checks.items()}}
    _write_json(os.path.join(outdir, "manifest.json"), man)


def build_parser():
    ap = argparse.ArgumentParser(prog="bdcomp", description="Competition-advection model toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="workflow", required=True)
    for wf in WORKFLOWS:
        s = sub.add_parser(wf)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", help="output directory (overrides 'output')")
        s.add_argument("--check", action="store_true", help="exit with 4 if any check fails")
        s.add_argument("--workers", type=int, help="worker processes for sweeps")
        s.add_argument("--seed", type=int, help="seed for random initial data")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.workflow,
                          {"output": args.out, "workers": args.workers, "seed": args.seed})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep, code = execute(cfg, cfg.output, args.check)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure in {cfg.workflow}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for line in rep.summary:
        print(line)
    for name, c in rep.checks.items():
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {name} {c['detail']}".rstrip())
    return code


if __name__ == "__main__":
    sys.exit(main())

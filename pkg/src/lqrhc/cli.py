"""Scenario runner: ``lqrhc run | selftest | paper-figures``.

A config document is YAML (JSON is accepted as well) with the top-level
keys ``scenario``, ``problem``, ``params`` and ``output``::

    scenario: min-horizon
    problem: {A: [[2]], B: [[1]], Q: [[0]], S: [[0]], R: [[1]]}
    params: {Pf_grid: [0.0, 1.0e-4], N_max: 200}
    output: {path: out.csv, format: csv}

``problem`` may also be the name of a built-in problem (``example-1``,
``example-2``) or ``{generate: {n_x: .., n_u: ..}}`` for a seeded random
pre-dissipative instance.

Exit codes: 0 success, 1 domain failure, 2 config error.
"""
import argparse
import csv
from dataclasses import dataclass, field
import io
import json
import math
import os
import sys
import time

import numpy as np
import yaml

from . import __version__
from . import lqmodel as lqm
from . import matkit as mk
from . import mpc
from . import riccati as ric
from . import stabdesign as sd
from .errors import (InfeasibleQp, LqrhcError, MaxIterations, NoCertificate,
                     NonConvergence, NotControllable, NotPD, NotStabilizable,
                     PrestabilizerFailure, SingularInnerMatrix, SingularMatrix)
from .matkit import DEFAULT_TOL

EXIT_OK, EXIT_DOMAIN, EXIT_CONFIG = 0, 1, 2

SCENARIOS = ("dare", "rdare", "certify", "design", "min-horizon",
             "eig-sweep", "simulate", "paper-figures")
TOP_KEYS = ("scenario", "problem", "params", "output")
OUTPUT_KEYS = ("path", "format")
TOL_KEYS = ("pd_tol", "schur_margin", "riccati_tol")
PARAM_KEYS = {
    "dare": set(),
    "rdare": set(),
    "certify": set(),
    "design": {"E"},
    "min-horizon": {"Pf_grid", "N_max", "certify"},
    "eig-sweep": {"Pf_grid", "N_max"},
    "simulate": {"Pf_grid", "horizons", "N_sim", "xhat0", "x_max", "u_max"},
    "paper-figures": {"Pf_grid", "N_max", "horizons", "N_sim"},
}
COMMON_PARAMS = {"seed", "tolerances"}
BUILTIN_PROBLEMS = {
    "example-1": lqm.unstable_scalar_problem,
    "example-2": lqm.singular_reverse_problem,
}

# terminal weights of the minimum-horizon figure; the eigenvalue figure and
# the constrained closed loop use 1e-4 and compare against 0
FIG_PF_GRID = (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
FIG_EIG_PF = 1e-4
FIG_XSS_PF = (0.0, 1e-4)
FIG_HORIZONS = tuple(range(1, 21))


class ConfigError(Exception):
    """Malformed config; rendered with the offending key or line."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    problem: lqm.LqProblem
    storage: lqm.StorageMatrix = None
    constraints: lqm.AffineConstraintSet = None
    params: dict = field(default_factory=dict)
    out_path: str = None
    fmt: str = "csv"
    seed: int = 0
    tol: mk.Tolerances = DEFAULT_TOL


def load_document(path):
    """Read a YAML or JSON config file into a dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.endswith(".json"):
            doc = json.loads(text)
        else:
            doc = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else path
        raise ConfigError(f"{where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def _reject_unknown(d, allowed, where):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} in {where}")


def _parse_problem(spec, seed):
    if spec is None:
        raise ConfigError("missing key 'problem'")
    if isinstance(spec, str):
        if spec not in BUILTIN_PROBLEMS:
            raise ConfigError(f"unknown built-in problem {spec!r}")
        return BUILTIN_PROBLEMS[spec](), None, None
    if not isinstance(spec, dict):
        raise ConfigError("'problem' must be a mapping or a built-in name")
    if "generate" in spec:
        _reject_unknown(spec, {"generate"}, "problem")
        gen = spec["generate"]
        if not isinstance(gen, dict):
            raise ConfigError("'problem.generate' must be a mapping")
        _reject_unknown(gen, {"n_x", "n_u"}, "problem.generate")
        try:
            p, st = lqm.generate_predissipative_instance(seed, int(gen.get("n_x", 2)),
                                                         int(gen.get("n_u", 1)))
        except ValueError as exc:
            raise ConfigError(f"problem.generate: {exc}") from None
        return p, st, None
    try:
        return lqm.problem_from_dict(spec)
    except KeyError as exc:
        raise ConfigError(f"problem: {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None


def parse_config(doc, overrides=None):
    """Validate a config mapping and build a :class:`ScenarioConfig`.

    ``overrides`` holds command-line values (``seed``, tolerances, output
    path and format) that take precedence over the document.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    _reject_unknown(doc, TOP_KEYS, "config")
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("'params' must be a mapping")
    _reject_unknown(params, PARAM_KEYS[scenario] | COMMON_PARAMS, f"params of {scenario}")
    output = doc.get("output") or {}
    if not isinstance(output, dict):
        raise ConfigError("'output' must be a mapping")
    _reject_unknown(output, OUTPUT_KEYS, "output")

    seed = overrides.get("seed", params.get("seed", 0))
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer; got {seed!r}")
    tols = params.get("tolerances") or {}
    if not isinstance(tols, dict):
        raise ConfigError("'params.tolerances' must be a mapping")
    _reject_unknown(tols, TOL_KEYS, "params.tolerances")
    tols = {k: float(v) for k, v in tols.items()}
    tols.update({k: float(overrides[k]) for k in TOL_KEYS if k in overrides})
    tol = DEFAULT_TOL.with_(**tols)

    fmt = overrides.get("format", output.get("format", "csv"))
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output format must be csv or json; got {fmt!r}")
    out_path = overrides.get("out", output.get("path"))

    if scenario == "paper-figures" and "problem" not in doc:
        problem, storage, cons = lqm.unstable_scalar_problem(), None, None
    else:
        problem, storage, cons = _parse_problem(doc.get("problem"), seed)
    return ScenarioConfig(scenario, problem, storage, cons, dict(params),
                          out_path, fmt, seed, tol)


# ---------------------------------------------------------------------------
# Value helpers
# ---------------------------------------------------------------------------

def _cell(v):
    """Scalar for 1x1 arrays, JSON-encoded nested list otherwise."""
    if isinstance(v, np.ndarray):
        if v.size == 1:
            return float(v.reshape(-1)[0])
        return json.dumps(v.tolist())
    if isinstance(v, np.generic):
        return v.item()
    return v


def _square(value, n, name):
    """A scalar means ``value * I``; otherwise an ``n x n`` symmetric matrix."""
    if np.isscalar(value):
        return float(value) * np.eye(n)
    try:
        M = mk.as_sym(value, name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if M.shape != (n, n):
        raise ConfigError(f"{name} must be {n}x{n}")
    return M


def _pf_grid(cfg):
    grid = cfg.params.get("Pf_grid")
    if grid is None:
        return [("Pf", cfg.problem.Pf)]
    if not isinstance(grid, list) or not grid:
        raise ConfigError("Pf_grid must be a non-empty list")
    out = []
    for i, v in enumerate(grid):
        M = _square(v, cfg.problem.n_x, f"Pf_grid[{i}]")
        out.append((repr(float(v)) if np.isscalar(v) else f"Pf{i}", M))
    return out


def _int_param(cfg, key, default, low=1):
    v = cfg.params.get(key, default)
    if not isinstance(v, int) or v < low:
        raise ConfigError(f"{key} must be an integer >= {low}; got {v!r}")
    return v


def _khat(cfg):
    return lqm.make_invertible_prestabilizer(cfg.problem.sys, seed=cfg.seed)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def _dare_record(label, sol):
    return {"solution": label, "exists": True, "P": _cell(sol.P), "K": _cell(sol.K),
            "classification": sol.classification,
            "spectral_radius": sol.closed_loop_spectrum.spectral_radius,
            "residual": sol.residual, "note": ""}


def scenario_dare(cfg):
    p = cfg.problem
    rows = [_dare_record("stabilizing", ric.solve_dare_stabilizing(p, cfg.storage, cfg.tol))]
    anti = ric.solve_dare_antistabilizing(p, cfg.storage, cfg.tol)
    if anti.exists:
        rows.append(_dare_record("antistabilizing", anti))
    else:
        rows.append({"solution": "antistabilizing", "exists": False, "P": "", "K": "",
                     "classification": "", "spectral_radius": "", "residual": "",
                     "note": "antistabilizing solution does not exist: "
                             f"det [[R,S],[B,A]] = {anti.determinant:g}; "
                             f"reverse stabilizing solution Pbar_s = "
                             f"{_cell(anti.Pbar_s)}"})
    return {"dare": rows}


def scenario_rdare(cfg):
    p = cfg.problem
    Khat = _khat(cfg)
    data = ric.build_rdare(p, Khat)
    Pbar = ric.solve_rdare_stabilizing(p, cfg.storage, cfg.tol, Khat=Khat)
    test = ric.antistab_existence_test(p)
    row = {"Pbar_s": _cell(Pbar), "Abar": _cell(data.Abar), "Bbar": _cell(data.Bbar),
           "Qbar": _cell(data.Qbar), "Sbar": _cell(data.Sbar), "Rbar": _cell(data.Rbar),
           "Khat": _cell(data.Khat), "antistab_verdict": test.verdict,
           "determinant": test.determinant}
    return {"rdare": [row]}


def scenario_certify(cfg):
    p = cfg.problem
    if cfg.storage is not None:
        chk = lqm.check_predissipativity(p.cost, p.sys, cfg.storage, cfg.tol.pd_tol)
        cands = [("supplied", cfg.storage, chk)]
    else:
        cands = [(c.label, c.storage, c.check) for c in lqm.suggest_storage(p, cfg.tol)]
    rows = [{"label": label, "Lambda": _cell(st.Lambda), "verdict": chk.verdict,
             "definiteness": chk.definiteness.value, "lambda_min": chk.lambda_min,
             "H_rotated": _cell(chk.H_rotated)} for label, st, chk in cands]
    return {"certify": rows}


def scenario_design(cfg):
    if "E" not in cfg.params:
        raise ConfigError("design needs params.E")
    E = _square(cfg.params["E"], cfg.problem.n_x, "E")
    d = sd.design_terminal(cfg.problem, E, cfg.storage, cfg.tol)
    return {"design": [{"Pf": _cell(d.Pf), "basis": d.basis, "E": _cell(d.E),
                        "margin": d.margin, "Pbar_s": _cell(d.Pbar_s),
                        "boundary": d.boundary}]}


def scenario_min_horizon(cfg):
    N_max = _int_param(cfg, "N_max", 200)
    certify = bool(cfg.params.get("certify", False))
    summary, trace = [], []
    for tag, Pf in _pf_grid(cfg):
        rep = sd.min_stabilizing_horizon(cfg.problem, Pf, N_max, cfg.tol.schur_margin)
        certs = None
        if certify:
            L = ric._strict_storage(cfg.problem, cfg.storage, cfg.tol)
            certs = sd.lyapunov_sweep(cfg.problem, L, N_max, Pf, cfg.tol)
        summary.append({"Pf": tag, "N_min": rep.min_stabilizing_N if rep.found else "NotFound"})
        trace += sd.horizon_rows(rep, tag, certs)
    return {"min_horizon": summary, "horizon_trace": trace}


def scenario_eig_sweep(cfg):
    N_max = _int_param(cfg, "N_max", 20)
    rows = []
    for tag, Pf in _pf_grid(cfg):
        radii = sd.closed_loop_eigs_vs_N(cfg.problem, Pf, N_max)
        rows += [{"Pf": tag, "N": N, "spectral_radius": r}
                 for N, r in enumerate(radii, start=1)]
    return {"eig_sweep": rows}


def _constraints(cfg):
    if "x_max" in cfg.params or "u_max" in cfg.params:
        if cfg.constraints is not None:
            raise ConfigError("give either problem constraints C, D, e or x_max/u_max")
        return lqm.box_constraints(cfg.problem.n_x, cfg.problem.n_u,
                                   cfg.params.get("x_max"), cfg.params.get("u_max"))
    return cfg.constraints


def _simulate_grid(problem, cons, pf_grid, horizons, N_sim, xhat0):
    """Closed loops over ``horizons x pf_grid``, in that row order."""
    runs = []
    for N in horizons:
        for tag, Pf in pf_grid:
            m = mpc.MpcProblem(problem.with_terminal(Pf), N, cons)
            runs.append((N, tag, mpc.simulate(m, xhat0, N_sim)))
    return runs


def scenario_simulate(cfg):
    p = cfg.problem
    horizons = cfg.params.get("horizons", [10])
    if not isinstance(horizons, list) or not all(isinstance(n, int) and n >= 1 for n in horizons):
        raise ConfigError("horizons must be a list of integers >= 1")
    N_sim = _int_param(cfg, "N_sim", 500, low=0)
    xhat0 = np.asarray(cfg.params.get("xhat0", [1.0] * p.n_x), float).reshape(-1)
    if xhat0.size != p.n_x:
        raise ConfigError(f"xhat0 must have {p.n_x} entries")
    runs = _simulate_grid(p, _constraints(cfg), _pf_grid(cfg), horizons, N_sim, xhat0)
    trace, final = [], []
    for N, tag, tr in runs:
        trace += [{"N": N, "Pf": tag, **r} for r in mpc.trace_rows(tr)]
        final.append({"N": N, "Pf": tag, "steps": len(tr.inputs),
                      "x_final_norm": float(np.linalg.norm(tr.final_state)),
                      "status": tr.status, "message": tr.message})
    return {"trace": trace, "final": final}


def paper_figures(Pf_grid=FIG_PF_GRID, N_max=20, horizons=FIG_HORIZONS, N_sim=500,
                  tol=DEFAULT_TOL):
    """The three figure datasets for ``A=2, B=1, Q=S=0, R=1``.

    ``fig_min_horizon`` searches up to 200 horizons; ``N_max`` bounds the
    eigenvalue sweep. The closed loop uses ``|x| <= 1`` and ``xhat0 = 1``.
    ``x_final`` is the last state reached, which precedes step ``N_sim``
    when a QP becomes infeasible.
    """
    p = lqm.unstable_scalar_problem()
    mh = []
    for v in Pf_grid:
        rep = sd.min_stabilizing_horizon(p, [[v]], 200, tol.schur_margin)
        mh.append({"Pf": float(v), "N_min": rep.min_stabilizing_N if rep.found else "NotFound"})
    radii = sd.closed_loop_eigs_vs_N(p, [[FIG_EIG_PF]], N_max)
    eigs = [{"N": N, "spectral_radius": r} for N, r in enumerate(radii, start=1)]
    cons = lqm.box_constraints(1, 1, x_max=1.0)
    grid = [(v, np.array([[v]])) for v in FIG_XSS_PF]
    xss = [{"N": N, "Pf": Pf, "x_final": float(tr.final_state[0])}
           for N, Pf, tr in _simulate_grid(p, cons, grid, horizons, N_sim, [1.0])]
    return {"fig_min_horizon": mh, "fig_eigs": eigs, "fig_xss": xss}


def scenario_paper_figures(cfg):
    kw = {}
    if "Pf_grid" in cfg.params:
        kw["Pf_grid"] = [float(v) for v in cfg.params["Pf_grid"]]
    if "N_max" in cfg.params:
        kw["N_max"] = _int_param(cfg, "N_max", 20)
    if "horizons" in cfg.params:
        kw["horizons"] = [int(n) for n in cfg.params["horizons"]]
    if "N_sim" in cfg.params:
        kw["N_sim"] = _int_param(cfg, "N_sim", 500, low=0)
    return paper_figures(tol=cfg.tol, **kw)


DISPATCH = {
    "dare": scenario_dare,
    "rdare": scenario_rdare,
    "certify": scenario_certify,
    "design": scenario_design,
    "min-horizon": scenario_min_horizon,
    "eig-sweep": scenario_eig_sweep,
    "simulate": scenario_simulate,
    "paper-figures": scenario_paper_figures,
}


@dataclass(frozen=True)
class RunReport:
    scenario: str
    datasets: dict             # name -> list of row dicts, in output order
    wall_time: float
    version: str
    tolerances: dict

    def to_json(self):
        return json.dumps({"scenario": self.scenario, "version": self.version,
                           "tolerances": self.tolerances, "wall_time": self.wall_time,
                           "datasets": self.datasets}, indent=2)


def run(cfg):
    """Execute one scenario. Domain errors propagate as ``LqrhcError``."""
    t0 = time.perf_counter()
    datasets = DISPATCH[cfg.scenario](cfg)
    tols = {k: getattr(cfg.tol, k) for k in TOL_KEYS}
    return RunReport(cfg.scenario, datasets, time.perf_counter() - t0, __version__, tols)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def rows_to_csv(rows):
    """CSV text with the union of row keys as header, first-seen order."""
    header = []
    for r in rows:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n", restval="")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_value(v) for k, v in r.items()})
    return buf.getvalue()


def write_report(report, out_path=None, fmt="csv", stream=None):
    """Write a report; returns the list of files written.

    CSV with several datasets needs ``out_path`` to be a directory and
    writes ``<name>.csv`` per dataset. Without ``out_path`` everything goes
    to ``stream`` (datasets separated by ``# name`` lines).
    """
    stream = stream or sys.stdout
    if fmt == "json":
        text = report.to_json() + "\n"
        if out_path is None:
            stream.write(text)
            return []
        _write_text(out_path, text)
        return [out_path]
    names = list(report.datasets)
    if out_path is None:
        for name in names:
            if len(names) > 1:
                stream.write(f"# {name}\n")
            stream.write(rows_to_csv(report.datasets[name]))
        return []
    if len(names) == 1 and not os.path.isdir(out_path):
        _write_text(out_path, rows_to_csv(report.datasets[names[0]]))
        return [out_path]
    os.makedirs(out_path, exist_ok=True)
    written = []
    for name in names:
        path = os.path.join(out_path, f"{name}.csv")
        _write_text(path, rows_to_csv(report.datasets[name]))
        written.append(path)
    return written


def _write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def dump_problem(cfg, path):
    """Write the parsed problem in the config schema (JSON or YAML by suffix)."""
    d = lqm.problem_to_dict(cfg.problem, cfg.storage, cfg.constraints)
    if path.endswith(".json"):
        text = json.dumps(d, indent=2) + "\n"
    else:
        text = yaml.safe_dump(d, sort_keys=False)
    _write_text(path, text)


_DOMAIN_MEANING = {
    NoCertificate: "no strict pre-dissipativity certificate",
    NotControllable: "(A, B) is not controllable",
    NotStabilizable: "(A, B) is not stabilizable",
    SingularInnerMatrix: "R + B^T P B is singular",
    SingularMatrix: "singular matrix",
    NotPD: "matrix is not positive definite",
    NonConvergence: "Riccati iteration did not converge",
    PrestabilizerFailure: "no pre-stabilizing gain with A - B Khat invertible",
    InfeasibleQp: "MPC problem is infeasible",
    MaxIterations: "QP solver hit its iteration limit",
}


def render_domain_error(exc):
    for cls, meaning in _DOMAIN_MEANING.items():
        if isinstance(exc, cls):
            return f"{meaning}: {exc}"
    return str(exc)


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------

def _scalar_recursion_radius(Pf, N):
    # A=2, B=1, Q=S=0, R=1 gives P+ = 4P/(1+P) and A - B K_N = 2/(1+P_{N-1})
    P = Pf
    for _ in range(N - 1):
        P = 4.0 * P / (1.0 + P)
    return 2.0 / (1.0 + P)


def _selftest_checks():
    """``(name, expected, tolerance, thunk)`` for every reference value."""
    ex1 = lqm.unstable_scalar_problem()
    ex2 = lqm.singular_reverse_problem()

    def s(x):
        return float(np.asarray(x).reshape(-1)[0])

    def ps():
        return ric.solve_dare_stabilizing(ex1)

    def pa():
        return ric.solve_dare_antistabilizing(ex1)

    def rot():
        return lqm.check_predissipativity(ex1.cost, ex1.sys, [[-1.0]])

    def rd():
        return ric.build_rdare(ex2)

    def nmin(Pf, N_max):
        rep = sd.min_stabilizing_horizon(ex1, [[Pf]], N_max)
        return rep.min_stabilizing_N if rep.found else -1

    return [
        ("ex1.P_s", 3.0, 1e-9, lambda: s(ps().P)),
        ("ex1.K_s", 1.5, 1e-9, lambda: s(ps().K)),
        ("ex1.closed_loop_s", 0.5, 1e-9, lambda: ps().closed_loop_spectrum.spectral_radius),
        ("ex1.P_a", 0.0, 1e-9, lambda: s(pa().P)),
        ("ex1.K_a", 0.0, 1e-9, lambda: s(pa().K)),
        ("ex1.closed_loop_a", 2.0, 1e-9, lambda: pa().closed_loop_spectrum.spectral_radius),
        ("ex1.Xi_s", 3.0, 1e-9, lambda: s(ps().P) - s(pa().P)),
        ("ex1.Pbar_s", 0.0, 1e-9, lambda: s(ric.solve_rdare_stabilizing(ex1))),
        ("ex1.H_rot.Q", 3.0, 0.0, lambda: float(rot().H_rotated[0, 0])),
        ("ex1.H_rot.S", 2.0, 0.0, lambda: float(rot().H_rotated[1, 0])),
        ("ex1.H_rot.R", 2.0, 0.0, lambda: float(rot().H_rotated[1, 1])),
        ("ex1.H_rot.is_pd", 1.0, 0.0, lambda: float(rot().definiteness is mk.Definiteness.PD)),
        ("ex1.Lambda_-3.strict", 0.0, 0.0,
         lambda: float(lqm.check_predissipativity(ex1.cost, ex1.sys, [[-3.0]]).strict)),
        ("ex1.N_min(Pf=1e-4)", 8.0, 0.0, lambda: float(nmin(1e-4, 20))),
        ("ex1.N_min(Pf=0)[-1=NotFound]", -1.0, 0.0, lambda: float(nmin(0.0, 200))),
        ("ex1.rho(N=8,Pf=1e-4)", _scalar_recursion_radius(1e-4, 8), 1e-6,
         lambda: sd.closed_loop_eigs_vs_N(ex1, [[1e-4]], 8)[-1]),
        ("ex1.rho(N=5,Pf=3)", 0.5, 1e-9,
         lambda: sd.closed_loop_eigs_vs_N(ex1, [[3.0]], 5)[-1]),
        ("ex2.Abar", 1.0, 1e-12, lambda: s(rd().Abar)),
        ("ex2.Bbar", 1.0, 1e-12, lambda: s(rd().Bbar)),
        ("ex2.Qbar", -1.0, 1e-12, lambda: s(rd().Qbar)),
        ("ex2.Sbar", 0.0, 1e-12, lambda: s(rd().Sbar)),
        ("ex2.Rbar", 0.0, 1e-12, lambda: s(rd().Rbar)),
        ("ex2.Pbar_s", -1.0, 1e-12, lambda: s(ric.solve_rdare_stabilizing(ex2))),
        ("ex2.det[[R,S],[B,A]]", 0.0, 1e-12,
         lambda: ric.antistab_existence_test(ex2).determinant),
        ("ex2.antistab_exists", 0.0, 0.0,
         lambda: float(ric.antistab_existence_test(ex2).exists)),
        # the fixed point of 1 + P - (1 + P) is P = 0, with K = 1 and A - BK = 0
        ("ex2.P_s", 0.0, 1e-9, lambda: s(ric.solve_dare_stabilizing(ex2).P)),
        ("ex2.K_s", 1.0, 1e-9, lambda: s(ric.solve_dare_stabilizing(ex2).K)),
        ("ex2.R+BtPbarB", 0.0, 1e-12,
         lambda: s(ric.inner_matrix(ex2, ric.solve_rdare_stabilizing(ex2)))),
        ("ex1.design(E=1e-4).Pf", 1e-4, 1e-12,
         lambda: s(sd.design_terminal(ex1, [[1e-4]]).Pf)),
    ]


def selftest(expected=None, stream=None):
    """Run the reference checks; returns the number of failures.

    ``expected`` maps check names to replacement expected values, which is
    how a deliberately wrong fixture is injected.
    """
    stream = stream or sys.stdout
    expected = dict(expected or {})
    checks = _selftest_checks()
    names = {c[0] for c in checks}
    unknown = set(expected) - names
    if unknown:
        raise ConfigError(f"unknown selftest check {sorted(unknown)[0]!r}")
    failures = 0
    for name, exp, tol, thunk in checks:
        exp = float(expected.get(name, exp))
        try:
            obs = float(thunk())
            ok = math.isfinite(obs) and abs(obs - exp) <= tol
            shown = repr(obs)
        except LqrhcError as exc:
            ok, shown = False, f"error: {render_domain_error(exc)}"
        failures += not ok
        stream.write(f"{'PASS' if ok else 'FAIL'}  {name}  observed={shown}  "
                     f"expected={exp!r}  tol={tol:g}\n")
    stream.write(f"{len(checks) - failures}/{len(checks)} checks passed\n")
    return failures


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(prog="lqrhc", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output file, or directory for multi-dataset CSV")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--seed", type=int)
    r.add_argument("--dump-problem", metavar="PATH",
                   help="also write the parsed problem in config schema")
    for name in TOL_KEYS:
        r.add_argument("--" + name.replace("_", "-"), type=float, dest=name,
                       help=f"default {getattr(DEFAULT_TOL, name):g}")

    t = sub.add_parser("selftest", help="check the built-in reference values")
    t.add_argument("--expect", action="append", default=[], metavar="NAME=VALUE",
                   help="override one expected value (mutation check)")

    f = sub.add_parser("paper-figures", help="write the three figure CSV files")
    f.add_argument("--out-dir", required=True)
    f.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def main(argv=None):
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config code
        return exc.code
    err = sys.stderr
    try:
        if args.command == "selftest":
            exp = {}
            for item in args.expect:
                name, sep, value = item.partition("=")
                if not sep:
                    raise ConfigError(f"--expect needs NAME=VALUE, got {item!r}")
                try:
                    exp[name] = float(value)
                except ValueError:
                    raise ConfigError(f"--expect {name}: not a number: {value!r}") from None
            return EXIT_OK if selftest(exp) == 0 else EXIT_DOMAIN
        if args.command == "paper-figures":
            data = paper_figures()
            rep = RunReport("paper-figures", data, 0.0, __version__,
                            {k: getattr(DEFAULT_TOL, k) for k in TOL_KEYS})
            out = (os.path.join(args.out_dir, "paper_figures.json")
                   if args.format == "json" else args.out_dir)
            for path in write_report(rep, out, args.format):
                print(path)
            return EXIT_OK
        overrides = {"seed": args.seed, "out": args.out, "format": args.format}
        overrides.update({k: getattr(args, k) for k in TOL_KEYS})
        cfg = parse_config(load_document(args.config), overrides)
        if args.dump_problem:
            dump_problem(cfg, args.dump_problem)
        report = run(cfg)
        write_report(report, cfg.out_path, cfg.fmt)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except LqrhcError as exc:
        print(f"error: {render_domain_error(exc)}", file=err)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())

"""Experiment runner: config parsing, probe execution and report files."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import master
from .linearized import DEFAULT_TOL
from .metrics import discrete_holder_norm, wasserstein1, wasserstein1_dual
from .mfg import monotonicity_gap, solve_mfg
from .model import (
    EllipticCoefficient,
    MfgModel,
    bump_measure,
    build_grid,
    cosine_measure,
    model_from_spec,
    random_rough_measure,
    random_smooth_measure,
    uniform_measure,
    validate_hypotheses,
)
from .parabolic import assemble_backward_operator, duality_defect, solve_fokker_planck_forward, \
    solve_linear_backward
from .rates import RateFit, fit_rate  # noqa: F401  (RateFit re-exported)
from .validation import ConvergenceError, ValidationError

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment", "parameter", "metric", "value")

KINDS = ("oracle-convergence", "duality", "mfg-solve", "monotonicity", "lipschitz",
         "remainder-order", "master-residual", "neumann", "flow-consistency", "holder-time")


class UsageError(ValueError):
    """Malformed configuration; maps to exit status 2."""


@dataclass
class ExperimentConfig:
    kind: str
    model_spec: dict
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    name: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        self.name = self.name or self.kind

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[self.kind][key]))

    def model(self) -> MfgModel:
        try:
            return model_from_spec(self.model_spec)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"bad model spec: {exc}") from None


DEFAULT_TOLERANCES = {
    "oracle-convergence": {"space_order_min": 1.9, "time_order_min": 0.9},
    "duality": {"max_defect": 1e-10},
    "mfg-solve": {"gap": 1e-8, "init_independence": 1e-6, "mass_drift": 1e-12,
                  "min_density": -1e-14},
    "monotonicity": {"slack_factor": 1e-3, "bregman_min": -1e-10, "mass_drift": 1e-12,
                     "min_density": -1e-14, "gap": 1e-8},
    "lipschitz": {"max_spread": 10.0, "gap": 1e-10},
    "remainder-order": {"slope_min": 1.8, "slope_max": 2.2, "gap": 1e-12, "linearized": 1e-12},
    "master-residual": {"order_min": 1.0, "boundary": 1e-8, "gap": 1e-10,
                        "linearized": DEFAULT_TOL},
    "neumann": {"boundary": 1e-8, "gap": 1e-10, "linearized": DEFAULT_TOL,
                "crosscheck_factor": 10.0, "normalization": 1e-10},
    "flow-consistency": {"factor": 10.0, "gap": 1e-8},
    "holder-time": {"max_factor": 2.0, "gap": 1e-8},
}


def parse_config(doc: dict, seed: int | None = None) -> list[ExperimentConfig]:
    """Turn a config document into one or more experiment configs.

    The document holds a ``model`` object (or the model keys inline) plus
    either a single ``kind`` or a list ``experiments`` of
    ``{kind, params, tolerances, name}`` objects.
    """
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    model_spec = doc.get("model")
    if model_spec is None:
        model_spec = {k: v for k, v in doc.items()
                      if k not in ("kind", "params", "tolerances", "seed", "experiments", "name")}
    base_seed = int(doc.get("seed", 0) if seed is None else seed)
    entries = doc.get("experiments")
    if entries is None:
        if "kind" not in doc:
            raise UsageError("config names no experiment kind")
        entries = [{k: doc[k] for k in ("kind", "params", "tolerances", "name") if k in doc}]
    out = []
    for e in entries:
        if "kind" not in e:
            raise UsageError("experiment entry without a kind")
        out.append(ExperimentConfig(e["kind"], model_spec, dict(e.get("params", {})),
                                    dict(e.get("tolerances", {})), base_seed, e.get("name")))
    return out


def load_config(path, seed: int | None = None) -> list[ExperimentConfig]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return parse_config(doc, seed)


# --------------------------------------------------------------------------
# Report plumbing
# --------------------------------------------------------------------------

@dataclass
class Report:
    name: str
    records: list = field(default_factory=list)
    assertions: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)

    def add(self, parameter, metric: str, value) -> None:
        self.records.append((self.name, str(parameter), metric, float(value)))

    def check(self, metric: str, value, op: str, bound, tolerance_name: str) -> bool:
        value, bound = float(value), float(bound)
        ok = {"<=": value <= bound, ">=": value >= bound, "<": value < bound}[op]
        self.assertions.append({"metric": metric, "value": value, "op": op, "bound": bound,
                                "tolerance": tolerance_name, "passed": bool(ok)})
        return ok

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    @property
    def failures(self) -> list:
        return [a for a in self.assertions if not a["passed"]]


def _fmt(value: float) -> str:
    return "%.17g" % value


def emit_csv(records, path) -> None:
    """Write long-format records with a fixed header and 17-digit values."""
    records = list(records)
    if any(len(r) != 4 for r in records):
        raise ValidationError("records must be (experiment, parameter, metric, value)")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for exp, par, met, val in records:
            writer.writerow((exp, par, met, _fmt(float(val))))


def read_csv(path) -> list[tuple]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValidationError(f"{path} lacks the results header")
    return [(e, p, m, float(v)) for e, p, m, v in rows[1:]]


def measure_from_param(grid, spec, rng: np.random.Generator):
    if spec is None or spec == "random":
        return random_smooth_measure(grid, rng)
    if spec == "uniform":
        return uniform_measure(grid)
    if spec == "rough":
        return random_rough_measure(grid, rng)
    if isinstance(spec, dict):
        if "cos" in spec:
            return cosine_measure(grid, spec["cos"])
        if "bump" in spec:
            return bump_measure(grid, *spec["bump"])
    raise UsageError(f"unknown measure description {spec!r}")


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------

def _oracle_errors(n_x: int, n_t: int, T: float, alpha: float):
    grid = build_grid(n_x, n_t, 0.0, T, alpha)
    a = EllipticCoefficient.constant(grid, 1.0)
    op = assemble_backward_operator(a, None, grid)
    c = np.cos(np.pi * grid.x)
    decay_back = np.exp(-np.pi ** 2 * (T - grid.t))[:, None]
    decay_fwd = np.exp(-np.pi ** 2 * grid.t)[:, None]
    phi = solve_linear_backward(op, c)
    mu = solve_fokker_planck_forward(op, 1.0 + 0.5 * c)
    err_b = float(np.max(np.abs(phi - decay_back * c)))
    err_f = float(np.max(np.abs(mu - (1.0 + 0.5 * decay_fwd * c))))
    return grid, err_b, err_f


def run_oracle_convergence(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    nxs = cfg.params.get("n_x", [51, 101, 201])
    nts = cfg.params.get("n_t", [100, 400, 1600])
    T = float(cfg.params.get("T", 1.0))
    if len(nxs) != len(nts) or len(nxs) < 3:
        raise UsageError("oracle ladders need the same length, at least 3")
    alpha = float(cfg.model_spec.get("alpha", 0.5))
    rows = []
    for nx, nt in zip(nxs, nts):
        grid, eb, ef = _oracle_errors(int(nx), int(nt), T, alpha)
        par = f"n_x={nx};n_t={nt}"
        rep.add(par, "backward_error", eb)
        rep.add(par, "forward_error", ef)
        rows.append((grid.dx, grid.dt, eb, ef))
    for label, col in (("backward", 2), ("forward", 3)):
        fs = fit_rate([(r[0], r[col]) for r in rows])
        ft = fit_rate([(r[1], r[col]) for r in rows])
        rep.fits[f"{label}_space"] = fs.to_dict()
        rep.fits[f"{label}_time"] = ft.to_dict()
        rep.add("-", f"{label}_space_order", fs.slope)
        rep.add("-", f"{label}_time_order", ft.slope)
        rep.check(f"{label}_space_order", fs.slope, ">=", cfg.tol("space_order_min"), "space_order_min")
        rep.check(f"{label}_time_order", ft.slope, ">=", cfg.tol("time_order_min"), "time_order_min")
    return rep


def run_duality(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    grid = model.grid
    n = int(cfg.params.get("n_samples", 50))
    defects, ratios = [], []
    for k in range(n):
        b = rng.standard_normal((grid.n_t, grid.n_x))
        op = assemble_backward_operator(model.a, b, grid)
        psi = rng.standard_normal((grid.n_t, grid.n_x))
        c = rng.standard_normal((grid.n_t, grid.n_x))
        xi = rng.standard_normal(grid.n_x)
        d = duality_defect(op, xi, psi, rng.standard_normal(grid.n_x), c)
        defects.append(d)
        # observed constant of the backward regularity estimate (reported only)
        phi = solve_linear_backward(op, xi, psi)
        num = max(float(discrete_holder_norm(phi[i], grid, "1+alpha")) for i in range(grid.n_t))
        ratios.append(num / (np.max(np.abs(psi)) + float(discrete_holder_norm(xi, grid, "1+alpha"))))
    worst = max(defects)
    rep.add(f"n_x={grid.n_x};n_t={grid.n_t}", "max_duality_defect", worst)
    rep.add(f"n_x={grid.n_x};n_t={grid.n_t}", "samples", n)
    rep.add(f"n_x={grid.n_x};n_t={grid.n_t}", "max_backward_regularity_ratio", max(ratios))
    rep.check("max_duality_defect", worst, "<=", cfg.tol("max_defect"), "max_defect")
    return rep


def _conservation_checks(rep: Report, cfg: ExperimentConfig, sols, label="") -> None:
    drift = max(s.mass_drift for s in sols)
    low = min(float(s.m.min()) for s in sols)
    rep.add(label or "-", "max_mass_drift", drift)
    rep.add(label or "-", "min_density", low)
    rep.check("max_mass_drift", drift, "<=", cfg.tol("mass_drift"), "mass_drift")
    rep.check("min_density", low, ">=", cfg.tol("min_density"), "min_density")


def run_mfg_solve(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    m0 = measure_from_param(model.grid, cfg.params.get("m0", "random"), rng)
    theta = float(cfg.params.get("theta", 0.5))
    max_iter = int(cfg.params.get("max_iter", 60))
    tol = cfg.tol("gap")
    s1 = solve_mfg(model, m0, theta=theta, tol=tol, max_iter=max_iter, initial="constant")
    s2 = solve_mfg(model, m0, theta=theta, tol=tol, max_iter=max_iter, initial="heat")
    diff = max(float(np.max(np.abs(s1.u - s2.u))), float(np.max(np.abs(s1.m - s2.m))))
    rep.add("init=constant", "iterations", s1.iterations)
    rep.add("init=constant", "final_gap", s1.final_gap)
    rep.add("init=heat", "iterations", s2.iterations)
    rep.add("init=heat", "final_gap", s2.final_gap)
    for i, g in enumerate(s1.gap_history):
        rep.add(f"iteration={i + 1}", "gap", g)
    rep.add("-", "init_difference", diff)
    rep.diagnostics["residuals"] = s1.residuals
    # the two equivalent forms of d1, compared on (m(t0), m(T))
    rep.add("m0;mT", "d1_cdf", wasserstein1(model.grid, s1.m[0], s1.m[-1]))
    rep.add("m0;mT", "d1_dual_lipschitz", wasserstein1_dual(model.grid, s1.m[0], s1.m[-1]))
    rep.add("m0;mT", "d1_dual_lipschitz_bounded",
            wasserstein1_dual(model.grid, s1.m[0], s1.m[-1], sup_bound=1.0))
    rep.diagnostics["decoupled"] = model.is_decoupled
    rep.check("final_gap", s1.final_gap, "<", tol, "gap")
    rep.check("init_difference", diff, "<=", cfg.tol("init_independence"), "init_independence")
    _conservation_checks(rep, cfg, [s1, s2])
    return rep


def run_monotonicity(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    grid = model.grid
    n = int(cfg.params.get("n_pairs", 10))
    slack = cfg.tol("slack_factor") * (grid.dx ** 2 + grid.dt)
    sols = []
    worst_excess = -np.inf
    worst_breg = np.inf
    printed_sign_violations = 0
    for k in range(n):
        a = solve_mfg(model, random_smooth_measure(grid, rng), tol=cfg.tol("gap"))
        b = solve_mfg(model, random_smooth_measure(grid, rng), tol=cfg.tol("gap"))
        sols += [a, b]
        gap = monotonicity_gap(model, a, b)
        par = f"pair={k}"
        rep.add(par, "lhs", gap.lhs)
        rep.add(par, "rhs", gap.rhs)
        rep.add(par, "rhs_printed_sign", -gap.rhs)
        rep.add(par, "bregman_1", gap.bregman_1)
        rep.add(par, "bregman_2", gap.bregman_2)
        rep.add(par, "coupling_F", gap.coupling_F)
        rep.add(par, "coupling_G", gap.coupling_G)
        worst_excess = max(worst_excess, gap.lhs - gap.rhs)
        worst_breg = min(worst_breg, gap.bregman_1, gap.bregman_2)
        printed_sign_violations += int(gap.lhs > -gap.rhs + slack)
    rep.add("-", "max_lhs_minus_rhs", worst_excess)
    rep.add("-", "min_bregman", worst_breg)
    rep.add("-", "printed_sign_violations", printed_sign_violations)
    rep.check("max_lhs_minus_rhs", worst_excess, "<=", slack, "slack_factor")
    rep.check("min_bregman", worst_breg, ">=", cfg.tol("bregman_min"), "bregman_min")
    _conservation_checks(rep, cfg, sols)
    return rep


def lipschitz_pairs(grid, rng, n: int, d_min: float = 1e-3, d_max: float = 1e-1,
                    width: float = 0.1):
    """Bump pairs whose centers differ by log-uniform shifts in ``[d_min, d_max]``."""
    shifts = np.exp(rng.uniform(np.log(d_min), np.log(d_max), n))
    centers = rng.uniform(0.35, 0.55, n)
    return [(bump_measure(grid, c, width), bump_measure(grid, c + s, width))
            for c, s in zip(centers, shifts)]


def run_lipschitz(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    n = int(cfg.params.get("n_pairs", 10))
    pairs = lipschitz_pairs(model.grid, rng, n, cfg.params.get("d_min", 1e-3),
                            cfg.params.get("d_max", 1e-1))
    out = master.probe_lipschitz(model, model.grid.t0, pairs, tol=cfg.tol("gap"))
    rows = out["rows"]
    for row in rows:
        par = f"pair={row['pair']}"
        for key, val in row.items():
            if key != "pair":
                rep.add(par, key, val)
    rep.diagnostics["notes"] = out["notes"]
    for key in ("sup_ratio", "flow_ratio", "grad_ratio", "holder_2_alpha_ratio"):
        vals = np.array([r[key] for r in rows])
        spread = float(vals.max() / vals.min()) if vals.min() > 0 else np.inf
        rep.add("-", f"{key}_spread", spread)
        if key in ("sup_ratio", "flow_ratio"):
            rep.check(f"{key}_spread", spread, "<", cfg.tol("max_spread"), "max_spread")
    return rep


def run_remainder_order(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    grid = model.grid
    m0 = measure_from_param(grid, cfg.params.get("m0", "random"), rng)
    m1 = measure_from_param(grid, cfg.params.get("m1", "random"), rng)
    ladder = cfg.params.get("s_ladder", [0.2, 0.1, 0.05, 0.025])
    out = master.probe_remainder_order(model, grid.t0, m0, m1, ladder,
                                       tol=cfg.tol("gap"), lin_tol=cfg.tol("linearized"))
    for d, r, s in out["points"]:
        rep.add(f"s={s!r}", "d1", d)
        rep.add(f"s={s!r}", "remainder", r)
    rep.diagnostics["notes"] = out["notes"]
    if out["slope"] is None:
        rep.diagnostics["degenerate"] = True
        if not model.is_decoupled:
            rep.check("slope_available", 0.0, ">=", 1.0, "slope_min")
        return rep
    rep.fits["remainder"] = {"slope": out["slope"], "r_squared": out["r_squared"],
                             "points": [[d, r] for d, r, _ in out["points"]]}
    rep.add("-", "slope", out["slope"])
    rep.check("slope", out["slope"], ">=", cfg.tol("slope_min"), "slope_min")
    rep.check("slope", out["slope"], "<=", cfg.tol("slope_max"), "slope_max")
    return rep


def run_master_residual(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    spec = dict(cfg.model_spec)
    ladder = cfg.params.get("ladder", [[26, 26], [51, 51], [101, 101]])
    if len(ladder) < 3:
        raise UsageError("residual ladder needs at least 3 grids")
    families = cfg.params.get("families", ["smooth", "rough"])
    smooth_cos = cfg.params.get("m0_cos", [0.5, 0.2])
    rough_seed = int(rng.integers(2 ** 31))
    for fam in families:
        pts = []
        for nx, nt in ladder:
            model = model_from_spec({**spec, "n_x": nx, "n_t": nt})
            grid = model.grid
            if fam == "smooth":
                m0 = cosine_measure(grid, smooth_cos)
            elif fam == "rough":
                m0 = random_rough_measure(grid, np.random.default_rng(rough_seed))
            else:
                raise UsageError(f"unknown measure family {fam!r}")
            res = master.master_residual(model, grid.t0, m0, tol=cfg.tol("gap"),
                                         lin_tol=cfg.tol("linearized"))
            par = f"family={fam};n_x={nx};n_t={nt}"
            rep.add(par, "residual_sup", res.sup_norm)
            rep.add(par, "residual_l2", res.l2_norm)
            rep.add(par, "boundary_x", float(np.max(res.boundary_x)))
            rep.add(par, "boundary_x_one_sided", float(np.max(res.boundary_x_one_sided)))
            rep.add(par, "boundary_y", float(np.max(res.boundary_y)))
            pts.append((grid.dx, res.sup_norm))
            rep.samples[f"{fam}_n{nx}"] = res.sample
            rep.check(f"boundary_x[{par}]", np.max(res.boundary_x), "<=", cfg.tol("boundary"), "boundary")
            rep.check(f"boundary_y[{par}]", np.max(res.boundary_y), "<=", cfg.tol("boundary"), "boundary")
        fit = fit_rate(pts)
        rep.fits[f"residual_{fam}"] = fit.to_dict()
        rep.add(f"family={fam}", "residual_order", fit.slope)
        rep.check(f"residual_order[{fam}]", fit.slope, ">=", cfg.tol("order_min"), "order_min")
    return rep


def run_neumann(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    grid = model.grid
    m0 = measure_from_param(grid, cfg.params.get("m0", "random"), rng)
    res = master.master_residual(model, grid.t0, m0, tol=cfg.tol("gap"),
                                 lin_tol=cfg.tol("linearized"))
    sample = res.sample
    rep.samples["sample"] = sample
    for i, end in enumerate(("x=0", "x=1")):
        rep.add(end, "a_Ux_nu", res.boundary_x[i])
        rep.add(end, "a_Ux_nu_one_sided", res.boundary_x_one_sided[i])
        rep.check(f"a_Ux_nu[{end}]", res.boundary_x[i], "<=", cfg.tol("boundary"), "boundary")
    for i, end in enumerate(("y=0", "y=1")):
        rep.add(end, "a_DmU_nu", res.boundary_y[i])
        rep.check(f"a_DmU_nu[{end}]", res.boundary_y[i], "<=", cfg.tol("boundary"), "boundary")
    nodes = cfg.params.get("crosscheck_nodes",
                           [grid.n_x // 4, grid.n_x // 2, (3 * grid.n_x) // 4])
    cross = master.intrinsic_derivative_crosscheck(sample, nodes, cfg.tol("linearized"))
    bound = cfg.tol("crosscheck_factor") * cfg.tol("linearized")
    for j, err in cross.items():
        rep.add(f"node={j}", "dipole_crosscheck", err)
    rep.add("-", "normalization_defect", sample.diagnostics["normalization_defect"])
    rep.check("normalization_defect", sample.diagnostics["normalization_defect"], "<=",
              cfg.tol("normalization"), "normalization")
    rep.check("dipole_crosscheck", max(cross.values()), "<=", bound, "crosscheck_factor")
    return rep


def run_flow_consistency(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    model = cfg.model()
    m0 = measure_from_param(model.grid, cfg.params.get("m0", "random"), rng)
    tol = cfg.tol("gap")
    out = master.probe_flow_consistency(model, model.grid.t0, m0,
                                        int(cfg.params.get("n_times", 5)), tol)
    for t, err in out["errors"].items():
        rep.add(f"t={t!r}", "flow_error", err)
    rep.add("-", "max_flow_error", out["max_error"])
    rep.check("max_flow_error", out["max_error"], "<=", cfg.tol("factor") * tol, "factor")
    return rep


def holder_time_ratio(grid, m: np.ndarray) -> float:
    """``max_{t != s} d1(m(t), m(s)) / |t - s|^{1/2}`` over all level pairs."""
    cdf = np.cumsum(m * grid.weights, axis=1)[:, :-1]
    best = 0.0
    for k in range(1, grid.n_t):
        d = np.sum(np.abs(cdf[k:] - cdf[:-k]), axis=1) * grid.dx
        best = max(best, float(d.max()) / np.sqrt(k * grid.dt))
    return best


def run_holder_time(cfg: ExperimentConfig, rng) -> Report:
    rep = Report(cfg.name)
    spec = dict(cfg.model_spec)
    m0_spec = cfg.params.get("m0", {"cos": [0.5, 0.2]})
    ratios = []
    for level in range(int(cfg.params.get("levels", 2))):
        nx = (spec["n_x"] - 1) * 2 ** level + 1
        nt = (spec["n_t"] - 1) * 2 ** level + 1
        model = model_from_spec({**spec, "n_x": nx, "n_t": nt})
        m0 = measure_from_param(model.grid, m0_spec, np.random.default_rng(cfg.seed))
        sol = solve_mfg(model, m0, tol=cfg.tol("gap"))
        r = holder_time_ratio(model.grid, sol.m)
        ratios.append(r)
        rep.add(f"n_x={nx};n_t={nt}", "holder_ratio", r)
        rep.add(f"n_x={nx};n_t={nt}", "mass_drift", sol.mass_drift)
    factor = max(ratios) / min(ratios)
    rep.add("-", "ratio_factor", factor)
    rep.check("ratio_factor", factor, "<=", cfg.tol("max_factor"), "max_factor")
    return rep


RUNNERS = {
    "oracle-convergence": run_oracle_convergence,
    "duality": run_duality,
    "mfg-solve": run_mfg_solve,
    "monotonicity": run_monotonicity,
    "lipschitz": run_lipschitz,
    "remainder-order": run_remainder_order,
    "master-residual": run_master_residual,
    "neumann": run_neumann,
    "flow-consistency": run_flow_consistency,
    "holder-time": run_holder_time,
}


def execute(cfg: ExperimentConfig, index: int = 0) -> Report:
    """Run one experiment; solver non-convergence becomes a failed assertion."""
    rng = np.random.default_rng([cfg.seed, index])
    start = time.perf_counter()
    try:
        rep = RUNNERS[cfg.kind](cfg, rng)
    except ConvergenceError as exc:
        rep = Report(cfg.name)
        rep.diagnostics["gap_history"] = exc.history
        rep.assertions.append({"metric": "converged", "value": 0.0, "op": ">=", "bound": 1.0,
                               "tolerance": "gap", "passed": False, "message": str(exc)})
    rep.diagnostics.update({"kind": cfg.kind, "seed": cfg.seed, "params": cfg.params,
                            "tolerances": {**DEFAULT_TOLERANCES[cfg.kind], **cfg.tolerances},
                            "runtime_seconds": time.perf_counter() - start})
    return rep


def run_experiment(configs, out_dir, jobs: int = 1) -> int:
    """Run experiments, write reports into ``out_dir`` and return the exit status."""
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    for cfg in configs:
        cfg.model()  # surface bad model specs as usage errors before any work
    os.makedirs(out_dir, exist_ok=True)
    if jobs != 1 and len(configs) > 1:
        from joblib import Parallel, delayed
        reports = Parallel(n_jobs=jobs)(delayed(execute)(c, i) for i, c in enumerate(configs))
    else:
        reports = [execute(c, i) for i, c in enumerate(configs)]

    records = [r for rep in reports for r in rep.records]
    emit_csv(records, os.path.join(out_dir, "results.csv"))
    diagnostics = {
        "seed": configs[0].seed if configs else None,
        "experiments": {rep.name: {"passed": rep.passed, "assertions": rep.assertions,
                                   **rep.diagnostics} for rep in reports},
    }
    with open(os.path.join(out_dir, "diagnostics.json"), "w") as fh:
        json.dump(master._jsonable(diagnostics), fh, indent=2, sort_keys=True)
        fh.write("\n")
    fits = {rep.name: rep.fits for rep in reports if rep.fits}
    if fits:
        with open(os.path.join(out_dir, "fit.json"), "w") as fh:
            json.dump(master._jsonable(fits), fh, indent=2, sort_keys=True)
            fh.write("\n")
    for rep in reports:
        for key, sample in rep.samples.items():
            sample.save(os.path.join(out_dir, "samples", rep.name, key))
    failed = [(rep.name, a) for rep in reports for a in rep.failures]
    for name, a in failed:
        log.error("%s: %s = %.6g violates %s %.6g (%s)", name, a["metric"], a["value"],
                  a["op"], a["bound"], a["tolerance"])
    return 1 if failed else 0


def validate_config(cfg_path) -> tuple[int, dict]:
    with open(cfg_path) as fh:
        doc = json.load(fh)
    spec = doc.get("model", doc)
    report = validate_hypotheses(model_from_spec(spec), seed=int(doc.get("seed", 0)))
    return (0 if report.passed else 1), report.to_dict()

"""Master field ``U(t0, x, m0)``, its measure derivatives and the probe suite."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .linearized import (
    DEFAULT_TOL,
    fundamental_kernel,
    intrinsic_derivative,
    kernel_pairing,
    normalize_kernel,
    solve_linearized_mfg,
)
from .metrics import discrete_holder_norm, wasserstein1
from .mfg import MfgSolution, solve_mfg
from .model import NORMAL, Grid, MfgModel, check_measure, one_sided_boundary_derivative
from .parabolic import centered_gradient, reflected_second_difference
from .rates import fit_rate
from .validation import ValidationError

MFG_TOL = 1e-10


@dataclass
class MasterSample:
    """Master field data at one point ``(t0, m0)``.

    ``K`` is the raw fundamental solution; ``K_normalized`` has zero mean
    against ``m0`` in ``y``.  Fields not yet computed are ``None``.
    """

    grid: Grid
    t0: float
    m0: np.ndarray
    U: np.ndarray
    K: np.ndarray | None = None
    K_normalized: np.ndarray | None = None
    DmU: np.ndarray | None = None
    dtU: np.ndarray | None = None
    residual: np.ndarray | None = None
    solution: MfgSolution | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def _header(self) -> str:
        g = self.grid
        return (f"# n_x={g.n_x} n_t={g.n_t} t0={self.t0!r} T={g.T!r} "
                f"alpha={g.alpha!r} dx={g.dx!r} rows=x cols=y")

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        x = self.grid.x
        np.savetxt(os.path.join(directory, "U.csv"), np.column_stack([x, self.U]),
                   delimiter=",", header="x,U", comments="", fmt="%.17g")
        for name, mat in (("K.csv", self.K_normalized), ("K_raw.csv", self.K),
                          ("DmU.csv", self.DmU)):
            if mat is not None:
                np.savetxt(os.path.join(directory, name), mat, delimiter=",",
                           header=self._header(), comments="", fmt="%.17g")
        if self.residual is not None:
            np.savetxt(os.path.join(directory, "residual.csv"),
                       np.column_stack([x, self.residual]), delimiter=",",
                       header="x,residual", comments="", fmt="%.17g")
        with open(os.path.join(directory, "diagnostics.json"), "w") as fh:
            json.dump(_jsonable(self.diagnostics), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_matrix(path) -> tuple[dict, np.ndarray]:
    """Read a matrix written by :meth:`MasterSample.save` with its header."""
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    return meta, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _at_terminal(model: MfgModel, t0: float) -> bool:
    return abs(t0 - model.grid.T) <= 1e-12 * max(1.0, abs(model.grid.T))


def _solve_from(model: MfgModel, t0: float, m0, tol: float) -> tuple[MfgModel, MfgSolution]:
    sub = model.starting_at(t0)
    return sub, solve_mfg(sub, m0, tol=tol)


def evaluate_master(model: MfgModel, t0: float, m0, tol: float = MFG_TOL) -> MasterSample:
    """``U(t0, ., m0) = u(t0, .)`` for the MFG solution started at ``(t0, m0)``."""
    m0 = check_measure(model.grid, m0)
    if _at_terminal(model, t0):
        return MasterSample(model.grid, float(t0), m0, model.G(m0),
                            diagnostics={"terminal": True})
    sub, sol = _solve_from(model, t0, m0, tol)
    U = sol.u[0].copy()
    diag = {"terminal": False, "iterations": sol.iterations, "final_gap": sol.final_gap,
            "mfg_tol": tol, "holder_2_alpha_U": float(discrete_holder_norm(U, sub.grid, "2+alpha")),
            **{f"mfg_{k}": v for k, v in sol.residuals.items()}}
    return MasterSample(sub.grid, float(t0), m0, U, solution=sol, diagnostics=diag)


def flat_derivative_field(model: MfgModel, t0: float, m0, tol: float = MFG_TOL,
                          lin_tol: float = DEFAULT_TOL) -> MasterSample:
    """Attach ``K = dU/dm``, its normalized form and ``D_m U`` to the sample."""
    sample = evaluate_master(model, t0, m0, tol)
    if sample.solution is None:
        raise ValidationError("the measure derivative needs t0 < T")
    grid = sample.grid
    K = fundamental_kernel(sample.solution.model, sample.solution, tol=lin_tol)
    sample.K = K
    sample.K_normalized = normalize_kernel(grid, K, sample.m0)
    sample.DmU = intrinsic_derivative(sample.K_normalized, grid.dx)
    sample.diagnostics["linearized_tol"] = lin_tol
    sample.diagnostics["normalization_defect"] = float(
        np.max(np.abs(kernel_pairing(grid, sample.K_normalized, sample.m0))))
    return sample


def time_derivative_master(model: MfgModel, t0: float, m0, dt_probe: float | None = None,
                           tol: float = MFG_TOL, U0: np.ndarray | None = None) -> np.ndarray:
    """Forward difference ``(U(t0 + dt_probe) - U(t0)) / dt_probe`` at fixed ``m0``."""
    dt_probe = model.grid.dt if dt_probe is None else float(dt_probe)
    if dt_probe <= 0 or t0 + dt_probe > model.grid.T + 1e-12:
        raise ValidationError(f"probe time {t0} + {dt_probe} lies past T={model.grid.T}")
    if U0 is None:
        U0 = evaluate_master(model, t0, m0, tol).U
    U1 = evaluate_master(model, t0 + dt_probe, m0, tol).U
    return (U1 - U0) / dt_probe


@dataclass
class MasterResidual:
    residual: np.ndarray
    sup_norm: float
    l2_norm: float
    boundary_x: np.ndarray  # |a U_x nu| at x = 0, 1 using the scheme gradient
    boundary_x_one_sided: np.ndarray  # same with one-sided second-order U_x
    boundary_y: np.ndarray  # max over x of |a(y) D_mU nu| at y = 0, 1
    sample: MasterSample = field(repr=False)

    def to_dict(self) -> dict:
        return {"sup_norm": self.sup_norm, "l2_norm": self.l2_norm,
                "boundary_x": self.boundary_x.tolist(),
                "boundary_x_one_sided": self.boundary_x_one_sided.tolist(),
                "boundary_y": self.boundary_y.tolist()}


def master_residual(model: MfgModel, t0: float, m0, tol: float = MFG_TOL,
                    lin_tol: float = DEFAULT_TOL) -> MasterResidual:
    """Plug the computed ``U``, ``D_m U`` and ``dU/dt`` into the master equation."""
    sample = flat_derivative_field(model, t0, m0, tol, lin_tol)
    grid = sample.grid
    sample.dtU = time_derivative_master(model, t0, sample.m0, tol=tol, U0=sample.U)

    x, dx = grid.x, grid.dx
    a = model.a.a
    U, D, m0w = sample.U, sample.DmU, sample.m0 * grid.weights
    Ux = centered_gradient(U, dx)
    Uxx = reflected_second_difference(U, dx)
    DyD = np.gradient(D, dx, axis=1, edge_order=2)
    h = model.h
    residual = (-sample.dtU - a * Uxx + h.H(x, Ux)
                - (DyD * a[None, :]) @ m0w
                + (D * h.H_p(x, Ux)[None, :]) @ m0w
                - model.F(sample.m0))
    sample.residual = residual

    ends = [0, -1]
    bx = np.abs(a[ends] * Ux[ends] * NORMAL)
    bx_one = np.abs(a[ends] * one_sided_boundary_derivative(U, dx) * NORMAL)
    by = np.max(np.abs(D[:, ends] * a[ends] * NORMAL), axis=0)
    out = MasterResidual(residual, float(np.max(np.abs(residual))),
                         float(np.sqrt(grid.pair(residual ** 2, 1.0))), bx, bx_one, by, sample)
    sample.diagnostics.update({f"residual_{k}": v for k, v in out.to_dict().items()})
    return out


def intrinsic_derivative_crosscheck(sample: MasterSample, nodes, lin_tol: float = DEFAULT_TOL):
    """Compare ``D_m U(., y_j)`` with a direct solve for ``mu0 = -d/dy delta_{y_j}``.

    The dipole is discretized as ``(delta_{j+1} - delta_{j-1}) / (2 dx)``, so the
    direct solve reproduces the centered y-difference of ``K``.  Returns the
    largest discrepancy per node.
    """
    grid = sample.grid
    out = {}
    for j in nodes:
        if not 1 <= j <= grid.n_x - 2:
            raise ValidationError("cross-check nodes must be interior")
        mu = np.zeros(grid.n_x)
        mu[j + 1] = 1.0 / grid.weights[j + 1]
        mu[j - 1] = -1.0 / grid.weights[j - 1]
        mu /= 2.0 * grid.dx
        v = solve_linearized_mfg(sample.solution.model, sample.solution, mu, tol=lin_tol).z[0]
        out[int(j)] = float(np.max(np.abs(v - sample.DmU[:, j])))
    return out


# --------------------------------------------------------------------------
# Probes
# --------------------------------------------------------------------------

def probe_flow_consistency(model: MfgModel, t0: float, m0, n_times: int = 5,
                           tol: float = MFG_TOL, levels=None) -> dict:
    """Re-solve from ``(t_k, m(t_k))`` and compare with the stored ``u(t_k)``."""
    sub, sol = _solve_from(model, t0, check_measure(model.grid, m0), tol)
    grid = sub.grid
    if levels is None:
        levels = np.unique(np.linspace(0, grid.n_t - 1, n_times + 2).round().astype(int))[1:-1]
    errors = {}
    for k in levels:
        k = int(k)
        if k == 0:
            errors[float(grid.t[k])] = 0.0
            continue
        if k == grid.n_t - 1:
            errors[float(grid.t[k])] = float(np.max(np.abs(sub.G(sol.m[k]) - sol.u[k])))
            continue
        fresh = solve_mfg(sub.from_level(k), sol.m[k], tol=tol)
        errors[float(grid.t[k])] = float(np.max(np.abs(fresh.u[0] - sol.u[k])))
    return {"errors": errors, "max_error": max(errors.values()) if errors else 0.0,
            "tol": tol}


def probe_lipschitz(model: MfgModel, t0: float, pairs, tol: float = MFG_TOL) -> dict:
    """Ratios of field differences to the initial ``d1`` distance, one row per pair."""
    rows, notes = [], []
    sub = model.starting_at(t0)
    grid = sub.grid
    for i, (m01, m02) in enumerate(pairs):
        d = float(wasserstein1(grid, m01, m02))
        if d == 0.0:
            notes.append(f"pair {i}: identical measures, skipped")
            continue
        s1 = solve_mfg(sub, m01, tol=tol)
        s2 = solve_mfg(sub, m02, tol=tol)
        dU = s1.u[0] - s2.u[0]
        flow = float(np.max(wasserstein1(grid, s1.m.T, s2.m.T)))
        rows.append({
            "pair": i, "d1": d,
            "sup_ratio": float(np.max(np.abs(dU))) / d,
            "grad_ratio": float(np.max(np.abs(centered_gradient(dU, grid.dx)))) / d,
            "second_diff_holder_ratio": float(
                discrete_holder_norm(reflected_second_difference(dU, grid.dx), grid, "alpha")) / d,
            "holder_2_alpha_ratio": float(discrete_holder_norm(dU, grid, "2+alpha")) / d,
            "flow_ratio": flow / d,
        })
    return {"rows": rows, "notes": notes}


def probe_remainder_order(model: MfgModel, t0: float, m0, m1, s_ladder,
                          tol: float = 1e-12, lin_tol: float = 1e-12) -> dict:
    """Fit ``r(s) = |U(m_s) - U(m0) - <K, m_s - m0>|`` against ``d1(m_s, m0)``."""
    s_ladder = [float(s) for s in s_ladder]
    if len(s_ladder) < 3:
        raise ValidationError("the s ladder needs at least 3 entries")
    if any(not 0 < s <= 1 for s in s_ladder) or any(
            b >= a for a, b in zip(s_ladder, s_ladder[1:])):
        raise ValidationError("s ladder must be decreasing inside (0, 1]")
    base = flat_derivative_field(model, t0, m0, tol, lin_tol)
    grid = base.grid
    m1 = check_measure(model.grid, m1)
    points = []
    for s in s_ladder:
        ms = (1.0 - s) * base.m0 + s * m1
        Us = evaluate_master(model, t0, ms, tol).U
        r = float(np.max(np.abs(Us - base.U - kernel_pairing(grid, base.K, ms - base.m0))))
        points.append((float(wasserstein1(grid, ms, base.m0)), r, s))
    out = {"points": points, "slope": None, "notes": []}
    try:
        fit = fit_rate([(d, r) for d, r, _ in points])
        out.update(slope=fit.slope, r_squared=fit.r_squared, notes=fit.notes)
    except ValidationError as exc:
        out["notes"].append(f"degenerate fit: {exc}")
    return out

"""Linearized MFG system, its fundamental solution and the intrinsic derivative.

The linearization is taken of the discrete scheme itself, around a solved
baseline ``(u, m)``:

* backward:  ``A z^n = z^{n+1} + dt [k_F W rho^n + h^n - (H_p(x, Du^{n+1}) + a') D z^{n+1}]``
  with ``z^L = k_G W rho^L + z_T``;
* forward:   ``S_n^T W rho^{n+1} = W rho^n - dt Dsel_n^T W (m^{n+1} H_pp(x, Du^n) D z^n + c^n)``.

Every routine accepts a trailing batch axis on the data, so a whole family of
initial perturbations (e.g. all discrete Dirac masses) is solved in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .metrics import TestDictionary, default_dictionary, discrete_holder_norm, dual_norm
from .mfg import MfgSolution
from .model import Grid, MfgModel
from .parabolic import (
    centered_gradient,
    implicit_diffusion_bands,
    terminal_compatibility,
    terminal_tolerance,
)
from .validation import ConvergenceError, ValidationError, check_fraction

DEFAULT_TOL = 1e-10


@dataclass
class GeneralLinearizedData:
    """Data of the general linearized system around ``baseline``.

    ``z_T`` and ``rho0`` have shape ``(n_x[, B])``; ``h`` and ``c`` have shape
    ``(n_t, n_x[, B])``.  ``None`` stands for zero.
    """

    baseline: MfgSolution
    rho0: np.ndarray
    z_T: np.ndarray | None = None
    h: np.ndarray | None = None
    c: np.ndarray | None = None

    @property
    def model(self) -> MfgModel:
        return self.baseline.model

    def validated(self) -> "GeneralLinearizedData":
        grid = self.model.grid
        rho0 = np.asarray(self.rho0, dtype=float)
        if rho0.shape[0] != grid.n_x or rho0.ndim > 2:
            raise ValidationError("rho0 must have shape (n_x,) or (n_x, B)")
        tail = rho0.shape[1:]

        def field_(arr, shape, name):
            if arr is None:
                return None
            arr = np.asarray(arr, dtype=float)
            try:
                return np.broadcast_to(arr, shape)
            except ValueError:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}") from None

        z_T = field_(self.z_T, (grid.n_x,) + tail, "z_T")
        if z_T is not None:
            defect = terminal_compatibility(z_T, grid)
            if defect > terminal_tolerance(z_T, grid):
                raise ValidationError(f"z_T violates the Neumann compatibility ({defect:.3e})")
        h = field_(self.h, (grid.n_t, grid.n_x) + tail, "h")
        c = field_(self.c, (grid.n_t, grid.n_x) + tail, "c")
        return GeneralLinearizedData(self.baseline, rho0, z_T, h, c)


@dataclass
class LinearizedSolution:
    z: np.ndarray
    rho: np.ndarray
    m_constant: np.ndarray | float
    iterations: int
    gap_history: list
    residuals: dict = field(default_factory=dict)


def _pad(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))


class _LinearizedOperator:
    """Frozen coefficients of the linearization around one baseline."""

    def __init__(self, baseline: MfgSolution):
        model = baseline.model
        grid = model.grid
        self.model, self.grid, self.baseline = model, grid, baseline
        p = baseline.du  # (n_t, n_x)
        self.drift_explicit = model.h.H_p(grid.x, p) + model.a.b_tilde
        self.hpp = model.h.H_pp(grid.x, p)
        self.ab = implicit_diffusion_bands(model)
        self.op = baseline.operator
        self.abT = np.zeros_like(self.op.steps)
        self.abT[:, 1] = self.op.steps[:, 1]
        self.abT[:, 0, 1:] = self.op.steps[:, 2, :-1]
        self.abT[:, 2, :-1] = self.op.steps[:, 0, 1:]

    def coupling(self, kernel, rho):
        w = _pad(self.grid.weights, rho.ndim)
        return np.tensordot(kernel.values, w * rho, axes=(1, 0))

    def backward(self, rho, z_T=None, h=None):
        grid, dt, dx = self.grid, self.grid.dt, self.grid.dx
        z = np.empty_like(rho)
        z[-1] = self.coupling(self.model.g_coupling, rho[-1])
        if z_T is not None:
            z[-1] += z_T
        for n in range(grid.n_t - 2, -1, -1):
            src = self.coupling(self.model.f_coupling, rho[n])
            if h is not None:
                src = src + h[n]
            drift = _pad(self.drift_explicit[n + 1], z.ndim - 1)
            rhs = z[n + 1] + dt * (src - drift * centered_gradient(z[n + 1], dx))
            z[n] = solve_banded((1, 1), self.ab, rhs, check_finite=False)
        return z

    def forward(self, z, rho0, c=None):
        grid, dt, dx = self.grid, self.grid.dt, self.grid.dx
        w = _pad(grid.weights, rho0.ndim)
        m = self.baseline.m
        rho = np.empty_like(z)
        rho[0] = rho0
        for n in range(grid.n_t - 1):
            flux = _pad(m[n + 1] * self.hpp[n], z.ndim - 1) * centered_gradient(z[n], dx)
            if c is not None:
                flux = flux + c[n]
            rhs = w * rho[n] - dt * self.op.upwind_gradient_T(n, w * flux)
            rho[n + 1] = solve_banded((1, 1), self.abT[n], rhs, check_finite=False) / w
        return rho


def linearized_m_constant(data: GeneralLinearizedData, dictionary: TestDictionary):
    """``||z_T||_{2+a} + ||rho0||_{-(1+a)} + sup_t ||h||_{a} + ||c||_{L1}`` (discrete proxies)."""
    grid = data.model.grid
    total = dual_norm(grid, data.rho0, dictionary)
    if data.z_T is not None:
        total = total + discrete_holder_norm(data.z_T, grid, "2+alpha")
    if data.h is not None:
        total = total + np.max(
            [discrete_holder_norm(data.h[n], grid, "alpha") for n in range(grid.n_t)], axis=0)
    if data.c is not None:
        wt = _pad(np.outer(grid.time_weights, grid.weights), data.c.ndim)
        total = total + np.sum(np.abs(data.c) * wt, axis=(0, 1))
    return total


def solve_linearized_general(data: GeneralLinearizedData, tol: float = DEFAULT_TOL,
                             max_iter: int = 200, theta: float = 0.5,
                             dictionary: TestDictionary | None = None) -> LinearizedSolution:
    """Damped iteration on the ``rho`` path until ``sup_t`` dual-norm gap < ``tol``."""
    data = data.validated()
    theta = check_fraction(theta, "theta")
    grid = data.model.grid
    dictionary = dictionary or default_dictionary(grid)
    lin = _LinearizedOperator(data.baseline)
    rho = np.broadcast_to(data.rho0, (grid.n_t,) + data.rho0.shape).copy()
    m_const = linearized_m_constant(data, dictionary)

    decoupled = not np.any(data.model.f_coupling.values) and not np.any(data.model.g_coupling.values)
    history: list[float] = []
    for k in range(1, max_iter + 1):
        z = lin.backward(rho, data.z_T, data.h)
        new = lin.forward(z, data.rho0, data.c)
        if decoupled:
            # z does not see rho, so one sweep is exact
            return _finish(lin, data, z, new, m_const, 1, [0.0])
        step = theta * (new - rho)
        gap = _sup_dual(grid, step, dictionary)
        history.append(gap)
        rho = rho + step
        if gap < tol:
            z = lin.backward(rho, data.z_T, data.h)
            rho = lin.forward(z, data.rho0, data.c)
            return _finish(lin, data, z, rho, m_const, k, history)
    raise ConvergenceError(
        f"linearized iteration did not reach gap {tol:g} in {max_iter} iterations", history)


def _sup_dual(grid: Grid, path: np.ndarray, dictionary: TestDictionary) -> float:
    return float(max(np.max(dual_norm(grid, path[n], dictionary)) for n in range(grid.n_t)))


def _finish(lin, data, z, rho, m_const, iterations, history) -> LinearizedSolution:
    grid = lin.grid
    w = _pad(grid.weights, rho.ndim - 1)
    mass = np.sum(rho * w, axis=1)
    residuals = {
        "mass_drift": float(np.max(np.abs(mass - mass[0]))),
        "rho_consistency": _sup_dual(grid, lin.forward(lin.backward(rho, data.z_T, data.h),
                                                       data.rho0, data.c) - rho,
                                     default_dictionary(grid)),
    }
    return LinearizedSolution(z, rho, m_const, iterations, history, residuals)


def solve_linearized_mfg(model: MfgModel, baseline: MfgSolution, mu0,
                         tol: float = DEFAULT_TOL, **kwargs) -> LinearizedSolution:
    """Linearized system with zero sources: returns ``(v, mu)`` as ``(z, rho)``."""
    if baseline.model is not model and baseline.model.grid != model.grid:
        raise ValidationError("baseline was solved on a different grid")
    return solve_linearized_general(GeneralLinearizedData(baseline, mu0), tol=tol, **kwargs)


def fundamental_kernel(model: MfgModel, baseline: MfgSolution, t0: float | None = None,
                       tol: float = DEFAULT_TOL, **kwargs) -> np.ndarray:
    """``K[i, j] = v(t0, x_i)`` for the perturbation ``mu0`` = Dirac mass at ``y_j``.

    All columns are solved together as one batched system.
    """
    grid = model.grid
    if t0 is not None and abs(t0 - baseline.grid.t0) > 1e-12:
        raise ValidationError("baseline must start at t0")
    deltas = np.diag(1.0 / grid.weights)
    sol = solve_linearized_mfg(model, baseline, deltas, tol=tol, **kwargs)
    return sol.z[0]


def kernel_pairing(grid: Grid, K: np.ndarray, mu) -> np.ndarray:
    """``sum_j K(x, y_j) mu_j w_j``."""
    mu = np.asarray(mu, dtype=float)
    return K @ (mu * _pad(grid.weights, mu.ndim))


def normalize_kernel(grid: Grid, K: np.ndarray, m0) -> np.ndarray:
    """Subtract ``int K(x, y) dm0(y)`` so every row has zero mean against ``m0``."""
    return K - kernel_pairing(grid, K, m0)[:, None]


def intrinsic_derivative(K, dx: float) -> np.ndarray:
    """``d/dy`` of the kernel: centered inside, one-sided second order at the ends."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[1] < 3:
        raise ValidationError("intrinsic derivative needs at least 3 y-nodes")
    return np.gradient(K, dx, axis=1, edge_order=2)

"""Backward linear, backward HJB and forward Fokker-Planck sweeps.

All three share one discretization:

* diffusion ``-(a phi_x)_x`` in finite-volume form with reflecting (Neumann)
  boundary rows, implicit in time;
* drift ``b phi_x`` upwinded so that the step matrix is an M-matrix, with the
  drift coefficient frozen per time level;
* the forward step is the exact transpose, in the trapezoidal inner product,
  of the backward step.  Discrete duality identities therefore hold up to
  round-off, mass is conserved and positivity is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .model import EllipticCoefficient, Grid, MfgModel, one_sided_boundary_derivative
from .validation import ValidationError, check_grid_function, check_space_time


def centered_gradient(f: np.ndarray, dx: float) -> np.ndarray:
    """Centered difference along axis 0 at interior nodes; zero at both ends.

    The zero boundary value is the ghost-node reflection of the Neumann closure.
    """
    g = np.zeros_like(f, dtype=float)
    g[1:-1] = (f[2:] - f[:-2]) / (2.0 * dx)
    return g


def reflected_second_difference(f: np.ndarray, dx: float) -> np.ndarray:
    """Three-point second difference with mirrored ghost nodes (axis 0)."""
    d2 = np.empty_like(f, dtype=float)
    d2[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dx ** 2
    d2[0] = 2.0 * (f[1] - f[0]) / dx ** 2
    d2[-1] = 2.0 * (f[-2] - f[-1]) / dx ** 2
    return d2


def diffusion_bands(a: EllipticCoefficient, grid: Grid) -> np.ndarray:
    """Banded form ``(3, n_x)`` of the nonnegative operator ``-(a u_x)_x``."""
    kappa = a.midpoints / grid.dx
    w = grid.weights
    n = grid.n_x
    ab = np.zeros((3, n))
    diag = np.zeros(n)
    diag[:-1] += kappa
    diag[1:] += kappa
    ab[1] = diag / w
    ab[0, 1:] = -kappa / w[:-1]  # entry (j, j+1)
    ab[2, :-1] = -kappa / w[1:]  # entry (j+1, j)
    return ab


def _banded_matvec(ab: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = ab[1].reshape((-1,) + (1,) * (f.ndim - 1)) * f
    up = ab[0, 1:].reshape((-1,) + (1,) * (f.ndim - 1))
    lo = ab[2, :-1].reshape((-1,) + (1,) * (f.ndim - 1))
    out[:-1] += up * f[1:]
    out[1:] += lo * f[:-1]
    return out


def _transpose_bands(ab: np.ndarray) -> np.ndarray:
    abT = np.zeros_like(ab)
    abT[1] = ab[1]
    abT[0, 1:] = ab[2, :-1]
    abT[2, :-1] = ab[0, 1:]
    return abT


@dataclass(frozen=True)
class BackwardOperator:
    """Per-level step matrices ``S_n = I + dt (L + B_n)`` in banded storage.

    ``L`` is the diffusion part, ``B_n = diag(b^n) Dsel_n`` the upwinded drift,
    where ``Dsel_n`` takes the backward difference where ``b^n >= 0`` and the
    forward difference elsewhere (zero rows at both boundary nodes).
    """

    grid: Grid
    diffusion: np.ndarray  # (3, n_x)
    drift: np.ndarray  # (n_t, n_x)
    steps: np.ndarray  # (n_t - 1, 3, n_x)

    @property
    def backward_mask(self) -> np.ndarray:
        mask = self.drift >= 0
        mask[:, 0] = mask[:, -1] = False
        return mask

    @property
    def forward_mask(self) -> np.ndarray:
        mask = self.drift < 0
        mask[:, 0] = mask[:, -1] = False
        return mask

    def upwind_gradient(self, n: int, f: np.ndarray) -> np.ndarray:
        """``Dsel_n f`` along axis 0."""
        dx = self.grid.dx
        shape = (-1,) + (1,) * (f.ndim - 1)
        back = self.backward_mask[n].reshape(shape)
        fwd = self.forward_mask[n].reshape(shape)
        g = np.zeros_like(f, dtype=float)
        g[1:-1] = np.where(back[1:-1], f[1:-1] - f[:-2], 0.0) + \
            np.where(fwd[1:-1], f[2:] - f[1:-1], 0.0)
        return g / dx

    def upwind_gradient_T(self, n: int, g: np.ndarray) -> np.ndarray:
        """Plain (Euclidean) transpose of ``Dsel_n`` applied to ``g``."""
        dx = self.grid.dx
        shape = (-1,) + (1,) * (g.ndim - 1)
        gb = np.where(self.backward_mask[n].reshape(shape), g, 0.0) / dx
        gf = np.where(self.forward_mask[n].reshape(shape), g, 0.0) / dx
        out = gb - gf
        out[:-1] -= gb[1:]
        out[1:] += gf[:-1]
        return out

    def apply_generator(self, n: int, f: np.ndarray) -> np.ndarray:
        """``(L + B_n) f``."""
        shape = (-1,) + (1,) * (f.ndim - 1)
        return _banded_matvec(self.diffusion, f) + \
            self.drift[n].reshape(shape) * self.upwind_gradient(n, f)

    def is_m_matrix(self) -> bool:
        s = self.steps
        return bool(np.all(s[:, 1] > 0) and np.all(s[:, 0, 1:] <= 0) and np.all(s[:, 2, :-1] <= 0))


def assemble_backward_operator(a: EllipticCoefficient, b, grid: Grid) -> BackwardOperator:
    """Assemble step matrices for ``-phi_t - (a phi_x)_x + b phi_x``.

    ``b`` may be ``None`` (no drift), a grid function (time independent) or a
    ``(n_t, n_x)`` array.
    """
    n = grid.n_x
    if b is None:
        b = np.zeros((grid.n_t, n))
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = np.broadcast_to(check_grid_function(b, n, "drift"), (grid.n_t, n)).copy()
    b = check_space_time(b, grid.n_t, n, "drift")
    L = diffusion_bands(a, grid)
    dx, dt = grid.dx, grid.dt

    bi = b[:-1].copy()
    bi[:, 0] = bi[:, -1] = 0.0
    pos = np.maximum(bi, 0.0) / dx
    neg = np.minimum(bi, 0.0) / dx
    steps = np.zeros((grid.n_t - 1, 3, n))
    steps[:, 1] = 1.0 + dt * (L[1] + pos - neg)
    # upper diagonal entry (j, j+1) sits at column j+1 of row 0
    steps[:, 0, 1:] = dt * (L[0, 1:] + neg[:, :-1])
    # lower diagonal entry (j, j-1) sits at column j-1 of row 2
    steps[:, 2, :-1] = dt * (L[2, :-1] - pos[:, 1:])
    return BackwardOperator(grid, L, b, steps)


def solve_linear_backward(op: BackwardOperator, xi, psi=None) -> np.ndarray:
    """Implicit backward sweep ``S_n phi^n = phi^{n+1} + dt psi^n``, ``phi^{n_t-1} = xi``.

    ``xi`` may be ``(n_x,)`` or ``(n_x, B)``; the result is ``(n_t, n_x[, B])``.
    """
    grid = op.grid
    xi = np.asarray(xi, dtype=float)
    if xi.shape[0] != grid.n_x or not np.all(np.isfinite(xi)):
        raise ValidationError("terminal datum does not match the grid")
    phi = np.empty((grid.n_t,) + xi.shape)
    phi[-1] = xi
    if psi is not None:
        psi = np.broadcast_to(np.asarray(psi, dtype=float), phi.shape)
    for n in range(grid.n_t - 2, -1, -1):
        rhs = phi[n + 1] if psi is None else phi[n + 1] + grid.dt * psi[n]
        phi[n] = solve_banded((1, 1), op.steps[n], rhs, check_finite=False)
    return phi


def solve_fokker_planck_forward(op: BackwardOperator, mu0, c=None) -> np.ndarray:
    """Forward sweep ``S_n^T W mu^{n+1} = W mu^n - dt Dsel_n^T W c^n``.

    Discretizes ``mu_t - (a mu_x)_x - (mu b)_x = (c)_x`` with zero total flux at
    both ends.  ``mu0`` may carry a trailing batch axis.
    """
    grid = op.grid
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape[0] != grid.n_x or not np.all(np.isfinite(mu0)):
        raise ValidationError("initial measure does not match the grid")
    shape = (-1,) + (1,) * (mu0.ndim - 1)
    w = grid.weights.reshape(shape)
    mu = np.empty((grid.n_t,) + mu0.shape)
    mu[0] = mu0
    if c is not None:
        c = np.broadcast_to(np.asarray(c, dtype=float), mu.shape)
    for n in range(grid.n_t - 1):
        rhs = w * mu[n]
        if c is not None:
            rhs = rhs - grid.dt * op.upwind_gradient_T(n, w * c[n])
        mu[n + 1] = solve_banded((1, 1), _transpose_bands(op.steps[n]), rhs,
                                 check_finite=False) / w
    return mu


def duality_defect(op: BackwardOperator, xi, psi, mu0, c=None) -> float:
    """Defect of the discrete weak formulation for one ``(xi, psi, mu0, c)``.

    With ``phi`` from the backward sweep and ``mu`` from the forward sweep,
    ``<mu^L, xi> + sum_n dt <mu^{n+1}, psi^n>`` must equal
    ``<mu^0, phi^0> - sum_n dt <c^n, Dsel_n phi^n>``.
    """
    grid = op.grid
    phi = solve_linear_backward(op, xi, psi)
    mu = solve_fokker_planck_forward(op, mu0, c)
    lhs = grid.pair(mu[-1], xi) + grid.dt * sum(
        grid.pair(mu[n + 1], psi[n]) for n in range(grid.n_t - 1))
    rhs = grid.pair(mu0, phi[0])
    if c is not None:
        rhs -= grid.dt * sum(grid.pair(c[n], op.upwind_gradient(n, phi[n]))
                             for n in range(grid.n_t - 1))
    return float(abs(lhs - rhs))


# --------------------------------------------------------------------------
# Hamilton-Jacobi
# --------------------------------------------------------------------------

def terminal_compatibility(g, grid: Grid) -> float:
    """Largest one-sided boundary derivative of ``g``."""
    return float(np.max(np.abs(one_sided_boundary_derivative(g, grid.dx))))


def terminal_tolerance(g, grid: Grid) -> float:
    """Allowed one-sided boundary slope: ``dx^2`` times the interior curvature scale.

    A smooth datum with zero boundary slope leaves a one-sided defect of
    order ``dx^3`` times its fourth derivative, which this bound admits.
    """
    g = np.asarray(g, dtype=float)
    curv = np.max(np.abs(g[2:] - 2.0 * g[1:-1] + g[:-2])) / grid.dx ** 2
    return grid.dx ** 2 * max(1.0, float(curv))


def implicit_diffusion_bands(model: MfgModel) -> np.ndarray:
    ab = diffusion_bands(model.a, model.grid) * model.grid.dt
    ab[1] += 1.0
    return ab


def solve_hjb_backward(model: MfgModel, m_path, g) -> np.ndarray:
    """Semi-implicit sweep for ``-u_t - a u_xx + H(x, u_x) = F(x, m(t))``.

    Written in divergence form, ``-a u_xx = -(a u_x)_x + a' u_x``.  Diffusion is
    implicit; ``H`` and the ``a'`` drift are explicit and use the centered
    gradient of the later level.
    """
    grid = model.grid
    m_path = check_space_time(m_path, grid.n_t, grid.n_x, "measure path")
    g = check_grid_function(g, grid.n_x, "terminal datum")
    defect = terminal_compatibility(g, grid)
    if defect > terminal_tolerance(g, grid):
        raise ValidationError(
            f"terminal datum violates the Neumann compatibility (|g_x| = {defect:.3e} at the boundary)")
    ab = implicit_diffusion_bands(model)
    F = model.F(m_path.T).T  # (n_t, n_x)
    x, dt, dx = grid.x, grid.dt, grid.dx
    bt = model.a.b_tilde
    u = np.empty((grid.n_t, grid.n_x))
    u[-1] = g
    for n in range(grid.n_t - 2, -1, -1):
        p = centered_gradient(u[n + 1], dx)
        rhs = u[n + 1] + dt * (F[n] - model.h.H(x, p) - bt * p)
        u[n] = solve_banded((1, 1), ab, rhs, check_finite=False)
    return u


def hjb_residual(model: MfgModel, u, m_path) -> np.ndarray:
    """Per-level residual of the discrete HJB step (should be round-off)."""
    grid = model.grid
    ab = implicit_diffusion_bands(model)
    F = model.F(np.asarray(m_path).T).T
    res = np.zeros(grid.n_t - 1)
    for n in range(grid.n_t - 1):
        p = centered_gradient(u[n + 1], grid.dx)
        rhs = u[n + 1] + grid.dt * (F[n] - model.h.H(grid.x, p) - model.a.b_tilde * p)
        res[n] = np.max(np.abs(_banded_matvec(ab, u[n]) - rhs))
    return res


def linear_residual(op: BackwardOperator, phi, psi=None) -> np.ndarray:
    """Per-level residual of the backward linear step."""
    grid = op.grid
    res = np.zeros(grid.n_t - 1)
    for n in range(grid.n_t - 1):
        rhs = phi[n + 1] if psi is None else phi[n + 1] + grid.dt * psi[n]
        res[n] = np.max(np.abs(_banded_matvec(op.steps[n], phi[n]) - rhs))
    return res

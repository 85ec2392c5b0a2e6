"""Damped fixed-point solver for the coupled HJB / Fokker-Planck system."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import wasserstein1
from .model import MfgModel, check_measure
from .parabolic import (
    BackwardOperator,
    assemble_backward_operator,
    centered_gradient,
    hjb_residual,
    solve_fokker_planck_forward,
    solve_hjb_backward,
)
from .validation import ConvergenceError, ValidationError, check_fraction, check_positive

log = logging.getLogger(__name__)

STALL_WINDOW = 5


@dataclass
class MfgSolution:
    """Space-time fields ``u``, ``m`` of shape ``(n_t, n_x)`` plus diagnostics.

    ``m`` is the density transported by ``u``; ``u`` solves the HJB equation
    driven by the last iterate, which differs from ``m`` by at most
    ``residuals["coupling_gap"]`` in ``d1``.
    """

    model: MfgModel
    u: np.ndarray
    m: np.ndarray
    iterations: int
    final_gap: float
    gap_history: list
    operator: BackwardOperator = field(repr=False)
    residuals: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.model.grid

    @property
    def m0(self) -> np.ndarray:
        return self.m[0]

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.grid.pair(self.m.T, 1.0) - 1.0)))

    @property
    def du(self) -> np.ndarray:
        return centered_gradient(self.u.T, self.grid.dx).T


def _drift(model: MfgModel, u: np.ndarray) -> np.ndarray:
    p = centered_gradient(u.T, model.grid.dx).T
    return model.h.H_p(model.grid.x, p) + model.a.b_tilde


def _phi(model: MfgModel, beta: np.ndarray):
    """Fixed-point map returning ``(m, u, operator)``."""
    u = solve_hjb_backward(model, beta, model.G(beta[-1]))
    op = assemble_backward_operator(model.a, _drift(model, u), model.grid)
    m = solve_fokker_planck_forward(op, beta[0])
    return m, u, op


def fixed_point_map(model: MfgModel, beta) -> np.ndarray:
    """One application of the map: HJB driven by ``beta``, then transport ``beta(t0)``."""
    beta = np.asarray(beta, dtype=float)
    check_measure(model.grid, beta[0])
    return _phi(model, beta)[0]


def initial_path(model: MfgModel, m0: np.ndarray, guess="constant") -> np.ndarray:
    grid = model.grid
    if isinstance(guess, str):
        if guess == "constant":
            return np.tile(m0, (grid.n_t, 1))
        if guess == "heat":
            op = assemble_backward_operator(model.a, model.a.b_tilde, grid)
            return solve_fokker_planck_forward(op, m0)
        raise ValidationError(f"unknown initial guess {guess!r}")
    path = np.array(guess, dtype=float)
    if path.shape != (grid.n_t, grid.n_x):
        raise ValidationError("initial path has the wrong shape")
    path[0] = m0
    return path


def _sup_d1(model: MfgModel, p: np.ndarray, q: np.ndarray) -> float:
    return float(np.max(wasserstein1(model.grid, p.T, q.T)))


def solve_mfg(model: MfgModel, m0, theta: float = 0.5, tol: float = 1e-8,
              max_iter: int = 200, initial="constant") -> MfgSolution:
    """Damped Picard iteration ``m <- (1 - theta) m + theta Phi(m)``.

    If the gap fails to decrease for ``STALL_WINDOW`` consecutive iterations the
    weights switch to running averages (fictitious play).  Raises
    :class:`ConvergenceError` carrying the gap history when ``max_iter`` is
    exhausted.
    """
    grid = model.grid
    m0 = check_measure(grid, m0)
    theta = check_fraction(theta, "theta")
    tol = check_positive(tol, "tol")

    beta = initial_path(model, m0, initial)
    if model.is_decoupled:
        m, u, op = _phi(model, beta)
        history = [0.0]
        return _finish(model, beta=m, m=m, u=u, op=op, iterations=1, history=history)

    history: list[float] = []
    weight = theta
    averaging_since = None
    for k in range(1, max_iter + 1):
        m, u, op = _phi(model, beta)
        new_beta = (1.0 - weight) * beta + weight * m
        gap = _sup_d1(model, beta, new_beta)
        history.append(gap)
        beta = new_beta
        if gap < tol:
            m, u, op = _phi(model, beta)
            return _finish(model, beta=beta, m=m, u=u, op=op, iterations=k, history=history)
        if averaging_since is None and len(history) > STALL_WINDOW and \
                all(history[-i] >= history[-i - 1] for i in range(1, STALL_WINDOW + 1)):
            averaging_since = k
            log.info("gap stalled at iteration %d; switching to running averages", k)
        if averaging_since is not None:
            weight = 1.0 / (k - averaging_since + 2)
    raise ConvergenceError(
        f"fixed-point iteration did not reach gap {tol:g} in {max_iter} iterations "
        f"(last gap {history[-1]:.3e})", history)


def _finish(model, beta, m, u, op, iterations, history) -> MfgSolution:
    grid = model.grid
    residuals = {
        "hjb_step": float(np.max(hjb_residual(model, u, beta))),
        "coupling_gap": _sup_d1(model, beta, m),
        "mass_drift": float(np.max(np.abs(grid.pair(m.T, 1.0) - 1.0))),
        "min_density": float(m.min()),
    }
    return MfgSolution(model, u, m, iterations, history[-1], list(history), op, residuals)


# --------------------------------------------------------------------------
# Lasry-Lions monotonicity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityGap:
    """Both sides of the Lasry-Lions inequality plus the coupling terms.

    ``lhs`` is the sum of the two Bregman integrals and ``rhs`` is
    ``int (u1 - u2)(t0) d(m01 - m02)``.  In the continuum
    ``rhs - lhs = coupling_F + coupling_G >= 0`` for monotone couplings.
    """

    lhs: float
    rhs: float
    bregman_1: float
    bregman_2: float
    coupling_F: float
    coupling_G: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def monotonicity_gap(model: MfgModel, sol1: MfgSolution, sol2: MfgSolution) -> MonotonicityGap:
    grid = model.grid
    if sol1.u.shape != sol2.u.shape or sol1.u.shape != (grid.n_t, grid.n_x):
        raise ValidationError("solutions do not share the model grid")
    x = grid.x
    p1, p2 = sol1.du, sol2.du
    h = model.h
    b1 = h.H(x, p2) - h.H(x, p1) - h.H_p(x, p1) * (p2 - p1)
    b2 = h.H(x, p1) - h.H(x, p2) - h.H_p(x, p2) * (p1 - p2)
    tw = grid.time_weights

    def st(f):  # space-time trapezoid
        return float(tw @ grid.pair(f.T, 1.0))

    dm = sol1.m - sol2.m
    dF = model.F(sol1.m.T).T - model.F(sol2.m.T).T
    coupling_F = st(dF * dm)
    coupling_G = float(grid.pair(model.G(sol1.m[-1]) - model.G(sol2.m[-1]), dm[-1]))
    br1 = st(b1 * sol1.m)
    br2 = st(b2 * sol2.m)
    rhs = float(grid.pair(sol1.u[0] - sol2.u[0], dm[0]))
    return MonotonicityGap(br1 + br2, rhs, br1, br2, coupling_F, coupling_G)

"""Distances and norms on grid measures and grid functions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from .model import Grid, one_sided_boundary_derivative
from .validation import ValidationError


def _atoms(grid: Grid, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape[0] != grid.n_x:
        raise ValidationError(f"measure has {m.shape[0]} nodes, grid has {grid.n_x}")
    return m * grid.weights.reshape((-1,) + (1,) * (m.ndim - 1))


def wasserstein1(grid: Grid, m1, m2) -> float | np.ndarray:
    """Wasserstein-1 distance between two grid measures.

    Each measure is read as atoms ``m_j w_j`` at the nodes, so the distance is
    the L1 norm of the difference of two step CDFs.  Trailing batch axes are
    broadcast.
    """
    diff = np.cumsum(_atoms(grid, m1) - _atoms(grid, m2), axis=0)[:-1]
    return np.sum(np.abs(diff), axis=0) * grid.dx


def wasserstein1_dual(grid: Grid, m1, m2, sup_bound: float | None = None) -> float:
    """Same distance from its dual form: sup of ``<m1 - m2, phi>`` over 1-Lipschitz phi.

    ``sup_bound`` adds the box constraint ``|phi| <= sup_bound``; on the unit
    interval any bound of at least 1 leaves the value unchanged.
    """
    rho = _atoms(grid, np.asarray(m1) - np.asarray(m2))
    n = grid.n_x
    D = np.zeros((n - 1, n))
    D[np.arange(n - 1), np.arange(n - 1)] = -1.0
    D[np.arange(n - 1), np.arange(1, n)] = 1.0
    A = np.vstack([D, -D])
    b = np.full(2 * (n - 1), grid.dx)
    bound = np.inf if sup_bound is None else float(sup_bound)
    bounds = [(0.0, 0.0)] + [(-bound, bound)] * (n - 1)  # phi(0) = 0
    res = linprog(-rho, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"dual transport problem failed: {res.message}")
    return float(-res.fun)


# --------------------------------------------------------------------------
# Hölder norms
# --------------------------------------------------------------------------

def _parse_order(order, alpha: float) -> tuple[int, float]:
    """Map an order label to (number of derivatives, Hölder fraction)."""
    labels = {"0": (0, 0.0), "alpha": (0, alpha), "1+alpha": (1, alpha),
              "2+alpha": (2, alpha)}
    if isinstance(order, str):
        if order not in labels:
            raise ValidationError(f"unsupported Hölder order {order!r}")
        return labels[order]
    value = float(order)
    for k, frac in labels.values():
        if abs(value - (k + frac)) < 1e-12:
            return k, frac
    raise ValidationError(f"unsupported Hölder order {order!r}")


def _holder_quotient(g: np.ndarray, dx: float, frac: float) -> np.ndarray:
    """Max of ``|g(x) - g(y)| / |x - y|^frac`` over node pairs at least 2dx apart."""
    n = g.shape[0]
    best = np.zeros(g.shape[1:])
    for d in range(2, n):
        q = np.max(np.abs(g[d:] - g[:-d]), axis=0) / (d * dx) ** frac
        best = np.maximum(best, q)
    return best


def discrete_holder_norm(field, grid: Grid, order="1+alpha", axis: int = 0):
    """Discrete proxy of the ``C^{k+alpha}`` norm along ``axis``.

    Sum of sup norms of the field and its finite-difference derivatives up to
    order ``k``, plus the Hölder quotient of the ``k``-th derivative.  Other
    axes are treated as a batch and a norm is returned for each.
    """
    k, frac = _parse_order(order, grid.alpha)
    g = np.moveaxis(np.asarray(field, dtype=float), axis, 0)
    if g.shape[0] != grid.n_x:
        raise ValidationError("field does not live on the grid")
    total = np.max(np.abs(g), axis=0)
    for _ in range(k):
        g = np.gradient(g, grid.dx, axis=0, edge_order=2)
        total = total + np.max(np.abs(g), axis=0)
    if frac > 0:
        total = total + _holder_quotient(g, grid.dx, frac)
    return total


def lp_spacetime_norm(field, grid: Grid, alpha: float | None = None) -> float:
    """``L^p`` norm over ``[t0, T] x [0, 1]`` with ``p = 3 / (2 + alpha)``."""
    alpha = grid.alpha if alpha is None else alpha
    p = 3.0 / (2.0 + alpha)
    f = np.asarray(field, dtype=float)
    if f.shape[:2] != (grid.n_t, grid.n_x):
        raise ValidationError(f"expected a ({grid.n_t}, {grid.n_x}) field, got {f.shape}")
    w = np.outer(grid.time_weights, grid.weights)
    if f.ndim == 3:
        w = w[..., None]
    return np.sum(np.abs(f) ** p * w, axis=(0, 1)) ** (1.0 / p)


# --------------------------------------------------------------------------
# Dual norms through test dictionaries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TestDictionary:
    """Finite family of test functions with their Hölder norms.

    ``functions`` has shape ``(n_x, K)``.
    """

    __test__ = False  # keep pytest from collecting this class

    functions: np.ndarray
    norms: np.ndarray
    neumann: np.ndarray
    order: str
    boundary_derivative: np.ndarray

    def __len__(self) -> int:
        return self.functions.shape[1]

    def to_json(self) -> dict:
        return {"order": self.order, "norms": self.norms.tolist(),
                "neumann": self.neumann.tolist(),
                "boundary_derivative": self.boundary_derivative.tolist(),
                "functions": self.functions.T.tolist()}

    def extend(self, functions, grid: Grid, neumann=None) -> "TestDictionary":
        extra = make_dictionary(grid, functions, self.order, neumann)
        return TestDictionary(np.hstack([self.functions, extra.functions]),
                              np.concatenate([self.norms, extra.norms]),
                              np.concatenate([self.neumann, extra.neumann]), self.order,
                              np.concatenate([self.boundary_derivative, extra.boundary_derivative]))


def make_dictionary(grid: Grid, functions, order: str = "1+alpha",
                    neumann=None) -> TestDictionary:
    """Build a dictionary from the columns of ``functions``.

    ``neumann`` marks columns known to satisfy the Neumann condition exactly
    (cosine series, say).  When omitted, a column is marked only if its
    one-sided boundary derivatives are below 1e-10.
    """
    functions = np.atleast_2d(np.asarray(functions, dtype=float).T).T
    if functions.shape[0] != grid.n_x or functions.shape[1] == 0:
        raise ValidationError("dictionary must hold at least one grid function")
    norms = discrete_holder_norm(functions, grid, order)
    bd = np.max(np.abs(one_sided_boundary_derivative(functions, grid.dx)), axis=0)
    if neumann is None:
        flags = bd <= 1e-10
    else:
        flags = np.broadcast_to(np.asarray(neumann, dtype=bool), bd.shape).copy()
    return TestDictionary(functions, np.atleast_1d(norms), flags, order, np.atleast_1d(bd))


@lru_cache(maxsize=16)
def default_dictionary(grid: Grid, order: str = "1+alpha", n_cos: int = 33,
                       n_random: int = 16, seed: int = 0) -> TestDictionary:
    """Cosines ``cos(n pi x)``, n < n_cos, plus random smooth cosine combinations."""
    x = grid.x
    cols = [np.cos(n * np.pi * x) for n in range(n_cos)]
    rng = np.random.default_rng(seed)
    modes = np.arange(1, 9)
    for _ in range(n_random):
        c = rng.standard_normal(modes.size) / modes ** 2
        cols.append(np.cos(np.pi * np.outer(x, modes)) @ c)
    # cosine series satisfy the Neumann condition analytically
    return make_dictionary(grid, np.column_stack(cols), order, neumann=True)


def dual_norm(grid: Grid, rho, dictionary: TestDictionary):
    """Lower-bound estimate of a negative-order norm of ``rho``.

    Max over the dictionary of ``|<rho, phi_k>| / ||phi_k||``.  ``rho`` may
    carry trailing batch axes.
    """
    if len(dictionary) == 0:
        raise ValidationError("empty test dictionary")
    pairings = np.tensordot(dictionary.functions.T, _atoms(grid, rho), axes=(1, 0))
    scaled = np.abs(pairings) / dictionary.norms.reshape((-1,) + (1,) * (pairings.ndim - 1))
    return np.max(scaled, axis=0)

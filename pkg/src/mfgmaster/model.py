"""Discrete domain, probability measures and model data for the 1-D MFG system.

The domain is the unit interval with outward normal -1 at x=0 and +1 at x=1.
Grid functions live on the nodes ``x_j = j * dx``; every pairing between a
grid function and a measure density uses trapezoidal weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from .validation import ValidationError, check_grid_function

NORMAL = np.array([-1.0, 1.0])


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid on ``[t0, T] x [0, 1]``."""

    n_x: int
    n_t: int
    t0: float
    T: float
    alpha: float

    @property
    def dx(self) -> float:
        return 1.0 / (self.n_x - 1)

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / (self.n_t - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x)

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_t)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_x, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    @cached_property
    def time_weights(self) -> np.ndarray:
        w = np.full(self.n_t, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def pair(self, f, g) -> np.ndarray:
        """Trapezoidal pairing along the space axis (axis 0 for level arrays)."""
        f = np.asarray(f)
        g = np.asarray(g)
        w = self.weights.reshape((-1,) + (1,) * (max(f.ndim, g.ndim) - 1))
        return np.sum(f * g * w, axis=0)

    def from_level(self, k: int) -> "Grid":
        """Grid on ``[t_k, T]`` sharing the time step of this one."""
        if not 0 <= k < self.n_t - 1:
            raise ValidationError(f"start level {k} outside [0, {self.n_t - 2}]")
        return replace(self, n_t=self.n_t - k, t0=float(self.t[k]))

    def same_space(self, other: "Grid") -> bool:
        return self.n_x == other.n_x


def build_grid(n_x: int, n_t: int, t0: float = 0.0, T: float = 1.0,
               alpha: float = 0.5) -> Grid:
    if int(n_x) != n_x or n_x < 3:
        raise ValidationError(f"n_x must be an integer >= 3, got {n_x}")
    if int(n_t) != n_t or n_t < 2:
        raise ValidationError(f"n_t must be an integer >= 2, got {n_t}")
    if not t0 < T:
        raise ValidationError(f"need t0 < T, got t0={t0}, T={T}")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return Grid(int(n_x), int(n_t), float(t0), float(T), float(alpha))


# --------------------------------------------------------------------------
# Measures
# --------------------------------------------------------------------------

MASS_TOL = 1e-12


def make_measure(grid: Grid, density) -> np.ndarray:
    """Normalize a nonnegative density so that it integrates to one."""
    m = check_grid_function(density, grid.n_x, name="density").astype(float)
    if np.any(m < 0):
        raise ValidationError("a probability density must be nonnegative")
    mass = grid.pair(m, 1.0)
    if mass <= 0:
        raise ValidationError("density has zero mass")
    return m / mass


def check_measure(grid: Grid, m, tol: float = MASS_TOL) -> np.ndarray:
    m = check_grid_function(m, grid.n_x, name="measure")
    if np.any(m < 0):
        raise ValidationError(f"measure has negative entries (min {m.min():.3e})")
    mass = grid.pair(m, 1.0)
    if abs(mass - 1.0) > tol:
        raise ValidationError(f"measure has mass {mass!r}, expected 1")
    return m


def uniform_measure(grid: Grid) -> np.ndarray:
    return np.ones(grid.n_x)


def delta_measure(grid: Grid, index: int) -> np.ndarray:
    """Discrete Dirac mass at node ``index``: value ``1/w_j`` there."""
    if not 0 <= index < grid.n_x:
        raise ValidationError(f"node index {index} out of range")
    m = np.zeros(grid.n_x)
    m[index] = 1.0 / grid.weights[index]
    return m


def delta_at(grid: Grid, x: float) -> np.ndarray:
    return delta_measure(grid, int(round(x / grid.dx)))


def bump_measure(grid: Grid, center: float, width: float = 0.1) -> np.ndarray:
    return make_measure(grid, np.exp(-0.5 * ((grid.x - center) / width) ** 2))


def cosine_measure(grid: Grid, coeffs) -> np.ndarray:
    """Density ``1 + sum_n c_n cos(n pi x)`` (n starting at 1), normalized."""
    density = np.ones(grid.n_x)
    for n, c in enumerate(coeffs, start=1):
        density = density + c * np.cos(n * np.pi * grid.x)
    return make_measure(grid, density)


def random_smooth_measure(grid: Grid, rng: np.random.Generator,
                          n_modes: int = 4, amplitude: float = 0.8) -> np.ndarray:
    """Smooth positive density built from a few random cosine modes.

    Cosine densities satisfy the zero-flux condition for a drift that
    vanishes at the boundary, so these are the "compatible" initial data.
    """
    c = rng.uniform(-1.0, 1.0, n_modes) / np.arange(1, n_modes + 1) ** 2
    c *= amplitude / max(np.sum(np.abs(c)), 1e-300)
    return cosine_measure(grid, c)


def random_rough_measure(grid: Grid, rng: np.random.Generator,
                         n_pieces: int = 5) -> np.ndarray:
    """Piecewise-linear density with random nodal values (kinks, no Neumann)."""
    knots = np.linspace(0.0, 1.0, n_pieces + 1)
    vals = rng.uniform(0.2, 2.0, n_pieces + 1)
    return make_measure(grid, np.interp(grid.x, knots, vals))


# --------------------------------------------------------------------------
# Model components
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipticCoefficient:
    """Diffusion ``a(x)`` with ellipticity bounds and ``b_tilde = a'``."""

    a: np.ndarray
    lambda_bound: float
    mu_bound: float
    b_tilde: np.ndarray

    @classmethod
    def from_values(cls, grid: Grid, values, lambda_bound=None, mu_bound=None):
        a = check_grid_function(values, grid.n_x, name="a").astype(float)
        lam = float(a.min()) if lambda_bound is None else float(lambda_bound)
        mu = float(a.max()) if mu_bound is None else float(mu_bound)
        b_tilde = np.gradient(a, grid.dx, edge_order=2)
        return cls(a, lam, mu, b_tilde)

    @classmethod
    def constant(cls, grid: Grid, value: float = 1.0):
        return cls.from_values(grid, np.full(grid.n_x, float(value)))

    @classmethod
    def affine(cls, grid: Grid, a0: float, a1: float):
        return cls.from_values(grid, a0 + a1 * grid.x)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.a[1:] + self.a[:-1])


def _cos_series(x, coeffs):
    out = np.zeros_like(np.asarray(x, dtype=float))
    for n, c in enumerate(coeffs):
        out = out + c * np.cos(n * np.pi * x)
    return out


@dataclass(frozen=True)
class Hamiltonian:
    """Hamiltonian triple evaluated at node positions ``x`` and momenta ``p``."""

    H: Callable[[np.ndarray, np.ndarray], np.ndarray]
    H_p: Callable[[np.ndarray, np.ndarray], np.ndarray]
    H_pp: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lip_p: float
    hpp_upper: float
    name: str = "custom"
    potential: tuple = ()

    @classmethod
    def sqrt1p(cls, potential=()):
        """``H(x, p) = sqrt(1 + p^2) - 1 + V(x)`` with ``V`` a cosine series.

        A cosine series has ``V'(0) = V'(1) = 0``.
        """
        potential = tuple(float(v) for v in potential)

        def H(x, p):
            return np.sqrt(1.0 + p * p) - 1.0 + _cos_series(x, potential)

        def H_p(x, p):
            return p / np.sqrt(1.0 + p * p)

        def H_pp(x, p):
            return (1.0 + p * p) ** -1.5

        return cls(H, H_p, H_pp, lip_p=1.0, hpp_upper=1.0, name="sqrt1p",
                   potential=potential)

    @classmethod
    def zero(cls):
        z = lambda x, p: np.zeros(np.broadcast(x, p).shape)  # noqa: E731
        return cls(z, z, z, lip_p=0.0, hpp_upper=0.0, name="zero")

    @classmethod
    def quadratic(cls, scale: float = 0.5):
        """``H = scale * p^2``; not globally Lipschitz, offered for experiments."""
        return cls(lambda x, p: scale * p * p + 0.0 * x,
                   lambda x, p: 2.0 * scale * p + 0.0 * x,
                   lambda x, p: np.full(np.broadcast(x, p).shape, 2.0 * scale),
                   lip_p=np.inf, hpp_upper=2.0 * scale, name="quadratic")


@dataclass(frozen=True)
class CouplingKernel:
    """Measure-linear coupling ``F(x, m) = int k(x, y) dm(y)``.

    Row index is ``x``, column index is ``y``.  The flat derivative of the
    coupling is the kernel itself for every ``m``.
    """

    values: np.ndarray
    cos_coeffs: tuple | None = None

    @classmethod
    def from_cos_coeffs(cls, grid: Grid, coeffs) -> "CouplingKernel":
        coeffs = tuple(float(c) for c in coeffs)
        n = np.arange(len(coeffs))
        basis = np.cos(np.pi * np.outer(grid.x, n))  # (n_x, n_modes)
        k = (basis * np.asarray(coeffs)) @ basis.T
        return cls(k, coeffs)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "CouplingKernel":
        X, Y = np.meshgrid(grid.x, grid.x, indexing="ij")
        return cls(np.asarray(func(X, Y), dtype=float))

    @classmethod
    def zero(cls, grid: Grid) -> "CouplingKernel":
        return cls(np.zeros((grid.n_x, grid.n_x)), (0.0,))

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @cached_property
    def is_constant_in_y(self) -> bool:
        k = self.values
        return bool(np.all(k == k[:, :1]))


def coupling_value(kernel: CouplingKernel, grid: Grid, m) -> np.ndarray:
    """``F(x_i, m) = sum_j k(x_i, y_j) m_j w_j``.

    ``m`` may carry trailing batch axes, as in ``(n_x, B)``.
    """
    m = np.asarray(m, dtype=float)
    if kernel.n_x != grid.n_x or m.shape[0] != grid.n_x:
        raise ValidationError("kernel, grid and measure must share n_x")
    wm = m * grid.weights.reshape((-1,) + (1,) * (m.ndim - 1))
    return kernel.values @ wm


def coupling_flat_derivative(kernel: CouplingKernel, x_index: int,
                             y_index: int) -> float:
    n = kernel.n_x
    if not (0 <= x_index < n and 0 <= y_index < n):
        raise IndexError(f"({x_index}, {y_index}) outside a {n}x{n} kernel")
    return float(kernel.values[x_index, y_index])


@dataclass(frozen=True)
class MfgModel:
    grid: Grid
    a: EllipticCoefficient
    h: Hamiltonian
    f_coupling: CouplingKernel
    g_coupling: CouplingKernel
    spec: dict = field(default=None, compare=False, repr=False)

    def F(self, m) -> np.ndarray:
        return coupling_value(self.f_coupling, self.grid, m)

    def G(self, m) -> np.ndarray:
        return coupling_value(self.g_coupling, self.grid, m)

    @property
    def is_decoupled(self) -> bool:
        """True when neither coupling depends on the measure (unit mass)."""
        return self.f_coupling.is_constant_in_y and self.g_coupling.is_constant_in_y

    def with_grid(self, grid: Grid) -> "MfgModel":
        if not grid.same_space(self.grid):
            raise ValidationError("with_grid only changes the time axis")
        return replace(self, grid=grid)

    def from_level(self, k: int) -> "MfgModel":
        return self.with_grid(self.grid.from_level(k))

    def starting_at(self, t0: float) -> "MfgModel":
        """Model on ``[t0, T]``; ``t0`` must be a node of the time grid."""
        k = int(round((t0 - self.grid.t0) / self.grid.dt))
        if abs(self.grid.t0 + k * self.grid.dt - t0) > 1e-9 * max(1.0, abs(t0)):
            raise ValidationError(f"t0={t0} is not a time node of the grid")
        return self if k == 0 else self.from_level(k)


def reference_model(n_x: int = 101, n_t: int = 201, T: float = 1.0,
                    alpha: float = 0.5, c0: float = 0.5, c1: float = 0.3) -> MfgModel:
    """``a = 1``, ``H = sqrt(1+p^2) - 1`` and cosine kernels ``c0 + c1 cos cos``."""
    return model_from_spec({
        "n_x": n_x, "n_t": n_t, "t0": 0.0, "T": T, "alpha": alpha,
        "a": {"kind": "constant", "value": 1.0},
        "hamiltonian": {"kind": "sqrt1p", "potential": []},
        "F": {"cos_coeffs": [c0, c1]},
        "G": {"cos_coeffs": [c0, c1]},
    })


def _coefficient_from_spec(grid: Grid, spec: dict) -> EllipticCoefficient:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return EllipticCoefficient.constant(grid, spec.get("value", 1.0))
    if kind == "affine":
        return EllipticCoefficient.affine(grid, spec["a0"], spec["a1"])
    if kind == "table":
        values = np.asarray(spec["values"], dtype=float)
        if values.size != grid.n_x:
            # tabulated on a uniform grid of its own; resample
            values = np.interp(grid.x, np.linspace(0, 1, values.size), values)
        return EllipticCoefficient.from_values(grid, values)
    raise ValidationError(f"unknown diffusion kind {kind!r}")


def _hamiltonian_from_spec(spec: dict) -> Hamiltonian:
    kind = spec.get("kind", "sqrt1p")
    if kind == "sqrt1p":
        return Hamiltonian.sqrt1p(spec.get("potential", []))
    if kind == "zero":
        return Hamiltonian.zero()
    if kind == "quadratic":
        return Hamiltonian.quadratic(spec.get("scale", 0.5))
    raise ValidationError(f"unknown hamiltonian kind {kind!r}")


def model_from_spec(spec: dict) -> MfgModel:
    """Build a model from the JSON document layout used by the CLI."""
    try:
        grid = build_grid(spec["n_x"], spec["n_t"], spec.get("t0", 0.0),
                          spec.get("T", 1.0), spec.get("alpha", 0.5))
    except KeyError as exc:
        raise ValidationError(f"model spec is missing {exc}") from None
    a = _coefficient_from_spec(grid, spec.get("a", {"kind": "constant"}))
    h = _hamiltonian_from_spec(spec.get("hamiltonian", {"kind": "sqrt1p"}))
    f = CouplingKernel.from_cos_coeffs(grid, spec.get("F", {}).get("cos_coeffs", [0.0]))
    g = CouplingKernel.from_cos_coeffs(grid, spec.get("G", {}).get("cos_coeffs", [0.0]))
    return MfgModel(grid, a, h, f, g, spec=dict(spec))


def load_model(path) -> MfgModel:
    with open(path) as fh:
        return model_from_spec(json.load(fh))


# --------------------------------------------------------------------------
# Hypothesis checks
# --------------------------------------------------------------------------


def one_sided_boundary_derivative(f: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    """Second-order one-sided derivatives at both ends along ``axis``.

    Returns an array whose leading axis has length 2: ``[d/dx at 0, d/dx at 1]``.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    left = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx)
    right = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dx)
    return np.stack([left, right])


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class HypothesisReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value,
                 "tolerance": c.tolerance, "detail": c.detail}
                for c in self.checks
            ],
        }


def _zero_mean_family(grid: Grid, n_random: int, rng: np.random.Generator):
    """Random zero-mean signed measures plus low cosine modes, unit L1 mass."""
    family = [np.cos(n * np.pi * grid.x) for n in range(1, 9)]
    for _ in range(n_random):
        rho = rng.standard_normal(grid.n_x)
        family.append(rho - grid.pair(rho, 1.0))
    return [rho / grid.pair(np.abs(rho), 1.0) for rho in family]


def monotonicity_form(kernel: CouplingKernel, grid: Grid, rho) -> float:
    """Quadratic form ``sum_ij rho_i w_i k(x_i, y_j) rho_j w_j``."""
    wr = np.asarray(rho) * grid.weights
    return float(wr @ kernel.values @ wr)


def validate_hypotheses(model: MfgModel, n_random_pairs: int = 20,
                        seed: int = 0) -> HypothesisReport:
    """Check ellipticity, Hamiltonian bounds, kernel monotonicity and Neumann data."""
    grid = model.grid
    checks = []

    a = model.a
    ok = a.lambda_bound > 0 and np.all(a.a >= a.lambda_bound) and np.all(a.a <= a.mu_bound)
    checks.append(HypothesisCheck(
        "ellipticity", bool(ok), float(a.a.min()), a.lambda_bound,
        f"lambda={a.lambda_bound:g}, mu={a.mu_bound:g}, min a={a.a.min():g}"))

    h = model.h
    X, P = np.meshgrid(grid.x, np.linspace(-50.0, 50.0, 201), indexing="ij")
    hpp = h.H_pp(X, P)
    ok = bool(np.all(hpp > 0) and np.all(hpp <= h.hpp_upper))
    checks.append(HypothesisCheck(
        "hamiltonian_convexity", ok, float(hpp.min()), h.hpp_upper,
        f"H_pp in [{hpp.min():.3e}, {hpp.max():.3e}]"))

    dH = np.abs(np.diff(h.H(X, P), axis=1))
    dP = np.diff(P, axis=1)
    lip = float(np.max(dH / dP))
    checks.append(HypothesisCheck(
        "hamiltonian_lipschitz", lip <= h.lip_p * (1 + 1e-12), lip, h.lip_p))

    dp = 1e-3
    fd = (h.H(X, P + dp) - h.H(X, P - dp)) / (2 * dp)
    err = float(np.max(np.abs(fd - h.H_p(X, P))))
    tol = 1e-5 * max(1.0, h.hpp_upper)
    checks.append(HypothesisCheck("hamiltonian_derivative", err <= tol, err, tol))

    rng = np.random.default_rng(seed)
    family = _zero_mean_family(grid, n_random_pairs, rng)
    for label, kernel in (("F", model.f_coupling), ("G", model.g_coupling)):
        worst = min(monotonicity_form(kernel, grid, rho) for rho in family)
        checks.append(HypothesisCheck(
            f"monotonicity_{label}", worst >= -1e-12, worst, -1e-12,
            f"{len(family)} zero-mean test measures"))

    for label, kernel, axes in (("F", model.f_coupling, (1,)),
                                ("G", model.g_coupling, (1, 0))):
        tol = grid.dx ** 2 * max(1.0, float(np.max(np.abs(kernel.values))))
        for axis in axes:
            val = float(np.max(np.abs(one_sided_boundary_derivative(kernel.values, grid.dx, axis))))
            var = "y" if axis == 1 else "x"
            checks.append(HypothesisCheck(f"neumann_{label}_{var}", val <= tol, val, tol))

    return HypothesisReport(checks)

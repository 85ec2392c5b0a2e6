import numpy as np
import pytest

from mfgmaster.model import (
    CouplingKernel,
    EllipticCoefficient,
    Hamiltonian,
    MfgModel,
    build_grid,
    random_rough_measure,
    uniform_measure,
)
from mfgmaster.parabolic import (
    assemble_backward_operator,
    diffusion_bands,
    duality_defect,
    hjb_residual,
    linear_residual,
    solve_fokker_planck_forward,
    solve_hjb_backward,
    solve_linear_backward,
)
from mfgmaster.validation import ValidationError


def dense(ab):
    n = ab.shape[1]
    A = np.diag(ab[1])
    A[np.arange(n - 1), np.arange(1, n)] = ab[0, 1:]
    A[np.arange(1, n), np.arange(n - 1)] = ab[2, :-1]
    return A


def test_neumann_laplacian_stencil():
    g = build_grid(11, 5)
    L = dense(diffusion_bands(EllipticCoefficient.constant(g), g)) * g.dx ** 2
    assert L[3, 2:5].tolist() == pytest.approx([-1, 2, -1])
    assert L[0, :2].tolist() == pytest.approx([2, -2])
    assert L[-1, -2:].tolist() == pytest.approx([-2, 2])


def test_constants_annihilated_and_m_matrix(rng):
    g = build_grid(21, 11)
    a = EllipticCoefficient.affine(g, 1.0, 0.7)
    b = rng.standard_normal((11, 21)) * 5
    op = assemble_backward_operator(a, b, g)
    for n in range(10):
        np.testing.assert_allclose(op.apply_generator(n, np.ones(21)), 0.0, atol=1e-10)
        np.testing.assert_allclose(dense(op.steps[n]) @ np.ones(21), 1.0, atol=1e-12)
    assert op.is_m_matrix()


def test_positive_drift_uses_backward_difference():
    g = build_grid(11, 3)
    op = assemble_backward_operator(EllipticCoefficient.constant(g), np.ones(11), g)
    f = g.x ** 2
    expected = np.zeros(11)
    expected[1:-1] = (f[1:-1] - f[:-2]) / g.dx
    np.testing.assert_allclose(op.upwind_gradient(0, f), expected)
    assert op.is_m_matrix()


def test_upwind_transpose_is_transpose(rng):
    g = build_grid(15, 3)
    op = assemble_backward_operator(EllipticCoefficient.constant(g), rng.standard_normal(15), g)
    D = np.column_stack([op.upwind_gradient(0, e) for e in np.eye(15)])
    DT = np.column_stack([op.upwind_gradient_T(0, e) for e in np.eye(15)])
    np.testing.assert_allclose(DT, D.T)


def test_backward_examples(rng):
    g = build_grid(41, 41, 0.0, 0.5)
    a = EllipticCoefficient.constant(g)
    op = assemble_backward_operator(a, rng.standard_normal((41, 41)), g)
    np.testing.assert_allclose(solve_linear_backward(op, np.ones(41)), 1.0, atol=1e-13)
    op0 = assemble_backward_operator(a, None, g)
    phi = solve_linear_backward(op0, np.zeros(41), np.ones((41, 41)))
    np.testing.assert_allclose(phi, (g.T - g.t)[:, None] * np.ones(41), atol=1e-12)


def test_backward_scheme_residual(rng):
    g = build_grid(31, 21)
    op = assemble_backward_operator(EllipticCoefficient.affine(g, 1, 0.3), rng.standard_normal((21, 31)), g)
    psi = rng.standard_normal((21, 31))
    phi = solve_linear_backward(op, rng.standard_normal(31), psi)
    assert linear_residual(op, phi, psi).max() <= 1e-10


def test_backward_cosine_oracle():
    errs = []
    for nx, nt in ((21, 41), (41, 161), (81, 641)):
        g = build_grid(nx, nt)
        op = assemble_backward_operator(EllipticCoefficient.constant(g), None, g)
        c = np.cos(np.pi * g.x)
        phi = solve_linear_backward(op, c)
        errs.append(np.max(np.abs(phi - np.exp(-np.pi ** 2 * (g.T - g.t))[:, None] * c)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_comparison_principle(rng):
    g = build_grid(31, 31)
    op = assemble_backward_operator(EllipticCoefficient.affine(g, 1, -0.5), rng.standard_normal((31, 31)) * 3, g)
    xi = rng.uniform(-2, 3, 31)
    phi = solve_linear_backward(op, xi)
    assert phi.min() >= xi.min() - 1e-12 and phi.max() <= xi.max() + 1e-12


def test_forward_examples(rng):
    g = build_grid(41, 41)
    a = EllipticCoefficient.constant(g)
    op0 = assemble_backward_operator(a, None, g)
    np.testing.assert_allclose(solve_fokker_planck_forward(op0, uniform_measure(g)), 1.0, atol=1e-13)
    op = assemble_backward_operator(EllipticCoefficient.affine(g, 1, 0.5), rng.standard_normal((41, 41)) * 4, g)
    m0 = random_rough_measure(g, rng)
    mu = solve_fokker_planck_forward(op, m0)
    assert np.max(np.abs(g.pair(mu.T, 1.0) - 1.0)) <= 1e-12
    assert mu.min() >= 0.0


def test_forward_cosine_oracle():
    errs = []
    for nx, nt in ((21, 41), (41, 161), (81, 641)):
        g = build_grid(nx, nt)
        op = assemble_backward_operator(EllipticCoefficient.constant(g), None, g)
        c = np.cos(np.pi * g.x)
        mu = solve_fokker_planck_forward(op, 1 + 0.5 * c)
        errs.append(np.max(np.abs(mu - (1 + 0.5 * np.exp(-np.pi ** 2 * g.t)[:, None] * c))))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_forward_batch_matches_columns(rng):
    g = build_grid(21, 11)
    op = assemble_backward_operator(EllipticCoefficient.constant(g), rng.standard_normal((11, 21)), g)
    mu0 = rng.standard_normal((21, 3))
    c = rng.standard_normal((11, 21, 3))
    batch = solve_fokker_planck_forward(op, mu0, c)
    for j in range(3):
        np.testing.assert_allclose(batch[..., j], solve_fokker_planck_forward(op, mu0[:, j], c[..., j]),
                                   atol=1e-13)


def test_duality_identity(rng):
    g = build_grid(41, 41)
    worst = 0.0
    for _ in range(10):
        op = assemble_backward_operator(EllipticCoefficient.affine(g, 1.0, rng.uniform(-0.5, 0.5)),
                                        rng.standard_normal((41, 41)), g)
        worst = max(worst, duality_defect(op, rng.standard_normal(41), rng.standard_normal((41, 41)),
                                          rng.standard_normal(41), rng.standard_normal((41, 41))))
    assert worst <= 1e-10


def _model(g, h=None, f=None, gk=None):
    return MfgModel(g, EllipticCoefficient.constant(g), h or Hamiltonian.sqrt1p(),
                    f or CouplingKernel.zero(g), gk or CouplingKernel.zero(g))


def test_hjb_constant_terminal():
    g = build_grid(21, 21)
    u = solve_hjb_backward(_model(g), np.ones((21, 21)), np.full(21, 0.7))
    np.testing.assert_allclose(u, 0.7, atol=1e-13)


def test_hjb_zero_hamiltonian_matches_linear():
    g = build_grid(31, 41)
    m = _model(g, h=Hamiltonian.zero())
    xi = np.cos(2 * np.pi * g.x)
    u = solve_hjb_backward(m, np.ones((41, 31)), xi)
    phi = solve_linear_backward(assemble_backward_operator(m.a, None, g), xi)
    np.testing.assert_allclose(u, phi, atol=1e-14)


def test_hjb_small_terminal_linearizes():
    g = build_grid(41, 81)
    m = _model(g)
    lin = solve_linear_backward(assemble_backward_operator(m.a, None, g), np.cos(np.pi * g.x))
    diffs = []
    for eps in (1e-2, 1e-3):
        u = solve_hjb_backward(m, np.ones((81, 41)), eps * np.cos(np.pi * g.x))
        diffs.append(np.max(np.abs(u - eps * lin)))
    # the deviation is quadratic in eps
    assert diffs[1] <= diffs[0] / 50
    assert diffs[1] <= 1e-5


def test_hjb_residual_and_rejection():
    g = build_grid(21, 21)
    m = _model(g, f=CouplingKernel.from_cos_coeffs(g, [0.5, 0.3]))
    path = np.tile(uniform_measure(g), (21, 1))
    u = solve_hjb_backward(m, path, np.cos(np.pi * g.x))
    assert hjb_residual(m, u, path).max() <= 1e-12
    with pytest.raises(ValidationError):
        solve_hjb_backward(m, path, g.x.copy())

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgmaster.model import (
    CouplingKernel,
    EllipticCoefficient,
    Hamiltonian,
    MfgModel,
    build_grid,
    check_measure,
    coupling_flat_derivative,
    coupling_value,
    delta_measure,
    load_model,
    make_measure,
    model_from_spec,
    monotonicity_form,
    one_sided_boundary_derivative,
    random_rough_measure,
    random_smooth_measure,
    reference_model,
    uniform_measure,
    validate_hypotheses,
)
from mfgmaster.validation import ValidationError


def test_build_grid_small():
    g = build_grid(3, 2, 0.0, 1.0, 0.5)
    assert g.dx == 0.5 and g.dt == 1.0


def test_build_grid_reference_steps():
    g = build_grid(101, 201, 0.0, 1.0, 0.5)
    assert g.dx == pytest.approx(0.01, abs=1e-15)
    assert g.dt == pytest.approx(0.005, abs=1e-15)
    assert g.x[0] == 0.0 and g.x[-1] == 1.0
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert g.weights[0] == g.weights[-1] == g.dx / 2


@pytest.mark.parametrize("args", [(2, 5), (5, 1), (5, 5, 1.0, 1.0), (5, 5, 0.0, 1.0, 1.0),
                                  (5, 5, 0.0, 1.0, 0.0)])
def test_build_grid_rejects_degenerate(args):
    with pytest.raises(ValidationError):
        build_grid(*args)


def test_subgrid_shares_time_step():
    g = build_grid(11, 21)
    s = g.from_level(5)
    assert s.n_t == 16 and s.dt == pytest.approx(g.dt) and s.t0 == pytest.approx(g.t[5])


def test_measures_are_probability_measures(rng):
    g = build_grid(51, 3)
    for m in (uniform_measure(g), delta_measure(g, 0), delta_measure(g, 17),
              random_smooth_measure(g, rng), random_rough_measure(g, rng)):
        check_measure(g, m)
    with pytest.raises(ValidationError):
        make_measure(g, -np.ones(51))
    with pytest.raises(ValidationError):
        check_measure(g, 2 * uniform_measure(g))


def test_b_tilde_exact_for_affine():
    g = build_grid(21, 3)
    a = EllipticCoefficient.affine(g, 1.0, 0.5)
    np.testing.assert_allclose(a.b_tilde, 0.5, atol=1e-12)


def test_coupling_value_examples():
    g = build_grid(101, 3)
    one = CouplingKernel.from_function(g, lambda X, Y: np.ones_like(X))
    np.testing.assert_allclose(coupling_value(one, g, random_smooth_measure(g, np.random.default_rng(0))), 1.0,
                               atol=1e-13)
    cc = CouplingKernel.from_cos_coeffs(g, [0.0, 1.0])
    np.testing.assert_allclose(coupling_value(cc, g, uniform_measure(g)), 0.0, atol=1e-13)
    np.testing.assert_allclose(coupling_value(cc, g, delta_measure(g, 30)), cc.values[:, 30], atol=1e-13)


def test_coupling_value_grid_mismatch():
    g = build_grid(11, 3)
    k = CouplingKernel.zero(g)
    with pytest.raises(ValidationError):
        coupling_value(k, build_grid(12, 3), np.ones(12))


def test_flat_derivative_examples():
    g = build_grid(101, 3)
    one = CouplingKernel.from_function(g, lambda X, Y: np.ones_like(X))
    assert coupling_flat_derivative(one, 3, 7) == 1.0
    k = CouplingKernel.from_cos_coeffs(g, [0.5, 0.3, 0.1])
    assert coupling_flat_derivative(k, 4, 9) == coupling_flat_derivative(k, 9, 4)
    cos = CouplingKernel.from_function(g, lambda X, Y: np.cos(np.pi * Y))
    assert abs(coupling_flat_derivative(cos, 0, 1) - coupling_flat_derivative(cos, 0, 0)) <= 10 * g.dx ** 2
    with pytest.raises(IndexError):
        coupling_flat_derivative(k, 0, 101)


def test_reference_model_passes_hypotheses():
    report = validate_hypotheses(reference_model(51, 11))
    assert report.passed, report.to_dict()


def test_negative_kernel_fails_monotonicity():
    m = reference_model(51, 11)
    bad = CouplingKernel.from_function(m.grid, lambda X, Y: -np.cos(np.pi * X) * np.cos(np.pi * Y))
    report = validate_hypotheses(MfgModel(m.grid, m.a, m.h, bad, m.g_coupling))
    assert not report.passed
    assert not report["monotonicity_F"].passed
    assert report["monotonicity_G"].passed
    rho = np.cos(np.pi * m.grid.x)
    expected = -m.grid.pair(rho, rho) ** 2
    assert monotonicity_form(bad, m.grid, rho) == pytest.approx(expected, rel=1e-12)


def test_zero_diffusion_fails_ellipticity():
    m = reference_model(21, 11)
    a0 = EllipticCoefficient.from_values(m.grid, np.zeros(21))
    report = validate_hypotheses(MfgModel(m.grid, a0, m.h, m.f_coupling, m.g_coupling))
    assert not report["ellipticity"].passed and not report.passed


def test_non_neumann_kernel_detected():
    m = reference_model(41, 11)
    k = CouplingKernel.from_function(m.grid, lambda X, Y: X * Y)
    report = validate_hypotheses(MfgModel(m.grid, m.a, m.h, m.f_coupling, k))
    assert not report["neumann_G_y"].passed and not report["neumann_G_x"].passed


def test_hamiltonian_bounds():
    h = Hamiltonian.sqrt1p([0.0, 0.2])
    p = np.linspace(-30, 30, 101)
    assert np.all(h.H_pp(0.3, p) > 0) and np.all(h.H_pp(0.3, p) <= h.hpp_upper)
    assert np.all(np.abs(h.H_p(0.3, p)) <= h.lip_p)


def test_one_sided_derivative_is_second_order():
    errs = []
    for n in (21, 41, 81):
        x = np.linspace(0, 1, n)
        d = one_sided_boundary_derivative(np.sin(x), 1 / (n - 1))
        errs.append(abs(d[0] - 1.0))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_model_from_json(tmp_path):
    spec = {"n_x": 21, "n_t": 11, "t0": 0.0, "T": 0.5, "alpha": 0.3,
            "a": {"kind": "table", "values": [1.0, 1.5, 1.0]},
            "hamiltonian": {"kind": "sqrt1p", "potential": [0.0, 0.1]},
            "F": {"cos_coeffs": [0.2, 0.1]}, "G": {"cos_coeffs": [0.0, 0.4]}}
    path = tmp_path / "model.json"
    path.write_text(json.dumps(spec))
    m = load_model(path)
    assert m.grid.n_x == 21 and m.grid.T == 0.5
    assert m.a.a[10] == pytest.approx(1.5)
    assert m.a.lambda_bound == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        model_from_spec({**spec, "a": {"kind": "spline"}})
    with pytest.raises(ValidationError):
        model_from_spec({**spec, "hamiltonian": {"kind": "cubic"}})


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=8), st.integers(0, 2 ** 31 - 1))
def test_nonnegative_cosine_kernels_are_monotone(coeffs, seed):
    g = build_grid(41, 3)
    k = CouplingKernel.from_cos_coeffs(g, coeffs)
    rho = np.random.default_rng(seed).standard_normal(41)
    rho -= g.pair(rho, 1.0)
    rho /= g.pair(np.abs(rho), 1.0)
    assert monotonicity_form(k, g, rho) >= -1e-12

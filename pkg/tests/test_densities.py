import math

import numpy as np
import pytest

from ttde.densities import (DensityField, FactorizedDensity, GridSpec,
                            default_grid, integrate, make_test_density,
                            mix_densities, validate_class_membership)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("rule", ["trapezoid", "gauss"])
def test_weights_sum_to_volume(dim, rule):
    if rule == "trapezoid":
        grid = GridSpec.trapezoid(dim, 33)
    else:
        grid = GridSpec.gauss(dim, panels=4, order=8)
    assert abs(grid.weights().sum() - 1.0) < 1e-12


def test_integrate_constant_is_exact():
    grid = GridSpec.trapezoid(2, 17)
    assert integrate(lambda x: np.ones(x.shape[0]), grid) == pytest.approx(1.0, abs=1e-14)


def test_integrate_linear_d1():
    grid = GridSpec.trapezoid(1, 257)
    val = integrate(lambda x: x[:, 0], grid)
    assert abs(val - 0.5) < 1e-12


def test_integrate_sine_product_d2():
    # closed form: int sin(pi x) sin(pi y) = (2/pi)^2
    closed = 4.0 / math.pi**2
    grid = GridSpec.gauss(2, panels=16, order=8)
    f = lambda x: np.sin(math.pi * x[:, 0]) * np.sin(math.pi * x[:, 1])
    val = integrate(f, grid)
    assert abs(val - closed) < 1e-8
    # refined-grid oracle agrees with the closed form
    refined = integrate(f, GridSpec.trapezoid(2, 1025))
    assert abs(refined - closed) < 1e-5


def test_integrate_rejects_nonfinite():
    grid = GridSpec.trapezoid(1, 9)

    def bad(x):
        out = np.ones(x.shape[0])
        out[x[:, 0] > 0.6] = np.inf
        return out

    with pytest.raises(ValueError, match="not finite at node"):
        integrate(bad, grid)


def test_trapezoid_convergence_order():
    # empirical order on a C^2 integrand should be ~2 (>= 1.9)
    exact = math.e - 1.0
    f = lambda x: np.exp(x[:, 0])
    e1 = abs(integrate(f, GridSpec.trapezoid(1, 65)) - exact)
    e2 = abs(integrate(f, GridSpec.trapezoid(1, 129)) - exact)
    order = math.log2(e1 / e2)
    assert order >= 1.9


def test_uniform_density():
    p = make_test_density("uniform", 2)
    x = np.random.default_rng(0).random((50, 2))
    assert np.all(p(x) == 1.0)
    rep = validate_class_membership(p, default_grid(2))
    assert rep.ok and rep.min == 1.0 and rep.max == 1.0


def test_linear_tilt_d1_closed_form():
    p = make_test_density("linear-tilt", 1, a=0.5)
    x = np.linspace(0.0, 1.0, 11)[:, None]
    np.testing.assert_allclose(p(x), x[:, 0] + 0.5, rtol=0, atol=1e-15)
    rep = validate_class_membership(p, default_grid(1))
    assert rep.ok
    assert rep.min == pytest.approx(0.5, abs=1e-12)
    assert rep.max == pytest.approx(1.5, abs=1e-12)
    assert rep.integral == pytest.approx(1.0, abs=1e-12)


def test_nonproduct_coupling_normalized():
    p = make_test_density("nonproduct-coupling", 2, strength=0.5)
    val = integrate(p.pdf, GridSpec.gauss(2, panels=8, order=8))
    assert abs(val - 1.0) < 1e-10
    assert not isinstance(p, FactorizedDensity)


@pytest.mark.parametrize("dim,tol", [(1, 1e-8), (2, 1e-5), (3, 1e-5)])
def test_family_integrates_to_one_on_default_grids(dim, tol):
    kinds = [("uniform", {}), ("linear-tilt", {"a": 0.5}),
             ("cosine-bump", {"amplitude": 0.5, "frequency": 1}),
             ("nonproduct-coupling", {"strength": 0.5})]
    for kind, params in kinds:
        p = make_test_density(kind, dim, **params)
        rep = validate_class_membership(p, default_grid(dim), tolerance=tol)
        assert rep.integral_ok, (kind, dim, rep.integral)


def test_construction_errors():
    with pytest.raises(ValueError):
        make_test_density("linear-tilt", 1, a=1.2)
    with pytest.raises(ValueError):
        make_test_density("cosine-bump", 1, amplitude=1.0)
    with pytest.raises(ValueError):
        make_test_density("nonproduct-coupling", 2, strength=1.0)
    with pytest.raises(ValueError):
        make_test_density("no-such-kind", 1)
    with pytest.raises(ValueError):
        make_test_density("linear-tilt", 1, a=0.5, bogus=1)


def test_unnormalized_density_is_flagged():
    p = DensityField(dim=1, pdf=lambda x: np.full(x.shape[0], 2.0),
                     lower=2.0, upper=2.0)
    rep = validate_class_membership(p, default_grid(1))
    assert rep.integral == pytest.approx(2.0, abs=1e-12)
    assert not rep.integral_ok and not rep.ok
    assert rep.violations()


def test_product_of_marginals():
    p = make_test_density("product-of-marginals", 2, marginals=[
        {"kind": "linear-tilt", "a": 0.5},
        {"kind": "cosine-bump", "amplitude": 0.25, "frequency": 2},
    ])
    assert isinstance(p, FactorizedDensity)
    x = np.random.default_rng(1).random((10, 2))
    expected = (x[:, 0] + 0.5) * (1 + 0.25 * np.cos(4 * math.pi * x[:, 1]))
    np.testing.assert_allclose(p(x), expected, rtol=1e-14)


def test_factorized_eval_is_exact_product():
    p = make_test_density("linear-tilt", 3, a=0.4)
    x = np.random.default_rng(2).random((1000, 3))
    manual = p.marginals[0].pdf(x[:, 0:1])
    for k in range(1, 3):
        manual = manual * p.marginals[k].pdf(x[:, k:k + 1])
    assert np.array_equal(p(x), manual)


def test_mix_densities():
    p = make_test_density("uniform", 2)
    q = make_test_density("nonproduct-coupling", 2, strength=0.5)
    m = mix_densities(p, q, 0.25)
    x = np.random.default_rng(3).random((20, 2))
    np.testing.assert_allclose(m(x), 0.75 * p(x) + 0.25 * q(x), rtol=1e-15)
    assert m.lower == pytest.approx(0.75 * 1.0 + 0.25 * 0.5)
    with pytest.raises(ValueError):
        mix_densities(p, q, 1.5)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec.trapezoid(0, 9)
    with pytest.raises(ValueError):
        GridSpec.trapezoid(1, 1)
    with pytest.raises(ValueError):
        GridSpec(dim=1, nodes_per_axis=5, rule="simpson")
    with pytest.raises(ValueError, match="budget"):
        GridSpec.trapezoid(3, 1025)

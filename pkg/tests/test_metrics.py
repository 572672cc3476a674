import math

import numpy as np
import pytest

from ttde.densities import GridSpec, default_grid, make_test_density
from ttde.metrics import (c1diag_map_distance, h1diag_map_distance, hellinger,
                          kl_divergence, l2_distance, rate_fit, tv_distance)
from ttde.trimap import IdentityMap, TriangularMap

UNIFORM = make_test_density("uniform", 1)
TILT = make_test_density("linear-tilt", 1, a=0.5)
GRID = default_grid(1)


class SquareMap(TriangularMap):
    """S(x) = x^2 on [0,1], for closed-form comparisons."""

    dim = 1

    def eval_component(self, k, x):
        return np.asarray(x)[:, 0] ** 2

    def diag_partial(self, k, x):
        return 2.0 * np.asarray(x)[:, 0]


def test_hellinger_identity_and_symmetry():
    assert hellinger(UNIFORM, UNIFORM, GRID) == 0.0
    a = hellinger(UNIFORM, TILT, GRID)
    b = hellinger(TILT, UNIFORM, GRID)
    assert a == pytest.approx(b, rel=1e-14)
    assert 0.0 < a <= math.sqrt(2.0)


def test_hellinger_uniform_vs_2x():
    # h^2 = int (1 - sqrt(2x))^2 dx = 2 - 4 sqrt(2)/3
    closed_sq = 2.0 - 4.0 * math.sqrt(2.0) / 3.0
    q = lambda pts: 2.0 * pts[:, 0]
    # sqrt-kink at 0 limits the trapezoid rule to ~1e-5 here
    h = hellinger(UNIFORM, q, GridSpec.trapezoid(1, 4097))
    assert h == pytest.approx(math.sqrt(closed_sq), abs=1e-5)
    # refined-grid oracle: independent trapezoid of the closed integrand
    t = np.linspace(0.0, 1.0, 2_000_001)
    oracle = np.trapezoid((1.0 - np.sqrt(2.0 * t)) ** 2, t)
    assert oracle == pytest.approx(closed_sq, abs=1e-6)


def test_hellinger_grid_stability():
    a = hellinger(UNIFORM, TILT, GridSpec.trapezoid(1, 513))
    b = hellinger(UNIFORM, TILT, GridSpec.trapezoid(1, 1025))
    assert abs(a - b) <= 1e-6
    # smooth integrand: the Gauss rule pins the value to 1e-8 under refinement
    ga = hellinger(UNIFORM, TILT, GridSpec.gauss(1, panels=16, order=8))
    gb = hellinger(UNIFORM, TILT, GridSpec.gauss(1, panels=32, order=8))
    assert abs(ga - gb) <= 1e-8


def test_hellinger_rejects_negative():
    bad = lambda pts: pts[:, 0] - 0.5
    with pytest.raises(ValueError, match="nonnegative"):
        hellinger(UNIFORM, bad, GRID)


def test_kl_uniform_vs_tilt():
    # KL(uniform || 1 + a(2x-1)) = -int log(x + 1/2) dx for a = 1/2;
    # the antiderivative gives 1 - (3/2) ln(3/2) - (1/2) ln 2.
    closed = 1.0 - 1.5 * math.log(1.5) - 0.5 * math.log(2.0)
    t = np.linspace(0.0, 1.0, 2_000_001)
    oracle = -np.trapezoid(np.log(t + 0.5), t)
    assert oracle == pytest.approx(closed, abs=1e-9)
    val = kl_divergence(UNIFORM, TILT, GRID)
    assert val == pytest.approx(closed, abs=2e-6)
    exact_rule = kl_divergence(UNIFORM, TILT, GridSpec.gauss(1, panels=16, order=8))
    assert exact_rule == pytest.approx(closed, abs=1e-12)
    assert kl_divergence(TILT, TILT, GRID) == pytest.approx(0.0, abs=1e-15)


def test_kl_floor_guard():
    tiny = lambda pts: np.full(pts.shape[0], 1e-15)
    with pytest.raises(ValueError, match="KL undefined"):
        kl_divergence(UNIFORM, tiny, GRID)


def test_l2_and_tv_closed_forms():
    assert l2_distance(UNIFORM, UNIFORM, GRID) == 0.0
    assert tv_distance(UNIFORM, UNIFORM, GRID) == 0.0
    assert l2_distance(UNIFORM, TILT, GRID) == pytest.approx(1.0 / math.sqrt(12.0), abs=2e-6)
    assert tv_distance(UNIFORM, TILT, GRID) == pytest.approx(0.25, abs=1e-12)
    g = GridSpec.gauss(1, panels=16, order=8)
    assert l2_distance(UNIFORM, TILT, g) == pytest.approx(1.0 / math.sqrt(12.0), abs=1e-14)


def _random_density_pair(rng):
    a, b = rng.uniform(-0.6, 0.6, size=2)
    f1, f2 = rng.integers(1, 4, size=2)
    p = make_test_density("cosine-bump", 1, amplitude=abs(a) + 0.05, frequency=int(f1))
    q = make_test_density("cosine-bump", 1, amplitude=abs(b) + 0.05, frequency=int(f2))
    return p, q


def test_hellinger_squared_below_kl_and_tv():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p, q = _random_density_pair(rng)
        h2 = hellinger(p, q, GRID) ** 2
        assert h2 <= kl_divergence(p, q, GRID) + 1e-10
        assert h2 <= tv_distance(p, q, GRID) + 1e-10


def test_h1diag_identity_and_closed_form():
    ident = IdentityMap(1)
    assert h1diag_map_distance(ident, ident, GRID) == 0.0
    # id vs x^2: (int (x - x^2)^2 + int (1 - 2x)^2)^(1/2) = sqrt(1/30 + 1/3)
    closed = math.sqrt(1.0 / 30.0 + 1.0 / 3.0)
    val = h1diag_map_distance(ident, SquareMap(), GRID)
    assert val == pytest.approx(closed, abs=1e-5)
    exact_rule = h1diag_map_distance(ident, SquareMap(), GridSpec.gauss(1, panels=8, order=8))
    assert exact_rule == pytest.approx(closed, abs=1e-13)


class HalfSquareMap(TriangularMap):
    """S(x) = x^2/2 + x/2, the increasing rearrangement of a gentle tilt."""

    dim = 1

    def eval_component(self, k, x):
        t = np.asarray(x)[:, 0]
        return 0.5 * t * t + 0.5 * t

    def diag_partial(self, k, x):
        return np.asarray(x)[:, 0] + 0.5


def test_h1diag_grid_refinement():
    val1 = h1diag_map_distance(IdentityMap(1), HalfSquareMap(), GridSpec.trapezoid(1, 513))
    val2 = h1diag_map_distance(IdentityMap(1), HalfSquareMap(), GridSpec.trapezoid(1, 1025))
    assert abs(val1 - val2) <= 1e-6


def test_c1diag_distance_closed_form():
    # sup|x - x^2| + sup|1 - 2x| = 1/4 + 1
    val = c1diag_map_distance(IdentityMap(1), SquareMap(), GRID)
    assert val == pytest.approx(1.25, abs=1e-6)
    assert c1diag_map_distance(SquareMap(), SquareMap(), GRID) == 0.0


def test_rate_fit_exact_power_law():
    ns = [100, 200, 400, 800]
    fitres = rate_fit([(n, n**-0.4) for n in ns])
    assert fitres["slope"] == pytest.approx(-0.4, abs=1e-12)
    assert fitres["r2"] == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_repeated_n():
    out = rate_fit([(100, 1.0), (100, 1.1), (400, 0.5)])
    assert np.isfinite(out["slope"])


def test_rate_fit_noisy_power_law():
    rng = np.random.default_rng(42)
    ns = np.unique(np.geomspace(100, 100000, 12).astype(int))
    errs = ns**-0.4 * np.exp(0.02 * rng.standard_normal(ns.shape[0]))
    out = rate_fit(list(zip(ns, errs)))
    assert abs(out["slope"] - (-0.4)) <= 0.02


def test_rate_fit_input_errors():
    with pytest.raises(ValueError):
        rate_fit([(10, 1.0), (20, 0.5)])
    with pytest.raises(ValueError):
        rate_fit([(10, 1.0), (20, 0.5), (40, 0.0)])

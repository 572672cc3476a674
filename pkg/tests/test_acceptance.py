"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one PASS/FAIL line (visible with pytest -s).  The two rate
studies are desk-scale reproductions of the minimax exponent alpha/(2a+d);
their summaries are shared across the criteria that read different metrics
of the same runs.
"""

import math

import numpy as np
import pytest

from ttde.densities import GridSpec, default_grid, make_test_density, mix_densities
from ttde.estimator import FitConfig, gradient, objective
from ttde.experiment import ExperimentConfig, run_oracle_check, run_rate_study
from ttde.kr import build_kr, pullback_density, sample_target
from ttde.maps import LinkFunction, RationalTriangularMap, Theta
from ttde.metrics import (c1diag_map_distance, c1diag_norm,
                          h1diag_map_distance, l2_distance)
from ttde.trimap import invert_triangular
from ttde.wavelets import WaveletBasis

LINK = LinkFunction.logistic()


def _criterion(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def random_theta(basis, alpha, rng, scale=0.5):
    return Theta(basis, alpha, [scale * rng.standard_normal(basis.size(k))
                                for k in range(1, basis.dim + 1)])


@pytest.fixture(scope="module")
def study_d1(tmp_path_factory):
    out = tmp_path_factory.mktemp("d1")
    cfg = ExperimentConfig.from_dict(dict(
        density={"kind": "linear-tilt", "a": 0.5, "dim": 1},
        alpha=2, dim=1, n_grid=[500, 2000, 8000, 32000], replicates=10,
        seed=20240817, basis="daubechies4", output_dir=str(out),
    ))
    rows, summary = run_rate_study(cfg, csv_path=out / "rates.csv",
                                   summary_path=out / "summary.json")
    return cfg, rows, summary


@pytest.fixture(scope="module")
def study_d2(tmp_path_factory):
    out = tmp_path_factory.mktemp("d2")
    cfg = ExperimentConfig.from_dict(dict(
        density={"kind": "nonproduct-coupling", "strength": 0.5, "dim": 2},
        alpha=2, dim=2, n_grid=[500, 2000, 8000], replicates=10,
        seed=20240817, basis="daubechies4", gradient_tolerance=1e-5,
        output_dir=str(out),
    ))
    rows, summary = run_rate_study(cfg, csv_path=out / "rates.csv",
                                   summary_path=out / "summary.json")
    return cfg, rows, summary


def test_rate_reproduction_d1(study_d1):
    cfg, rows, summary = study_d1
    entry = summary["metrics"]["hellinger"]
    slope = entry["fit"]["slope"]
    medians = [entry["medians"][str(n)] for n in cfg.n_grid]
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    _criterion(
        "rate-d1-alpha2", -0.55 <= slope <= -0.25 and decreasing,
        f"hellinger slope {slope:+.4f} in [-0.55,-0.25], medians "
        f"{['%.4f' % m for m in medians]} strictly decreasing={decreasing}, "
        f"theory {entry['theoretical_slope']:+.3f}")


def test_rate_reproduction_d2(study_d2):
    cfg, rows, summary = study_d2
    entry = summary["metrics"]["hellinger"]
    slope = entry["fit"]["slope"]
    medians = [entry["medians"][str(n)] for n in cfg.n_grid]
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    _criterion(
        "rate-d2-alpha2", -0.48 <= slope <= -0.18 and decreasing,
        f"hellinger slope {slope:+.4f} in [-0.48,-0.18], medians "
        f"{['%.4f' % m for m in medians]}, theory {entry['theoretical_slope']:+.3f}")


def test_kl_tracks_squared_hellinger(study_d1):
    cfg, rows, summary = study_d1
    kl_slope = summary["metrics"]["kl"]["fit"]["slope"]
    h_slope = summary["metrics"]["hellinger"]["fit"]["slope"]
    gap = abs(kl_slope - 2.0 * h_slope)
    _criterion("kl-tracks-squared-hellinger", gap <= 0.2,
               f"kl slope {kl_slope:+.4f} vs 2x hellinger {2 * h_slope:+.4f}, "
               f"gap {gap:.4f} <= 0.2")


def test_map_recovery_tracks_hellinger(study_d1):
    cfg, rows, summary = study_d1
    h1_slope = summary["metrics"]["h1diag"]["fit"]["slope"]
    h_slope = summary["metrics"]["hellinger"]["fit"]["slope"]
    gap = abs(h1_slope - h_slope)
    _criterion("map-recovery", h1_slope < 0.0 and gap <= 0.2,
               f"h1diag slope {h1_slope:+.4f} negative, within {gap:.4f} <= 0.2 "
               f"of hellinger slope {h_slope:+.4f}")


def test_oracle_correctness():
    worst_d1 = 0.0
    for kind, params in (("linear-tilt", {"a": 0.5}),
                         ("cosine-bump", {"amplitude": 0.5, "frequency": 1})):
        cfg = ExperimentConfig.from_dict(dict(
            density=dict(kind=kind, dim=1, **params), alpha=2, dim=1,
            n_grid=[100], replicates=1, seed=1))
        rep = run_oracle_check(cfg)
        worst_d1 = max(worst_d1, rep["pushforward_sup_error"],
                       rep["roundtrip_residual"])
    cfg2 = ExperimentConfig.from_dict(dict(
        density={"kind": "nonproduct-coupling", "strength": 0.5, "dim": 2},
        alpha=2, dim=2, n_grid=[100], replicates=1, seed=1))
    rep2 = run_oracle_check(cfg2)
    ok = (worst_d1 <= 1e-8 and rep2["pushforward_sup_error"] <= 5e-4
          and rep2["roundtrip_residual"] <= 1e-8)
    _criterion("oracle-correctness", ok,
               f"d=1 worst residual {worst_d1:.2e} <= 1e-8, d=2 pushforward "
               f"{rep2['pushforward_sup_error']:.2e} <= 5e-4, d=2 roundtrip "
               f"{rep2['roundtrip_residual']:.2e} <= 1e-8")


def test_gradient_correctness():
    worst = 0.0
    for dim in (1, 2, 3):
        rng = np.random.default_rng(100 + dim)
        basis = WaveletBasis("haar", 1, dim)
        eta = make_test_density("linear-tilt", dim, a=0.3)
        cfg = FitConfig(alpha=2, lam=0.25, J=1, link=LINK)
        for _ in range(20):
            theta = random_theta(basis, 2, rng)
            data = rng.random((25, dim))
            g = gradient(theta, data, eta, cfg).to_vector()
            vec = theta.to_vector()
            h = 1e-6
            for i in range(vec.shape[0]):
                vp, vm = vec.copy(), vec.copy()
                vp[i] += h
                vm[i] -= h
                fd = (objective(Theta.from_vector(basis, 2, vp), data, eta, cfg)
                      - objective(Theta.from_vector(basis, 2, vm), data, eta, cfg)) / (2 * h)
                worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    _criterion("gradient-correctness", worst <= 1e-5,
               f"max relative error {worst:.2e} <= 1e-5 over d in (1,2,3), "
               f"haar, 20 instances each")


def test_structural_bounds():
    rng = np.random.default_rng(7)
    basis = WaveletBasis("haar", 2, 2)
    lo = LINK.kmin / (2.0 * LINK.kmax)
    hi = 2.0 * LINK.kmax / LINK.kmin
    probe = rng.random((200, 2))
    dmin, dmax = math.inf, 0.0
    for _ in range(1000):
        s = RationalTriangularMap.from_theta(random_theta(basis, 2, rng, 1.2), LINK)
        for k in (1, 2):
            d = s.diag_partial(k, probe)
            dmin = min(dmin, float(d.min()))
            dmax = max(dmax, float(d.max()))
    bounds_ok = dmin >= lo and dmax <= hi

    ident = RationalTriangularMap.from_theta(Theta.zeros(basis, 2), LINK)
    qnodes = default_grid(2).nodes()
    identity_ok = all(
        np.array_equal(ident.eval_component(k, qnodes), qnodes[:, k - 1])
        for k in (1, 2))

    phi_prime_max = (LINK.kmax - LINK.kmin) / 4.0
    m_const = 2.0 * 2 * phi_prime_max * (1.0 / LINK.kmin + LINK.kmax / LINK.kmin**2)
    worst_ratio = 0.0
    for _ in range(100):
        ta, tb = random_theta(basis, 2, rng), random_theta(basis, 2, rng)
        sa = RationalTriangularMap.from_theta(ta, LINK)
        sb = RationalTriangularMap.from_theta(tb, LINK)
        f_gap = max(
            float(np.max(np.abs(
                basis.eval_expansion(k, probe[:, :k], ta.components[k - 1])
                - basis.eval_expansion(k, probe[:, :k], tb.components[k - 1]))))
            for k in (1, 2))
        worst_ratio = max(worst_ratio,
                          c1diag_map_distance(sa, sb) / max(f_gap, 1e-300))
    increment_ok = worst_ratio <= m_const

    _criterion("structural-bounds",
               bounds_ok and identity_ok and increment_ok,
               f"partials in [{dmin:.4f},{dmax:.4f}] within [{lo:.4f},{hi:.1f}] "
               f"over 1000 draws; identity exact at quadrature nodes: "
               f"{identity_ok}; increment ratio {worst_ratio:.2f} <= {m_const:.2f} "
               f"over 100 pairs")


def test_pullback_lipschitz():
    rng = np.random.default_rng(13)
    basis = WaveletBasis("haar", 1, 2)
    eta = make_test_density("linear-tilt", 2, a=0.4)
    eta_lip = 2.0 * 0.4 * 1.4 * math.sqrt(2.0)
    probe = rng.random((600, 2))
    ok = True
    worst = 0.0
    for _ in range(100):
        sa = RationalTriangularMap.from_theta(random_theta(basis, 2, rng), LINK)
        sb = RationalTriangularMap.from_theta(random_theta(basis, 2, rng), LINK)
        gap = float(np.max(np.abs(
            pullback_density(sa, eta)(probe) - pullback_density(sb, eta)(probe))))
        dist = c1diag_map_distance(sa, sb)
        max_norm = max(c1diag_norm(sa), c1diag_norm(sb))
        c_bound = eta_lip * max_norm + 2.0 * eta.upper
        ratio = gap / max(dist * max_norm, 1e-300)
        worst = max(worst, ratio / c_bound)
        ok = ok and gap <= c_bound * dist * max_norm + 1e-9
    _criterion("pullback-lipschitz", ok,
               f"single explicit constant covers 100 pairs at d=2; worst "
               f"ratio/bound {worst:.3f} <= 1")


def test_stability_estimate():
    p = make_test_density("nonproduct-coupling", 2, strength=0.5)
    pbar = make_test_density("linear-tilt", 2, a=0.5)
    eta = make_test_density("uniform", 2)
    base = build_kr(p, eta)
    grid = GridSpec.trapezoid(2, 65)
    ratios = []
    for t in (0.5, 0.25, 0.1, 0.05):
        st = build_kr(mix_densities(p, pbar, t), eta)
        ratios.append(h1diag_map_distance(st, base, grid)
                      / l2_distance(mix_densities(p, pbar, t), p, grid))
    ratios = np.array(ratios)
    ok = ratios.max() <= 10.0 and ratios.max() / ratios.min() <= 2.0
    _criterion("stability-estimate", ok,
               f"ratios {np.round(ratios, 4).tolist()} bounded by one constant, "
               f"max/min {ratios.max() / ratios.min():.3f} <= 2 as t -> 0")


def test_csv_byte_determinism(tmp_path):
    cfg = dict(
        density={"kind": "linear-tilt", "a": 0.5, "dim": 1},
        alpha=2, dim=1, n_grid=[100, 200, 400], replicates=2, seed=31,
        metrics_nodes_per_axis=257)
    run_rate_study(ExperimentConfig.from_dict(cfg), csv_path=tmp_path / "a.csv")
    run_rate_study(ExperimentConfig.from_dict(cfg), csv_path=tmp_path / "b.csv")
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    _criterion("csv-determinism", same,
               "rerun with fixed config and thread count is byte-identical")

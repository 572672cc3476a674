"""Distances between densities and between triangular maps, plus rate fits.

All density metrics are computed by quadrature against evaluable densities on
a shared grid (the synthetic setting), never from samples, so the statistical
error of an estimator is not confounded with metric estimation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import GridSpec, default_grid
from .trimap import TriangularMap

__all__ = [
    "MetricsReport",
    "hellinger",
    "kl_divergence",
    "l2_distance",
    "tv_distance",
    "h1diag_map_distance",
    "c1diag_map_distance",
    "c1diag_norm",
    "rate_fit",
    "compare_densities",
]

_KL_FLOOR = 1e-12


def _values(p, nodes: np.ndarray) -> np.ndarray:
    vals = np.asarray(p(nodes), dtype=float).reshape(-1)
    if vals.shape[0] != nodes.shape[0]:
        raise ValueError("density returned wrong number of values")
    return vals


def hellinger(p, q, grid: GridSpec) -> float:
    """Hellinger distance (integral of (sqrt p - sqrt q)^2)^(1/2)."""
    nodes, w = grid.nodes(), grid.weights()
    pv, qv = _values(p, nodes), _values(q, nodes)
    if np.any(pv < 0.0) or np.any(qv < 0.0):
        raise ValueError("hellinger requires nonnegative densities on the grid")
    return float(np.sqrt(w @ (np.sqrt(pv) - np.sqrt(qv)) ** 2))


def kl_divergence(p, q, grid: GridSpec) -> float:
    """KL(p || q) by quadrature; q must stay above 1e-12 on the grid."""
    nodes, w = grid.nodes(), grid.weights()
    pv, qv = _values(p, nodes), _values(q, nodes)
    if np.any(qv < _KL_FLOOR):
        i = int(np.argmax(qv < _KL_FLOOR))
        raise ValueError(
            f"second density is {qv[i]:.3e} < {_KL_FLOOR:g} at node "
            f"{nodes[i].tolist()}; KL undefined")
    ratio = np.where(pv > 0.0, pv / qv, 1.0)
    return float(w @ (pv * np.log(ratio)))


def l2_distance(p, q, grid: GridSpec) -> float:
    nodes, w = grid.nodes(), grid.weights()
    diff = _values(p, nodes) - _values(q, nodes)
    return float(np.sqrt(w @ diff**2))


def tv_distance(p, q, grid: GridSpec) -> float:
    """L1 distance (the paper-style total variation convention)."""
    nodes, w = grid.nodes(), grid.weights()
    diff = _values(p, nodes) - _values(q, nodes)
    return float(w @ np.abs(diff))


@dataclass(frozen=True)
class MetricsReport:
    hellinger: float
    l2: float
    kl: float
    tv: float
    grid: str

    def to_dict(self) -> dict:
        return {"hellinger": self.hellinger, "l2": self.l2, "kl": self.kl,
                "tv": self.tv, "grid": self.grid}


def compare_densities(p, q, grid: GridSpec | None = None,
                      dim: int | None = None) -> MetricsReport:
    """All four density metrics of p against q on one grid."""
    if grid is None:
        if dim is None:
            raise ValueError("need a grid or a dimension")
        grid = default_grid(dim)
    return MetricsReport(
        hellinger=hellinger(p, q, grid),
        l2=l2_distance(p, q, grid),
        kl=kl_divergence(p, q, grid),
        tv=tv_distance(p, q, grid),
        grid=f"{grid.rule}:{grid.nodes_per_axis}^{grid.dim}",
    )


def _component_grid(grid: GridSpec, k: int) -> GridSpec:
    return GridSpec(dim=k, nodes_per_axis=grid.nodes_per_axis, rule=grid.rule,
                    panels=grid.panels, order=grid.order)


def h1diag_map_distance(s: TriangularMap, s2: TriangularMap,
                        grid: GridSpec | None = None) -> float:
    """Anisotropic H1 distance between triangular maps.

    (sum_k ||S_k - S~_k||^2_{L2(Q_k)} + ||d_k S_k - d_k S~_k||^2_{L2(Q_k)})^(1/2),
    each component integrated by quadrature over its own cube Q_k.
    """
    if s.dim != s2.dim:
        raise ValueError("maps have different dimensions")
    if grid is None:
        grid = default_grid(s.dim)
    total = 0.0
    for k in range(1, s.dim + 1):
        gk = _component_grid(grid, k)
        nodes, w = gk.nodes(), gk.weights()
        dv = s.eval_component(k, nodes) - s2.eval_component(k, nodes)
        dd = s.diag_partial(k, nodes) - s2.diag_partial(k, nodes)
        total += float(w @ dv**2) + float(w @ dd**2)
    return float(np.sqrt(total))


def c1diag_map_distance(s: TriangularMap, s2: TriangularMap,
                        grid: GridSpec | None = None) -> float:
    """Grid sup-norm approximation of the C1-diag distance.

    sum_k ||S_k - S~_k||_inf + sum_k ||d_k(S_k - S~_k)||_inf over the probe
    grid of each component cube.
    """
    if s.dim != s2.dim:
        raise ValueError("maps have different dimensions")
    if grid is None:
        grid = default_grid(s.dim)
    sup_vals = 0.0
    sup_partials = 0.0
    for k in range(1, s.dim + 1):
        nodes = _component_grid(grid, k).nodes()
        sup_vals += float(np.max(np.abs(
            s.eval_component(k, nodes) - s2.eval_component(k, nodes))))
        sup_partials += float(np.max(np.abs(
            s.diag_partial(k, nodes) - s2.diag_partial(k, nodes))))
    return sup_vals + sup_partials


def c1diag_norm(s: TriangularMap, grid: GridSpec | None = None) -> float:
    """Grid sup-norm approximation of sum_k ||S_k||_inf + ||d_k S_k||_inf."""
    if grid is None:
        grid = default_grid(s.dim)
    total = 0.0
    for k in range(1, s.dim + 1):
        nodes = _component_grid(grid, k).nodes()
        total += float(np.max(np.abs(s.eval_component(k, nodes))))
        total += float(np.max(np.abs(s.diag_partial(k, nodes))))
    return total


def rate_fit(points) -> dict:
    """Least-squares fit of log(error) against log(N).

    Returns {slope, intercept, r2}; the slope keeps its sign, so a decaying
    error gives a negative slope.  Requires at least 3 points with strictly
    positive errors (repeated N values are fine).
    """
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError(f"rate_fit needs at least 3 points, got {len(pts)}")
    ns = np.array([p[0] for p in pts])
    errs = np.array([p[1] for p in pts])
    if np.any(errs <= 0.0):
        raise ValueError("rate_fit requires strictly positive errors")
    if np.any(ns <= 0.0):
        raise ValueError("rate_fit requires strictly positive sample sizes")
    x = np.log(ns)
    y = np.log(errs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": float(r2)}

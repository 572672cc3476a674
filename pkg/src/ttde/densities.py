"""Probability densities on the unit cube Q_d = [0,1]^d.

Densities are represented by vectorized closures plus metadata (positivity
bounds, a smoothness label), never by grids; tensor-product quadrature grids
are separate objects used to integrate and validate them.  The synthetic
family built by :func:`make_test_density` covers uniform, tilted, oscillatory
and non-factorizing ground truths with known bounds and closed-form
normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "DensityField",
    "FactorizedDensity",
    "MembershipReport",
    "integrate",
    "make_test_density",
    "validate_class_membership",
    "default_grid",
    "mix_densities",
]

# Tensor grids above this size are refused outright; they indicate a
# misconfigured experiment rather than a legitimate workload.
MAX_TOTAL_NODES = 2**24


def _gauss_panel_rule(panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0,1] with equal panels."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (lo[:, None] + half[:, None] * (xg[None, :] + 1.0)).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product quadrature grid on Q_dim.

    ``rule`` is either ``"trapezoid"`` (uniform grid, closed rule) or
    ``"gauss"`` (composite Gauss-Legendre with ``panels`` panels of the given
    ``order`` per axis).  Axis weights always sum to 1, the volume of the cube.
    """

    dim: int
    nodes_per_axis: int
    rule: str = "trapezoid"
    panels: int = 16
    order: int = 8

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.nodes_per_axis < 2:
            raise ValueError(f"nodes_per_axis must be >= 2, got {self.nodes_per_axis}")
        if self.rule not in ("trapezoid", "gauss"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes_per_axis**self.dim > MAX_TOTAL_NODES:
            raise ValueError(
                f"grid with {self.nodes_per_axis}^{self.dim} nodes exceeds the "
                f"budget of {MAX_TOTAL_NODES}"
            )

    @classmethod
    def trapezoid(cls, dim: int, nodes_per_axis: int) -> "GridSpec":
        return cls(dim=dim, nodes_per_axis=nodes_per_axis, rule="trapezoid")

    @classmethod
    def gauss(cls, dim: int, panels: int = 16, order: int = 8) -> "GridSpec":
        return cls(dim=dim, nodes_per_axis=panels * order, rule="gauss",
                   panels=panels, order=order)

    def axis_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D nodes and weights on [0,1] for a single axis."""
        if self.rule == "trapezoid":
            n = self.nodes_per_axis
            x = np.linspace(0.0, 1.0, n)
            w = np.full(n, 1.0 / (n - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
            return x, w
        return _gauss_panel_rule(self.panels, self.order)

    def nodes(self) -> np.ndarray:
        """All tensor nodes, shape (n_axis**dim, dim)."""
        x, _ = self.axis_rule()
        mesh = np.meshgrid(*([x] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def weights(self) -> np.ndarray:
        _, w = self.axis_rule()
        out = w
        for _ in range(self.dim - 1):
            out = np.multiply.outer(out, w)
        return out.ravel()


def default_grid(dim: int) -> GridSpec:
    """Desk-scale defaults: 513 (d=1), 129^2 (d=2), 33^3 (d=3)."""
    per_axis = {1: 513, 2: 129, 3: 33}
    if dim not in per_axis:
        raise ValueError(f"no default grid for dim={dim}; build a GridSpec explicitly")
    return GridSpec.trapezoid(dim, per_axis[dim])


@dataclass(frozen=True)
class DensityField:
    """Evaluable probability density on Q_dim with positivity bounds.

    ``pdf`` maps an (m, dim) array of points to an (m,) array of values and is
    expected to satisfy ``lower <= pdf(x) <= upper`` on the cube and to
    integrate to 1.  ``smoothness`` is a label only, recording which Hoelder
    class the density is meant to represent.

    For one-dimensional fields the optional closed-form ``cdf`` and
    ``pdf_prime`` accelerate and sharpen downstream transport construction;
    both may be None, in which case numerical fallbacks are used.
    """

    dim: int
    pdf: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    smoothness: int = 1
    cdf: Callable[[np.ndarray], np.ndarray] | None = None
    pdf_prime: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "density"

    def __post_init__(self):
        if not (0.0 < self.lower <= self.upper):
            raise ValueError(
                f"positivity bounds must satisfy 0 < lower <= upper, got "
                f"({self.lower}, {self.upper})"
            )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points with {self.dim} columns, got {x.shape}")
        return np.asarray(self.pdf(x), dtype=float)


@dataclass(frozen=True)
class FactorizedDensity(DensityField):
    """Product density nu(x) = prod_k e_k(x_k) with 1-D marginal fields."""

    marginals: tuple[DensityField, ...] = ()

    @classmethod
    def from_marginals(cls, marginals: Sequence[DensityField],
                       label: str = "product") -> "FactorizedDensity":
        marginals = tuple(marginals)
        if not marginals:
            raise ValueError("need at least one marginal")
        for m in marginals:
            if m.dim != 1:
                raise ValueError("marginals must be one-dimensional densities")
        d = len(marginals)

        def pdf(x, _marginals=marginals):
            out = _marginals[0].pdf(x[:, 0:1])
            for k in range(1, len(_marginals)):
                out = out * _marginals[k].pdf(x[:, k:k + 1])
            return out

        lower = float(np.prod([m.lower for m in marginals]))
        upper = float(np.prod([m.upper for m in marginals]))
        alpha = min(m.smoothness for m in marginals)
        return cls(dim=d, pdf=pdf, lower=lower, upper=upper, smoothness=alpha,
                   label=label, marginals=marginals)


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: GridSpec) -> float:
    """Quadrature approximation of the integral of f over Q_dim.

    Deterministic for a fixed grid.  Raises if f is non-finite at any node,
    naming the offending node.
    """
    nodes = grid.nodes()
    vals = np.asarray(f(nodes), dtype=float).reshape(-1)
    if vals.shape[0] != nodes.shape[0]:
        raise ValueError(
            f"integrand returned {vals.shape[0]} values for {nodes.shape[0]} nodes"
        )
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"integrand is not finite at node {nodes[i].tolist()}")
    return float(grid.weights() @ vals)


# ---------------------------------------------------------------------------
# Synthetic test densities
# ---------------------------------------------------------------------------

def _uniform_marginal() -> DensityField:
    return DensityField(
        dim=1,
        pdf=lambda x: np.ones(x.shape[0]),
        lower=1.0, upper=1.0, smoothness=99,
        cdf=lambda t: np.asarray(t, dtype=float),
        pdf_prime=lambda x: np.zeros(x.shape[0]),
        label="uniform",
    )


def _linear_tilt_marginal(a: float) -> DensityField:
    # 1 + a (2x - 1): integrates to 1, bounds 1 -/+ a.
    if not abs(a) < 1.0:
        raise ValueError(f"linear-tilt slope must satisfy |a| < 1, got {a}")
    return DensityField(
        dim=1,
        pdf=lambda x, a=a: 1.0 + a * (2.0 * x[:, 0] - 1.0),
        lower=1.0 - abs(a), upper=1.0 + abs(a), smoothness=99,
        cdf=lambda t, a=a: np.asarray(t) * (1.0 - a) + a * np.asarray(t) ** 2,
        pdf_prime=lambda x, a=a: np.full(x.shape[0], 2.0 * a),
        label=f"linear-tilt({a})",
    )


def _cosine_bump_marginal(amplitude: float, frequency: int) -> DensityField:
    if not abs(amplitude) < 1.0:
        raise ValueError(f"cosine-bump amplitude must satisfy |A| < 1, got {amplitude}")
    if frequency < 1 or frequency != int(frequency):
        raise ValueError(f"cosine-bump frequency must be a positive integer, got {frequency}")
    w = 2.0 * math.pi * frequency
    return DensityField(
        dim=1,
        pdf=lambda x, A=amplitude, w=w: 1.0 + A * np.cos(w * x[:, 0]),
        lower=1.0 - abs(amplitude), upper=1.0 + abs(amplitude), smoothness=99,
        cdf=lambda t, A=amplitude, w=w: np.asarray(t) + (A / w) * np.sin(w * np.asarray(t)),
        pdf_prime=lambda x, A=amplitude, w=w: -A * w * np.sin(w * x[:, 0]),
        label=f"cosine-bump({amplitude},{frequency})",
    )


def make_test_density(kind: str, dim: int, **params) -> DensityField:
    """Build a normalized synthetic density on Q_dim.

    Kinds
    -----
    uniform
        Constant 1.
    linear-tilt (a)
        Product over axes of 1 + a(2x_k - 1).
    cosine-bump (amplitude, frequency)
        Product over axes of 1 + A cos(2 pi f x_k), integer frequency.
    product-of-marginals (marginals=[spec, ...])
        Product of per-axis 1-D specs, each a dict {kind, **params}.
    nonproduct-coupling (strength)
        1 + s * prod_k cos(2 pi x_k); does not factorize for d >= 2.

    The factorizing kinds return a :class:`FactorizedDensity` so they can be
    used as transport references.  Parameters that would let the density touch
    zero raise a construction error.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")

    if kind == "uniform":
        return FactorizedDensity.from_marginals(
            [_uniform_marginal() for _ in range(dim)], label="uniform")

    if kind == "linear-tilt":
        a = float(params.pop("a", 0.5))
        _reject_unknown(kind, params)
        return FactorizedDensity.from_marginals(
            [_linear_tilt_marginal(a) for _ in range(dim)],
            label=f"linear-tilt({a})")

    if kind == "cosine-bump":
        amplitude = float(params.pop("amplitude", 0.5))
        frequency = int(params.pop("frequency", 1))
        _reject_unknown(kind, params)
        return FactorizedDensity.from_marginals(
            [_cosine_bump_marginal(amplitude, frequency) for _ in range(dim)],
            label=f"cosine-bump({amplitude},{frequency})")

    if kind == "product-of-marginals":
        specs = params.pop("marginals", None)
        _reject_unknown(kind, params)
        if not specs or len(specs) != dim:
            raise ValueError(f"product-of-marginals needs {dim} marginal specs")
        margs = []
        for s in specs:
            s = dict(s)
            m = make_test_density(s.pop("kind"), 1, **s)
            margs.append(m.marginals[0] if isinstance(m, FactorizedDensity) else m)
        return FactorizedDensity.from_marginals(margs, label="product-of-marginals")

    if kind == "nonproduct-coupling":
        s = float(params.pop("strength", 0.5))
        _reject_unknown(kind, params)
        if not abs(s) < 1.0:
            raise ValueError(f"coupling strength must satisfy |s| < 1, got {s}")
        two_pi = 2.0 * math.pi

        def pdf(x, s=s, w=two_pi):
            return 1.0 + s * np.prod(np.cos(w * x), axis=-1)

        return DensityField(dim=dim, pdf=pdf, lower=1.0 - abs(s), upper=1.0 + abs(s),
                            smoothness=99, label=f"nonproduct-coupling({s})")

    raise ValueError(f"unknown density kind {kind!r}")


def _reject_unknown(kind: str, params: dict) -> None:
    if params:
        raise ValueError(f"unknown parameters for {kind!r}: {sorted(params)}")


def density_from_spec(spec: dict) -> DensityField:
    """Build a density from a JSON-style spec {kind, dim, **params}."""
    spec = dict(spec)
    kind = spec.pop("kind")
    dim = int(spec.pop("dim"))
    return make_test_density(kind, dim, **spec)


def mix_densities(p: DensityField, q: DensityField, t: float,
                  label: str | None = None) -> DensityField:
    """Convex combination (1-t) p + t q, used by stability experiments."""
    if p.dim != q.dim:
        raise ValueError("cannot mix densities of different dimensions")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"mixing weight must lie in [0,1], got {t}")

    def pdf(x, p=p, q=q, t=t):
        return (1.0 - t) * p.pdf(x) + t * q.pdf(x)

    return DensityField(
        dim=p.dim, pdf=pdf,
        lower=(1.0 - t) * p.lower + t * q.lower,
        upper=(1.0 - t) * p.upper + t * q.upper,
        smoothness=min(p.smoothness, q.smoothness),
        label=label or f"mix({p.label},{q.label},{t})",
    )


@dataclass(frozen=True)
class MembershipReport:
    """Outcome of checking a density against its declared class bounds."""

    min: float
    max: float
    integral: float
    lower_ok: bool
    upper_ok: bool
    integral_ok: bool
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok and self.integral_ok

    def violations(self) -> list[str]:
        out = []
        if not self.lower_ok:
            out.append(f"min {self.min:.6g} below declared lower bound")
        if not self.upper_ok:
            out.append(f"max {self.max:.6g} above declared upper bound")
        if not self.integral_ok:
            out.append(f"integral {self.integral:.12g} differs from 1 by more "
                       f"than {self.tolerance:g}")
        return out


def validate_class_membership(p: DensityField, grid: GridSpec,
                              tolerance: float | None = None) -> MembershipReport:
    """Report min/max over grid nodes and the quadrature integral.

    Report-only: violations are flagged, never raised.  Default integral
    tolerance is 1e-8 in one dimension and 1e-5 otherwise, matching the
    accuracy of the default grids.
    """
    if tolerance is None:
        tolerance = 1e-8 if grid.dim == 1 else 1e-5
    nodes = grid.nodes()
    vals = p(nodes)
    total = float(grid.weights() @ vals)
    vmin, vmax = float(vals.min()), float(vals.max())
    return MembershipReport(
        min=vmin, max=vmax, integral=total,
        lower_ok=vmin >= p.lower - 1e-12,
        upper_ok=vmax <= p.upper + 1e-12,
        integral_ok=abs(total - 1.0) <= tolerance,
        tolerance=tolerance,
    )

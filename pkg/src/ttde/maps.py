"""Rationally parameterized monotone triangular maps on the unit cube.

A bounded multivariate parameter F = (F_1..F_d), each F_k on Q_k, induces the
triangular map with components

    S_k(x_{1:k}) = int_0^{x_k} Phi(F_k(x_{1:k-1}, y)) dy
                   / int_0^1   Phi(F_k(x_{1:k-1}, y)) dy,

where the link Phi maps the reals onto a positive interval (K_min, K_max).
Monotonicity and the range constraint then hold automatically, with diagonal
partials pinned inside [K_min/K_max, K_max/K_min], so likelihood fits over F
are unconstrained.  F may be any callable; the wavelet-backed variant ties F
to truncated tensor expansions with coefficients Theta.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit

from .trimap import TriangularMap
from .wavelets import WaveletBasis

__all__ = [
    "LinkFunction",
    "LinkRangeError",
    "Theta",
    "RationalTriangularMap",
    "b_alpha_norm",
    "natural_parameter",
    "dyadic_panels",
]


class LinkRangeError(ValueError):
    """A value fell outside the open range (K_min, K_max) of the link."""


@dataclass(frozen=True)
class LinkFunction:
    """Smooth strictly increasing bijection of the reals onto (kmin, kmax)."""

    kmin: float
    kmax: float
    phi: Callable[[np.ndarray], np.ndarray]
    phi_prime: Callable[[np.ndarray], np.ndarray]
    phi_inverse: Callable[[np.ndarray], np.ndarray]
    label: str = "link"

    def __post_init__(self):
        if not (0.0 < self.kmin < self.kmax):
            raise ValueError(
                f"need 0 < kmin < kmax, got ({self.kmin}, {self.kmax})")

    @classmethod
    def logistic(cls, kmin: float = 0.25, kmax: float = 4.0,
                 calibrate: bool = True) -> "LinkFunction":
        """Logistic link kmin + (kmax-kmin) / (1 + r e^-t).

        With ``calibrate`` (requires kmin < 1 < kmax), r is chosen so that
        Phi(0) = 1: zero parameters then give the identity map, the natural
        optimizer initialization.  r = 1 reproduces the plain logistic.
        """
        if calibrate:
            if not (kmin < 1.0 < kmax):
                raise ValueError(
                    f"calibrated link needs kmin < 1 < kmax, got ({kmin}, {kmax})")
            r = (kmax - 1.0) / (1.0 - kmin)
        else:
            r = 1.0
        span = kmax - kmin
        log_r = math.log(r)

        def phi(t, kmin=kmin, span=span, r=r):
            t = np.asarray(t, dtype=float)
            with np.errstate(over="ignore"):
                q = 1.0 / (1.0 + r * np.exp(-t))
            return kmin + span * q

        def phi_prime(t, span=span, log_r=log_r):
            q = expit(np.asarray(t, dtype=float) - log_r)
            return span * q * (1.0 - q)

        def phi_inverse(y, kmin=kmin, kmax=kmax, span=span, log_r=log_r):
            y = np.asarray(y, dtype=float)
            if np.any(y <= kmin) or np.any(y >= kmax):
                bad = y[(y <= kmin) | (y >= kmax)]
                raise LinkRangeError(
                    f"value {float(np.atleast_1d(bad)[0]):.6g} outside the link "
                    f"range ({kmin:g}, {kmax:g}); use a link with a wider range")
            return logit((y - kmin) / span) + log_r

        kind = "calibrated-logistic" if calibrate else "logistic"
        return cls(kmin=kmin, kmax=kmax, phi=phi, phi_prime=phi_prime,
                   phi_inverse=phi_inverse, label=f"{kind}({kmin},{kmax})")


# ---------------------------------------------------------------------------
# Wavelet coefficient vectors
# ---------------------------------------------------------------------------

class Theta:
    """Per-component wavelet coefficients theta = (theta^1, ..., theta^d).

    Component k holds one float per index (l, m) of the truncated set at
    resolution J; the smoothness alpha fixes the 2^(2 l alpha) weights of the
    sequence-norm penalty.
    """

    def __init__(self, basis: WaveletBasis, alpha: int,
                 components: Sequence[np.ndarray] | None = None):
        if alpha < 1:
            raise ValueError(f"alpha must be a positive integer, got {alpha}")
        self.basis = basis
        self.alpha = int(alpha)
        if components is None:
            components = [np.zeros(basis.size(k)) for k in range(1, basis.dim + 1)]
        self.components = [np.asarray(c, dtype=float).copy() for c in components]
        for k, c in enumerate(self.components, start=1):
            if c.shape != (basis.size(k),):
                raise ValueError(
                    f"component {k} expects {basis.size(k)} coefficients, "
                    f"got {c.shape}")
            if not np.all(np.isfinite(c)):
                raise ValueError(f"component {k} has non-finite coefficients")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def J(self) -> int:
        return self.basis.J

    @classmethod
    def zeros(cls, basis: WaveletBasis, alpha: int) -> "Theta":
        return cls(basis, alpha)

    def copy(self) -> "Theta":
        return Theta(self.basis, self.alpha, [c.copy() for c in self.components])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self.components)

    @classmethod
    def from_vector(cls, basis: WaveletBasis, alpha: int, vec: np.ndarray) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        sizes = [basis.size(k) for k in range(1, basis.dim + 1)]
        if vec.shape != (sum(sizes),):
            raise ValueError(f"expected vector of length {sum(sizes)}, got {vec.shape}")
        comps = np.split(vec, np.cumsum(sizes)[:-1])
        return cls(basis, alpha, comps)

    def penalty_weights(self) -> list[np.ndarray]:
        """2^(2 l alpha) per coefficient, one array per component."""
        return [np.exp2(2.0 * self.alpha * self.basis.levels_of_indices(k))
                for k in range(1, self.dim + 1)]

    def to_json_dict(self) -> dict:
        entries = []
        for k in range(1, self.dim + 1):
            c = self.components[k - 1]
            levels = self.basis.levels_of_indices(k)
            offs = [self.basis.level_offset(k, l) for l in range(self.J + 1)]
            nz = np.nonzero(c)[0]
            for i in nz:
                l = int(levels[i])
                m = int(i - offs[l] + 1)
                entries.append([k, l, m, float(c[i])])
        return {"alpha": self.alpha, "J": self.J, "dim": self.dim,
                "basis": self.basis.backend.name, "components": entries}

    @classmethod
    def from_json_dict(cls, data: dict) -> "Theta":
        basis = WaveletBasis(data.get("basis", "haar"), int(data["J"]),
                             int(data["dim"]))
        theta = cls.zeros(basis, int(data["alpha"]))
        for k, l, m, value in data["components"]:
            off = basis.level_offset(int(k), int(l))
            theta.components[int(k) - 1][off + int(m) - 1] = float(value)
        return theta

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Theta":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def b_alpha_norm(theta: Theta, alpha: int | None = None) -> float:
    """Wavelet sequence norm (sum over k,l,m of 2^(2 l alpha) theta^2)^(1/2)."""
    if alpha is None:
        alpha = theta.alpha
    total = 0.0
    for k in range(1, theta.dim + 1):
        w = np.exp2(2.0 * alpha * theta.basis.levels_of_indices(k))
        c = theta.components[k - 1]
        total += float(w @ (c * c))
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# The induced triangular map
# ---------------------------------------------------------------------------

def dyadic_panels(J: int) -> np.ndarray:
    """Panel edges at the dyadic breakpoints of level-J basis functions."""
    return np.linspace(0.0, 1.0, (1 << (J + 1)) + 1)


class RationalTriangularMap(TriangularMap):
    """Triangular map induced by per-component parameters and a link.

    ``fs[k-1]`` is a callable taking points of shape (n, k) and returning
    F_k there.  One-dimensional integrals use a composite rule with the given
    panel edges: Gauss-Legendre of the configured order per panel, or the
    exact single-node cell rule when the integrand is known to be piecewise
    constant on the panels (Haar-backed parameters).
    """

    def __init__(self, dim: int, fs: Sequence[Callable], link: LinkFunction,
                 panel_edges: np.ndarray | None = None, order: int = 8,
                 cell_rule: bool = False):
        if len(fs) != dim:
            raise ValueError(f"need {dim} component parameters, got {len(fs)}")
        self.dim = dim
        self.fs = list(fs)
        self.link = link
        if panel_edges is None:
            panel_edges = np.linspace(0.0, 1.0, 65)
        self.edges = np.asarray(panel_edges, dtype=float)
        if self.edges.ndim != 1 or self.edges.shape[0] < 2 or \
                self.edges[0] != 0.0 or self.edges[-1] != 1.0 or \
                np.any(np.diff(self.edges) <= 0):
            raise ValueError("panel edges must increase from 0.0 to 1.0")
        self.order = int(order)
        self.cell_rule = bool(cell_rule)
        if cell_rule:
            self._xg = np.zeros(1)
            self._wg = np.full(1, 2.0)
        else:
            self._xg, self._wg = np.polynomial.legendre.leggauss(self.order)
        self.theta: Theta | None = None

    @classmethod
    def from_theta(cls, theta: Theta, link: LinkFunction,
                   order: int = 8) -> "RationalTriangularMap":
        basis = theta.basis
        fs = [(lambda pts, k=k: basis.eval_expansion(k, pts, theta.components[k - 1]))
              for k in range(1, basis.dim + 1)]
        mp = cls(basis.dim, fs, link, panel_edges=dyadic_panels(basis.J),
                 order=order, cell_rule=basis.backend.name == "haar")
        mp.theta = theta
        return mp

    @classmethod
    def identity(cls, dim: int, link: LinkFunction | None = None) -> "RationalTriangularMap":
        link = link or LinkFunction.logistic()
        fs = [(lambda pts: np.zeros(pts.shape[0])) for _ in range(dim)]
        return cls(dim, fs, link, panel_edges=np.linspace(0.0, 1.0, 3))

    # -- internals -----------------------------------------------------------

    def _phi_f(self, k: int, cond: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Phi(F_k) at conditioning rows paired with per-row y columns.

        cond has shape (m, k-1), y has shape (m, c); returns (m, c).
        """
        m, c = y.shape
        pts = np.empty((m, c, k))
        if k > 1:
            pts[:, :, :k - 1] = cond[:, None, :]
        pts[:, :, k - 1] = y
        f = self.fs[k - 1](pts.reshape(m * c, k))
        return np.asarray(self.link.phi(f)).reshape(m, c)

    def _panel_integrals(self, k: int, cond: np.ndarray) -> np.ndarray:
        """Integral of Phi(F_k(cond, .)) over every panel; shape (m, P)."""
        lo, hi = self.edges[:-1], self.edges[1:]
        half = 0.5 * (hi - lo)
        nodes = lo[None, :, None] + half[None, :, None] * (self._xg[None, None, :] + 1.0)
        m = cond.shape[0]
        P, q = nodes.shape[1], nodes.shape[2]
        y = np.broadcast_to(nodes, (m, P, q)).reshape(m, P * q)
        phi = self._phi_f(k, cond, y).reshape(m, P, q)
        return half[None, :] * (phi @ self._wg)

    def value_and_partial(self, k: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """S_k and dS_k/dx_k in one pass over points (m, >=k)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        cond = x[:, :k - 1]
        xk = x[:, k - 1]
        if np.any(xk < 0.0) or np.any(xk > 1.0):
            raise ValueError("points must lie in the unit cube")
        panel = self._panel_integrals(k, cond)
        prefix = np.concatenate([np.zeros((panel.shape[0], 1)),
                                 np.cumsum(panel, axis=1)], axis=1)
        denom = prefix[:, -1]
        ip = np.clip(np.searchsorted(self.edges, xk, side="right") - 1,
                     0, self.edges.shape[0] - 2)
        lo = self.edges[ip]
        half = 0.5 * (xk - lo)
        nodes = lo[:, None] + half[:, None] * (self._xg[None, :] + 1.0)
        phi_tail = self._phi_f(k, cond, nodes)
        partial = half * (phi_tail @ self._wg)
        numer = prefix[np.arange(x.shape[0]), ip] + partial
        phi_at_x = self._phi_f(k, cond, xk[:, None])[:, 0]
        return numer / denom, phi_at_x / denom

    def eval_on_tensor_grid(self, k: int, axes: Sequence[np.ndarray]
                            ) -> tuple[np.ndarray, np.ndarray]:
        """S_k and dS_k/dx_k on a tensor grid, exploiting repeated conditioning.

        ``axes`` holds k 1-D coordinate arrays; the returned arrays have shape
        (len(axes[0]), ..., len(axes[k-1])).  Identical values to
        :meth:`value_and_partial` point by point, but each distinct
        conditioning row's quadrature is computed once.
        """
        if len(axes) != k:
            raise ValueError(f"component {k} needs {k} coordinate axes")
        axes = [np.asarray(a, dtype=float) for a in axes]
        shape = tuple(a.shape[0] for a in axes)
        if k == 1:
            s, ds = self.value_and_partial(1, axes[0][:, None])
            return s, ds
        mesh = np.meshgrid(*axes[:-1], indexing="ij")
        cond = np.stack([m.ravel() for m in mesh], axis=-1)
        n_cond = cond.shape[0]
        panel = self._panel_integrals(k, cond)
        prefix = np.concatenate([np.zeros((n_cond, 1)),
                                 np.cumsum(panel, axis=1)], axis=1)
        denom = prefix[:, -1]
        x = axes[-1]
        nx = x.shape[0]
        ip = np.clip(np.searchsorted(self.edges, x, side="right") - 1,
                     0, self.edges.shape[0] - 2)
        lo = self.edges[ip]
        half = 0.5 * (x - lo)
        nodes = lo[:, None] + half[:, None] * (self._xg[None, :] + 1.0)  # (nx, q)
        q = nodes.shape[1]
        ys = np.concatenate([nodes.reshape(-1), x])       # partial nodes then x
        y_all = np.broadcast_to(ys[None, :], (n_cond, ys.shape[0]))
        phi_all = self._phi_f(k, cond, y_all)
        phi_tail = phi_all[:, :nx * q].reshape(n_cond, nx, q)
        phi_at_x = phi_all[:, nx * q:]
        partial = half[None, :] * (phi_tail @ self._wg)
        numer = prefix[:, ip] + partial
        s = numer / denom[:, None]
        ds = phi_at_x / denom[:, None]
        return s.reshape(shape), ds.reshape(shape)

    # -- TriangularMap interface ----------------------------------------------

    def eval_component(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.value_and_partial(k, x)[0]

    def diag_partial(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        cond = x[:, :k - 1]
        denom = self._panel_integrals(k, cond).sum(axis=1)
        phi_at_x = self._phi_f(k, cond, x[:, k - 1][:, None])[:, 0]
        return phi_at_x / denom


def natural_parameter(s: TriangularMap, link: LinkFunction,
                      probe_per_axis: int = 9) -> list[Callable]:
    """Canonical preimage of a monotone triangular map under the link.

    Returns per-component callables F_k = Phi^{-1}(d_k S_k).  The diagonal
    partials must take values strictly inside (K_min, K_max); a coarse probe
    grid checks this up front and every later evaluation re-checks, raising
    :class:`LinkRangeError` with advice to widen the link otherwise.
    """
    fs = []
    for k in range(1, s.dim + 1):
        def f_k(pts, k=k):
            return link.phi_inverse(s.diag_partial(k, np.asarray(pts, dtype=float)))
        fs.append(f_k)
        axis = np.linspace(0.0, 1.0, probe_per_axis)
        mesh = np.meshgrid(*([axis] * k), indexing="ij")
        probe = np.stack([m.ravel() for m in mesh], axis=-1)
        f_k(probe)  # raises LinkRangeError if the range is too narrow
    return fs

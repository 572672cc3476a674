"""Triangular maps of the unit cube and generic componentwise inversion.

A triangular map S of Q_d has components S_k depending only on the first k
coordinates, each strictly increasing in the k-th one, so det(grad S) is the
product of the diagonal partials and inversion reduces to a sequence of
monotone one-dimensional root finds.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

__all__ = ["TriangularMap", "IdentityMap", "InversionError", "MonotonicityError",
           "invert_triangular"]

# Bisection to below 1e-12 interval width, then one Newton polish.
_BISECT_ITERS = 42
_RESIDUAL_TOL = 1e-9


class MonotonicityError(RuntimeError):
    """A diagonal partial was nonpositive where positivity is required."""


class InversionError(RuntimeError):
    """A componentwise root find failed to bracket or converge."""


class TriangularMap(ABC):
    """Abstract triangular map S: Q_d -> Q_d.

    Components are 1-based; ``eval_component(k, x)`` consumes points with at
    least k columns and uses only the first k.
    """

    dim: int

    @abstractmethod
    def eval_component(self, k: int, x: np.ndarray) -> np.ndarray:
        """S_k at points x of shape (m, >=k); returns shape (m,)."""

    @abstractmethod
    def diag_partial(self, k: int, x: np.ndarray) -> np.ndarray:
        """dS_k/dx_k at points x of shape (m, >=k); returns shape (m,)."""

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Full map, shape (m, dim) -> (m, dim)."""
        x = _as_points(x, self.dim)
        return np.stack([self.eval_component(k, x) for k in range(1, self.dim + 1)],
                        axis=-1)

    def jacobian_determinant(self, x: np.ndarray) -> np.ndarray:
        """prod_k dS_k/dx_k; raises MonotonicityError on nonpositive factors."""
        x = _as_points(x, self.dim)
        det = np.ones(x.shape[0])
        for k in range(1, self.dim + 1):
            dk = self.diag_partial(k, x)
            if np.any(dk <= 0.0):
                i = int(np.argmax(dk <= 0.0))
                raise MonotonicityError(
                    f"diagonal partial {k} is {dk[i]:.3e} <= 0 at {x[i].tolist()}")
            det = det * dk
        return det


class IdentityMap(TriangularMap):
    def __init__(self, dim: int):
        self.dim = dim

    def eval_component(self, k, x):
        x = _as_points(x, k)
        return x[:, k - 1].copy()

    def diag_partial(self, k, x):
        x = _as_points(x, k)
        return np.ones(x.shape[0])


def _as_points(x: np.ndarray, min_cols: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] < min_cols:
        raise ValueError(f"expected points with >= {min_cols} columns, got {x.shape}")
    return x


def invert_triangular(s: TriangularMap, z: np.ndarray) -> np.ndarray:
    """Solve S(x) = z coordinate by coordinate.

    Each component equation S_k(x_1..x_{k-1}, t) = z_k is solved by bisection
    on [0,1] down to interval width ~1e-12 followed by one Newton polish with
    the diagonal partial.  Accepts a single point (d,) or a batch (m, d);
    raises :class:`InversionError` if a target is not bracketed or the final
    residual exceeds 1e-9.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = _as_points(z, s.dim)
    m = z.shape[0]
    x = np.zeros((m, s.dim))
    for k in range(1, s.dim + 1):
        target = z[:, k - 1]
        lo = np.zeros(m)
        hi = np.ones(m)
        cols = x[:, :k].copy()

        def comp(t):
            cols[:, k - 1] = t
            return s.eval_component(k, cols)

        flo, fhi = comp(lo), comp(hi)
        slack = 1e-9
        bad = (target < flo - slack) | (target > fhi + slack)
        if bad.any():
            i = int(np.argmax(bad))
            raise InversionError(
                f"component {k}: target {target[i]:.6g} outside bracket "
                f"[{flo[i]:.6g}, {fhi[i]:.6g}] at conditioning "
                f"{z[i, :k - 1].tolist()}")
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            fm = comp(mid)
            take_hi = fm >= target
            hi = np.where(take_hi, mid, hi)
            lo = np.where(take_hi, lo, mid)
        t = 0.5 * (lo + hi)
        cols[:, k - 1] = t
        deriv = s.diag_partial(k, cols)
        resid = comp(t) - target
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(deriv > 0, resid / np.maximum(deriv, 1e-300), 0.0)
        t = np.clip(t - step, 0.0, 1.0)
        resid = np.abs(comp(t) - target)
        if np.any(resid > _RESIDUAL_TOL):
            i = int(np.argmax(resid))
            raise InversionError(
                f"component {k}: residual {resid[i]:.3e} above {_RESIDUAL_TOL:g} "
                f"after bisection+Newton at target {target[i]:.6g}")
        x[:, k - 1] = t
    return x[0] if single else x

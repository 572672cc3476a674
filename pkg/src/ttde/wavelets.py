"""Truncated tensor-product multiresolution bases on the unit cube.

Two interchangeable backends: Haar (closed form, exact dyadic evaluation) and
Daubechies-4 (two vanishing moments, evaluated from cascade tables precomputed
at dyadic resolution 2^-12 with linear interpolation in between).

Level layout per component dimension k: level 0 holds every tensor combination
of father/mother factors at scale 0 (the pure father product first); level
l >= 1 holds the scale-l tensor wavelets (at least one mother factor), scaled
by 2^(lk/2).  Only functions whose support meets the cube are indexed, so the
per-level counts grow like 2^(lk).  Within a level, functions are ordered by
type (lexicographic over factor kinds) then translate (row-major).
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

__all__ = ["WaveletBasis", "BACKENDS"]

BACKENDS = ("haar", "daubechies4")

_CASCADE_LEVEL = 12  # dyadic table resolution 2^-12


@lru_cache(maxsize=None)
def _daub4_tables() -> tuple[np.ndarray, np.ndarray]:
    """Cascade tables for the Daubechies-4 father and mother on [0,3].

    The father values at integers come from the eigenvector of the two-scale
    transfer matrix; dyadic refinement applies phi(x) = sqrt(2) sum h_j
    phi(2x - j) down to resolution 2^-12, and the mother is synthesized from
    the father one level up via the mirrored filter.
    """
    s3 = math.sqrt(3.0)
    h = np.array([1.0 + s3, 3.0 + s3, 3.0 - s3, 1.0 - s3]) / (4.0 * math.sqrt(2.0))
    # father at integer arguments 0..3
    v = np.array([0.0, (1.0 + s3) / 2.0, (1.0 - s3) / 2.0, 0.0])
    for j in range(_CASCADE_LEVEL):
        n_old = v.shape[0] - 1        # old grid spans [0,3] with step 2^-j
        step_old = n_old // 3         # old-grid points per unit, 2^j
        n_new = 2 * n_old
        new = np.zeros(n_new + 1)
        idx = np.arange(n_new + 1)
        for jj, hj in enumerate(h):
            # 2x - jj at new node i sits at old-grid index i - jj * 2^j
            src = idx - jj * step_old
            ok = (src >= 0) & (src <= n_old)
            new[ok] += math.sqrt(2.0) * hj * v[src[ok]]
        v = new
    phi = v  # 3 * 2^12 + 1 values on [0,3]
    # mother psi(x) = sqrt(2) sum g_j phi(2x - j), g_j = (-1)^j h_{3-j}
    g = np.array([h[3], -h[2], h[1], -h[0]])
    n = phi.shape[0] - 1
    step = n // 3                     # phi-table points per unit, 2^12
    psi = np.zeros(n + 1)
    idx = np.arange(n + 1)
    for jj, gj in enumerate(g):
        # 2x - jj at table node i sits at phi index 2i - jj * 2^12
        src = 2 * idx - jj * step
        ok = (src >= 0) & (src <= n)
        psi[ok] += math.sqrt(2.0) * gj * phi[src[ok]]
    return phi, psi


def _table_eval(table: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation of a cascade table over [0,3]; zero outside."""
    n = table.shape[0] - 1
    u = t * (n / 3.0)
    inside = (t >= 0.0) & (t <= 3.0)
    u = np.clip(u, 0.0, float(n))
    i = np.minimum(u.astype(np.int64), n - 1)
    frac = u - i
    vals = table[i] * (1.0 - frac) + table[i + 1] * frac
    return np.where(inside, vals, 0.0)


class _Backend:
    """Per-axis factor evaluation for one wavelet family."""

    def __init__(self, name: str):
        if name not in BACKENDS:
            raise ValueError(f"unknown basis backend {name!r}; choose from {BACKENDS}")
        self.name = name
        self.width = 1 if name == "haar" else 3

    def candidates_per_axis(self) -> int:
        return self.width

    def axis_values(self, x: np.ndarray, scale: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Active translates and factor values along one axis.

        Returns (translates (m, C), father values (m, C), mother values (m, C))
        where C is the support width; only these translates can be nonzero at x.
        Points at the right domain edge are folded into the last cell so the
        basis behaves as the left-limit there.
        """
        pow2 = float(1 << scale)
        cell = np.clip(np.floor(x * pow2).astype(np.int64), 0, (1 << scale) - 1)
        offs = np.arange(self.width - 1, -1, -1, dtype=np.int64)  # width-1 .. 0
        m = cell[:, None] - offs[None, :]
        t = x[:, None] * pow2 - m
        if self.name == "haar":
            father = np.ones_like(t)
            mother = np.where(t < 0.5, 1.0, -1.0)
            return m, father, mother
        phi, psi = _daub4_tables()
        return m, _table_eval(phi, t), _table_eval(psi, t)

    def factor_value(self, kind: int, t: np.ndarray, at_edge: np.ndarray) -> np.ndarray:
        """Single factor w^kind(t); `at_edge` marks t produced by x == 1.

        Haar supports are half-open, so the indicator is [0,1) except that the
        cube's right edge takes the left limit.
        """
        if self.name == "haar":
            inside = ((t >= 0.0) & (t < 1.0)) | (at_edge & (t == 1.0))
            if kind == 0:
                return np.where(inside, 1.0, 0.0)
            return np.where(inside, np.where(t < 0.5, 1.0, -1.0), 0.0)
        phi, psi = _daub4_tables()
        return _table_eval(phi if kind == 0 else psi, t)


class WaveletBasis:
    """Index layout and evaluation for levels 0..J in dimensions 1..dim."""

    def __init__(self, backend: str, J: int, dim: int):
        if J < 0:
            raise ValueError(f"max level J must be >= 0, got {J}")
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.backend = _Backend(backend)
        self.J = int(J)
        self.dim = int(dim)
        self._layout = {k: self._build_layout(k) for k in range(1, dim + 1)}

    # -- layout ------------------------------------------------------------

    def _build_layout(self, k: int) -> list[dict]:
        levels = []
        offset = 0
        width = self.backend.width
        for l in range(self.J + 1):
            scale = l
            if l == 0:
                types = list(itertools.product((0, 1), repeat=k))
            else:
                types = [t for t in itertools.product((0, 1), repeat=k)
                         if any(t)]
            m_lo = 1 - width
            m_hi = (1 << scale) - 1
            per_axis = m_hi - m_lo + 1
            n_tr = per_axis**k
            levels.append({
                "level": l, "scale": scale, "types": types,
                "m_lo": m_lo, "per_axis": per_axis, "n_translates": n_tr,
                "size": len(types) * n_tr, "offset": offset,
                "scale_factor": 2.0 ** (scale * k / 2.0),
            })
            offset += levels[-1]["size"]
        return levels

    def level_size(self, k: int, l: int) -> int:
        return self._layout[k][l]["size"]

    def level_offset(self, k: int, l: int) -> int:
        return self._layout[k][l]["offset"]

    def size(self, k: int) -> int:
        last = self._layout[k][-1]
        return last["offset"] + last["size"]

    def levels_of_indices(self, k: int) -> np.ndarray:
        """Level of every flat coefficient index for component k."""
        out = np.empty(self.size(k), dtype=np.int64)
        for info in self._layout[k]:
            out[info["offset"]:info["offset"] + info["size"]] = info["level"]
        return out

    def index_of(self, k: int, l: int, types: tuple[int, ...],
                 translates: tuple[int, ...]) -> int:
        """1-based in-level index m of the function with given factor kinds."""
        info = self._layout[k][l]
        ti = info["types"].index(tuple(types))
        rel = [t - info["m_lo"] for t in translates]
        if any(r < 0 or r >= info["per_axis"] for r in rel):
            raise ValueError(f"translates {translates} outside the indexed range")
        flat_tr = 0
        for r in rel:
            flat_tr = flat_tr * info["per_axis"] + r
        return ti * info["n_translates"] + flat_tr + 1

    def decode(self, k: int, l: int, m: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Inverse of index_of: (types, translates) of in-level index m."""
        info = self._layout[k][l]
        if not 1 <= m <= info["size"]:
            raise ValueError(f"index m={m} outside 1..{info['size']} at level {l}")
        ti, rem = divmod(m - 1, info["n_translates"])
        rel = []
        for _ in range(k):
            rel.append(rem % info["per_axis"])
            rem //= info["per_axis"]
        rel.reverse()
        return info["types"][ti], tuple(r + info["m_lo"] for r in rel)

    # -- evaluation ---------------------------------------------------------

    def eval_single(self, k: int, l: int, m: int, x: np.ndarray) -> np.ndarray:
        """Value of basis function (l, m) of component k at points (n, >=k)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        types, translates = self.decode(k, l, m)
        info = self._layout[k][l]
        pow2 = float(1 << info["scale"])
        out = np.full(x.shape[0], info["scale_factor"])
        for j in range(k):
            t = x[:, j] * pow2 - translates[j]
            out = out * self.backend.factor_value(types[j], t, x[:, j] == 1.0)
        return out

    def active_terms(self, k: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """All potentially nonzero terms at each point.

        Returns (idx, val) of shape (n, A): flat coefficient indices for
        component k and the basis values there.  A is fixed given (backend, k,
        J), so the arrays are rectangular and gather/scatter friendly.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = x.shape[0]
        idx_cols = []
        val_cols = []
        for info in self._layout[k]:
            axes = [self.backend.axis_values(x[:, j], info["scale"]) for j in range(k)]
            c = self.backend.candidates_per_axis()
            for ti, types in enumerate(info["types"]):
                base = info["offset"] + ti * info["n_translates"]
                for combo in itertools.product(range(c), repeat=k):
                    val = np.full(n, info["scale_factor"])
                    flat = np.zeros(n, dtype=np.int64)
                    for j, cj in enumerate(combo):
                        m, fv, mv = axes[j]
                        val = val * (mv[:, cj] if types[j] else fv[:, cj])
                        flat = flat * info["per_axis"] + (m[:, cj] - info["m_lo"])
                    idx_cols.append(base + flat)
                    val_cols.append(val)
        return np.stack(idx_cols, axis=1), np.stack(val_cols, axis=1)

    def eval_expansion(self, k: int, x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """F(x) = sum of coeff * basis over the truncated index set."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.size(k),):
            raise ValueError(
                f"component {k} expects {self.size(k)} coefficients, "
                f"got {coeffs.shape}")
        idx, val = self.active_terms(k, x)
        return np.sum(coeffs[idx] * val, axis=1)

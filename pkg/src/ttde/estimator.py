"""Penalized maximum-likelihood fitting of rational triangular maps.

The objective is the sample-averaged negative log pullback likelihood plus a
squared wavelet sequence-norm penalty:

    J(theta) = -(1/N) sum_i sum_k [ log e_k(S_k(X_i)) + log d_k S_k(X_i) ]
               + lambda^2 * ||theta||^2_{b-alpha},

with e_k the marginals of the factorized reference.  Both the value and the
analytic gradient differentiate the *discretized* map quadrature exactly, so
finite differences agree to rounding.  Optimization uses limited-memory
quasi-Newton (L-BFGS, memory 10) from the identity initialization theta = 0;
the paper-style schedule lambda = N^(-a/(2a+d)), 2^J ~ N^(1/(2a+d)) is
provided by :func:`tuning_schedule`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from .densities import DensityField, FactorizedDensity, GridSpec, default_grid
from .maps import LinkFunction, RationalTriangularMap, Theta, b_alpha_norm, dyadic_panels
from .metrics import hellinger
from .kr import pullback_density
from .wavelets import WaveletBasis

__all__ = [
    "FitConfig",
    "FitResult",
    "Schedule",
    "tuning_schedule",
    "negative_log_likelihood",
    "objective",
    "gradient",
    "fit",
    "tau_squared",
]

_BOUNDARY_NUDGE = 1e-12
# per-iteration caches above this many floats are rebuilt on the fly instead
_CACHE_BUDGET = 30_000_000


class Schedule(NamedTuple):
    lam: float
    J: int


def tuning_schedule(n: int, alpha: int, d: int) -> Schedule:
    """Theorem-style tuning: lambda = N^(-a/(2a+d)), J = ceil(log2 N/(2a+d))."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if alpha < 1 or d < 1:
        raise ValueError("alpha and d must be positive integers")
    lam = float(n) ** (-alpha / (2.0 * alpha + d))
    j = math.ceil(math.log2(n) / (2.0 * alpha + d))
    return Schedule(lam=lam, J=int(j))


@dataclass
class FitConfig:
    """Everything a fit needs besides the data and the reference."""

    alpha: int = 2
    lam: float = 0.0
    J: int = 2
    link: LinkFunction = field(default_factory=LinkFunction.logistic)
    basis_backend: str = "haar"
    max_iters: int = 500
    gradient_tolerance: float = 1e-6
    theta0: Theta | None = None
    record_trace: bool = False

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.J < 0:
            raise ValueError(f"J must be nonnegative, got {self.J}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be a positive integer, got {self.alpha}")


@dataclass
class FitResult:
    theta_hat: Theta
    objective_value: float
    iterations: int
    converged: bool
    gradient_norm_final: float
    trace: list[float] = field(default_factory=list)

    def to_json_dict(self, include_trace: bool = True) -> dict:
        out = {
            "theta": self.theta_hat.to_json_dict(),
            "objective_value": self.objective_value,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm_final": self.gradient_norm_final,
        }
        if include_trace and self.trace:
            out["trace"] = self.trace
        return out


def _prepare_data(data: np.ndarray, dim: int) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        return np.empty((0, dim))
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[1] != dim:
        raise ValueError(f"data must have shape (N, {dim}), got {data.shape}")
    if np.any(data < 0.0) or np.any(data > 1.0) or not np.all(np.isfinite(data)):
        raise ValueError("data points must lie in the closed unit cube")
    return np.clip(data, _BOUNDARY_NUDGE, 1.0 - _BOUNDARY_NUDGE)


def _log_deriv(marginal: DensityField) -> Callable[[np.ndarray], np.ndarray]:
    """t -> e'(t)/e(t) for one 1-D reference marginal."""
    if marginal.pdf_prime is not None:
        def ratio(t, m=marginal):
            t = t.reshape(-1, 1)
            return m.pdf_prime(t) / m.pdf(t)
        return ratio

    def ratio_fd(t, m=marginal, h=1e-6):
        t = t.reshape(-1, 1)
        up = m.pdf(np.clip(t + h, 0.0, 1.0))
        dn = m.pdf(np.clip(t - h, 0.0, 1.0))
        span = np.clip(t + h, 0.0, 1.0) - np.clip(t - h, 0.0, 1.0)
        return (up - dn) / span.ravel() / m.pdf(t)

    return ratio_fd


class _SeparableTensorNodes:
    """F over (per-sample conditioning) x (node) grids for 2-D components.

    The tensor basis factorizes across the two axes, so evaluating F at every
    pair (x1_i, y_node) reduces to per-level gathers and one small matrix
    product, and per-sample node sets reuse the cached per-sample 1-D
    coefficients; gradient scatters are the exact transposes.  This keeps the
    wide-support Daubechies backend affordable for denominator quadratures.
    """

    def __init__(self, basis: WaveletBasis, x1: np.ndarray, y_nodes: np.ndarray):
        self.n = x1.shape[0]
        self.n_nodes = y_nodes.shape[0]
        self.backend = basis.backend
        self.levels = []
        self._c: list[np.ndarray] = []
        for info in basis._layout[2]:
            s = info["scale"]
            n_tr = info["per_axis"]
            m_lo = info["m_lo"]
            axis_scale = 2.0 ** (s / 2.0)
            m1, father, mother = self.backend.axis_values(x1, s)
            u = np.stack([father, mother], axis=1) * axis_scale    # (N, 2, C)
            translates = np.arange(n_tr) + m_lo
            t = (2.0 ** s) * y_nodes[None, :] - translates[:, None]
            no_edge = np.zeros(t.shape, dtype=bool)
            b = np.stack([self.backend.factor_value(0, t, no_edge),
                          self.backend.factor_value(1, t, no_edge)],
                         axis=0) * axis_scale
            imap = np.full((2, n_tr, 2, n_tr), -1, dtype=np.int64)
            for ti, (t1, t2) in enumerate(info["types"]):
                block = info["offset"] + ti * info["n_translates"]
                grid = block + (np.arange(n_tr)[:, None] * n_tr
                                + np.arange(n_tr)[None, :])
                imap[t1, :, t2, :] = grid
            self.levels.append({
                "u": u, "m1r": m1 - m_lo, "b": b.reshape(2 * n_tr, -1),
                "imap": imap, "n_tr": n_tr, "scale": s, "m_lo": m_lo,
            })

    def prepare(self, y: np.ndarray) -> dict:
        """Precompute theta-independent activity for per-sample nodes y (N, r).

        For each level this holds the flat axis-2 offsets into the per-sample
        coefficient matrix (for evaluation) and the full composite scatter
        index with the u*fac weight products (for the gradient).
        """
        n, r = y.shape
        flat = y.reshape(-1)
        rows = np.repeat(np.arange(n), r)
        sets = []
        for lv in self.levels:
            n_tr = lv["n_tr"]
            m2, father, mother = self.backend.axis_values(flat, lv["scale"])
            fac = np.stack([father, mother], axis=1) * 2.0 ** (lv["scale"] / 2.0)
            m2r = (m2 - lv["m_lo"]).astype(np.int64)
            n_c2 = m2r.shape[1]
            # axis-2 offsets (rows, 2*n_c2) into the flattened (2, n_tr) block
            off2 = (np.arange(2)[None, :, None] * n_tr + m2r[:, None, :])
            off2 = off2.reshape(-1, 2 * n_c2)
            fac2 = fac.reshape(-1, 2 * n_c2)
            # composite scatter index over (t1, m1, t2, m2) and u*fac weights
            u, m1r = lv["u"], lv["m1r"]
            n_c1 = m1r.shape[1]
            base1 = (np.arange(2)[None, :, None] * n_tr
                     + m1r[rows][:, None, :])                # (rows, 2, n_c1)
            cidx = (base1[:, :, :, None] * (2 * n_tr)
                    + off2[:, None, None, :])                # (rows,2,n_c1,2*n_c2)
            ufac = (u[rows][:, :, :, None] * fac2[:, None, None, :])
            sets.append({
                "off2": off2, "fac2": fac2,
                "cidx": cidx.reshape(rows.shape[0], -1).astype(np.int64),
                "ufac": ufac.reshape(rows.shape[0], -1),
            })
        return {"rows": rows, "shape": (n, r), "sets": sets}

    def f_values(self, coeffs: np.ndarray) -> np.ndarray:
        """F at every (sample, shared node); caches the per-sample 1-D
        coefficients for the node-set evaluations of the same iteration."""
        out = np.zeros((self.n, self.n_nodes))
        self._c = []
        for lv in self.levels:
            th = np.where(lv["imap"] >= 0, coeffs[np.maximum(lv["imap"], 0)], 0.0)
            g = th[:, lv["m1r"], :, :]                    # (2, N, C, 2, n_tr)
            c = np.einsum("ntc,tncum->num", lv["u"], g)   # (N, 2, n_tr)
            self._c.append(c)
            out += c.reshape(self.n, -1) @ lv["b"]
        return out

    def f_at(self, prepared: dict) -> np.ndarray:
        """F at a prepared per-sample node set, after f_values."""
        rows = prepared["rows"]
        out = np.zeros(rows.shape[0])
        for c, st in zip(self._c, prepared["sets"]):
            c_flat = c.reshape(self.n, -1)
            out += np.sum(c_flat[rows[:, None], st["off2"]] * st["fac2"], axis=1)
        return out.reshape(prepared["shape"])

    def grad_at(self, grad: np.ndarray, prepared: dict, w: np.ndarray) -> None:
        """Scatter per-row weights w for a prepared node set."""
        for lv, st in zip(self.levels, prepared["sets"]):
            n_tr = lv["n_tr"]
            acc = np.bincount(st["cidx"].ravel(),
                              weights=(w[:, None] * st["ufac"]).ravel(),
                              minlength=4 * n_tr * n_tr)
            acc = acc.reshape(2, n_tr, 2, n_tr)
            valid = lv["imap"] >= 0
            grad += np.bincount(lv["imap"][valid], weights=acc[valid],
                                minlength=grad.shape[0])

    def add_gradient(self, grad: np.ndarray, w: np.ndarray) -> None:
        """Accumulate (dL/dF at shared nodes) @ (dF/dtheta); w is (N, nodes)."""
        for lv in self.levels:
            n_tr = lv["n_tr"]
            gm = (w @ lv["b"].T).reshape(self.n, 2 * n_tr)
            u, m1r = lv["u"], lv["m1r"]
            acc = np.zeros(2 * n_tr * 2 * n_tr)
            inner = np.arange(2 * n_tr)
            for t1 in range(2):
                for a in range(m1r.shape[1]):
                    base = (t1 * n_tr + m1r[:, a]) * (2 * n_tr)
                    cidx = base[:, None] + inner[None, :]
                    acc += np.bincount(
                        cidx.ravel(),
                        weights=(u[:, t1, a][:, None] * gm).ravel(),
                        minlength=acc.shape[0])
            acc = acc.reshape(2, n_tr, 2, n_tr)
            valid = lv["imap"] >= 0
            grad += np.bincount(lv["imap"][valid], weights=acc[valid],
                                minlength=grad.shape[0])


class _ComponentWorkspace:
    """Fixed-node quadrature data for one map component over one data set.

    All basis evaluations at quadrature nodes are independent of theta, so
    they are gathered once; each objective evaluation is then a handful of
    gathers, reductions and scatter-adds.  Denominator nodes are shared across
    samples for the first component, handled separably for two-dimensional
    non-Haar components, and enumerated densely otherwise.
    """

    def __init__(self, k: int, data: np.ndarray, basis: WaveletBasis,
                 link: LinkFunction, eta: FactorizedDensity):
        self.k = k
        self.link = link
        self.basis = basis
        self.size = basis.size(k)
        self.n = data.shape[0]
        self.marginal = eta.marginals[k - 1]
        self.log_deriv = _log_deriv(self.marginal)

        self.edges = dyadic_panels(basis.J)
        n_panels = self.edges.shape[0] - 1
        if basis.backend.name == "haar":
            glx = np.zeros(1)
            glw = np.full(1, 2.0)
        else:
            glx, glw = np.polynomial.legendre.leggauss(8)
        self.glx, self.glw = glx, glw
        q = glx.shape[0]
        lo, hi = self.edges[:-1], self.edges[1:]
        half = 0.5 * (hi - lo)
        self.panel_nodes = (lo[:, None] + half[:, None] * (glx[None, :] + 1.0))
        self.panel_w = half[:, None] * glw[None, :]          # (P, q)

        xk = data[:, k - 1] if self.n else np.empty(0)
        self.ip = np.clip(np.searchsorted(self.edges, xk, side="right") - 1,
                          0, n_panels - 1)
        plo = self.edges[self.ip]
        self.part_half = 0.5 * (xk - plo)                    # (N,)
        part_nodes = plo[:, None] + self.part_half[:, None] * (glx[None, :] + 1.0)

        if k == 1:
            self.den_mode = "shared"
            den_pts = self.panel_nodes.reshape(-1, 1)
        elif k == 2 and basis.backend.name != "haar" and self.n:
            self.den_mode = "separable"
            den_pts = np.empty((0, k))
            self._sep = _SeparableTensorNodes(basis, data[:, 0],
                                              self.panel_nodes.reshape(-1))
        else:
            self.den_mode = "dense"
            cond = data[:, :k - 1]
            den_pts = np.empty((self.n, n_panels * q, k))
            den_pts[:, :, :k - 1] = cond[:, None, :]
            den_pts[:, :, k - 1] = self.panel_nodes.reshape(-1)[None, :]
            den_pts = den_pts.reshape(-1, k)
        if self.den_mode == "separable":
            # per-sample nodes ride on the separable machinery too
            self._part_set = self._sep.prepare(part_nodes)
            self._data_set = self._sep.prepare(xk[:, None])
            part_pts = np.empty((0, k))
            data_pts = np.empty((0, k))
        else:
            part_pts = np.empty((self.n, q, k))
            if k > 1:
                part_pts[:, :, :k - 1] = data[:, None, :k - 1]
            part_pts[:, :, k - 1] = part_nodes
            part_pts = part_pts.reshape(-1, k)
            data_pts = data[:, :k]

        a_terms = basis.active_terms(k, np.zeros((1, k)))[0].shape[1]
        cache_cost = (den_pts.shape[0] + part_pts.shape[0] + data_pts.shape[0]) \
            * a_terms * 2
        self._cached = cache_cost <= _CACHE_BUDGET
        self._den_pts, self._part_pts, self._data_pts = den_pts, part_pts, data_pts
        if self._cached:
            self._den = basis.active_terms(k, den_pts) if den_pts.size else None
            self._part = basis.active_terms(k, part_pts) if part_pts.size else None
            self._data = basis.active_terms(k, data_pts) if data_pts.size else None

    def _terms(self, which: str):
        if self._cached:
            return {"den": self._den, "part": self._part, "data": self._data}[which]
        pts = {"den": self._den_pts, "part": self._part_pts,
               "data": self._data_pts}[which]
        return self.basis.active_terms(self.k, pts) if pts.size else None

    def _f_of(self, terms, coeffs: np.ndarray) -> np.ndarray:
        idx, val = terms
        return np.sum(coeffs[idx] * val, axis=1)

    def nll_and_grad(self, coeffs: np.ndarray, want_grad: bool):
        """Mean negative log pullback likelihood for this component.

        Returns (value, grad or None); value is averaged over samples (0 for
        an empty data set).
        """
        link = self.link
        n_panels, q = self.panel_nodes.shape
        if self.n == 0:
            return 0.0, (np.zeros(self.size) if want_grad else None)
        den_terms = None
        if self.den_mode == "separable":
            f_den = self._sep.f_values(coeffs).reshape(-1)
        else:
            den_terms = self._terms("den")
            f_den = self._f_of(den_terms, coeffs)
        phi_den = link.phi(f_den)

        if self.den_mode == "shared":
            phi_grid = phi_den.reshape(n_panels, q)
            panel_int = np.sum(self.panel_w * phi_grid, axis=1)      # (P,)
            prefix = np.concatenate([[0.0], np.cumsum(panel_int)])
            base = prefix[self.ip]
            denom_i = np.full(self.n, prefix[-1])
        else:
            phi_grid = phi_den.reshape(self.n, n_panels, q)
            panel_int = np.einsum("pq,npq->np", self.panel_w, phi_grid)
            prefix = np.concatenate(
                [np.zeros((self.n, 1)), np.cumsum(panel_int, axis=1)], axis=1)
            denom_i = prefix[:, -1]
            base = prefix[np.arange(self.n), self.ip]

        if self.den_mode == "separable":
            f_part = self._sep.f_at(self._part_set)
            f_data = self._sep.f_at(self._data_set).reshape(-1)
            part_terms = data_terms = None
        else:
            part_terms = self._terms("part")
            f_part = self._f_of(part_terms, coeffs).reshape(self.n, q)
            data_terms = self._terms("data")
            f_data = self._f_of(data_terms, coeffs)
        phi_part = link.phi(f_part)
        partial = self.part_half * (phi_part @ self.glw)
        numer = base + partial
        s_val = numer / denom_i

        phi_data = link.phi(f_data)
        e_val = self.marginal.pdf(s_val.reshape(-1, 1))
        nll = float(np.mean(-(np.log(e_val) + np.log(phi_data) - np.log(denom_i))))

        if not want_grad:
            return nll, None

        grad = np.zeros(self.size)
        inv_n = 1.0 / self.n
        r = self.log_deriv(s_val)                      # e'/e at S
        c_data = -inv_n * link.phi_prime(f_data) / phi_data

        # partial-panel nodes appear only inside the numerator A
        dphi_part = link.phi_prime(f_part)
        c_part = (-inv_n * r / denom_i)[:, None] * \
            (self.part_half[:, None] * self.glw[None, :]) * dphi_part
        if self.den_mode == "separable":
            self._sep.grad_at(grad, self._data_set, c_data)
            self._sep.grad_at(grad, self._part_set, c_part.reshape(-1))
        else:
            _scatter(grad, data_terms, c_data)
            _scatter(grad, part_terms, c_part.reshape(-1))

        # denominator nodes: coefficient mixes the -log D term, the A term
        # through S, and the D term through S
        dphi_den = link.phi_prime(f_den)
        c_full = -inv_n * r / denom_i                  # weight of full panels in A
        c_den = inv_n * (1.0 + r * s_val) / denom_i    # weight of D' terms
        if self.den_mode == "shared":
            # shared nodes: aggregate per-sample coefficients per panel
            bins = np.zeros(n_panels + 1)
            np.add.at(bins, self.ip, c_full)
            in_a_mass = np.cumsum(bins[::-1])[::-1][1:]   # sum of c_full over ip > p
            node_coef = (np.sum(c_den) + in_a_mass)[:, None] * self.panel_w
            _scatter(grad, den_terms, (node_coef.reshape(-1) * dphi_den))
        else:
            in_a = (np.arange(n_panels)[None, :] < self.ip[:, None])
            node_coef = (c_den[:, None] + np.where(in_a, c_full[:, None], 0.0))
            w_nodes = (node_coef[:, :, None] * self.panel_w[None, :, :]).reshape(self.n, -1)
            w_nodes = w_nodes * dphi_den.reshape(self.n, -1)
            if self.den_mode == "separable":
                self._sep.add_gradient(grad, w_nodes)
            else:
                _scatter(grad, den_terms, w_nodes.reshape(-1))
        return nll, grad


def _scatter(out: np.ndarray, terms, coef: np.ndarray) -> None:
    """Accumulate coef[row] * val[row, a] into out[idx[row, a]]."""
    idx, val = terms
    flat = (val * coef[:, None]).ravel()
    out += np.bincount(idx.ravel(), weights=flat, minlength=out.shape[0])


class _Workspace:
    """Joint objective/gradient evaluator over all components."""

    def __init__(self, data: np.ndarray, eta: FactorizedDensity,
                 config: FitConfig):
        if not isinstance(eta, FactorizedDensity):
            raise ValueError("the reference density must be factorized")
        self.dim = eta.dim
        self.data = _prepare_data(data, self.dim)
        self.config = config
        self.basis = WaveletBasis(config.basis_backend, config.J, self.dim)
        self.link = config.link
        self.components = [
            _ComponentWorkspace(k, self.data, self.basis, self.link, eta)
            for k in range(1, self.dim + 1)
        ]
        self.sizes = [c.size for c in self.components]
        self.pen_weights = np.concatenate([
            np.exp2(2.0 * config.alpha * self.basis.levels_of_indices(k))
            for k in range(1, self.dim + 1)
        ])

    def split(self, vec: np.ndarray) -> list[np.ndarray]:
        return np.split(vec, np.cumsum(self.sizes)[:-1])

    def nll(self, vec: np.ndarray) -> float:
        parts = self.split(vec)
        return sum(c.nll_and_grad(p, want_grad=False)[0]
                   for c, p in zip(self.components, parts))

    def value_and_grad(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        parts = self.split(vec)
        total = 0.0
        grads = []
        for c, p in zip(self.components, parts):
            v, g = c.nll_and_grad(p, want_grad=True)
            total += v
            grads.append(g)
        grad = np.concatenate(grads)
        lam2 = self.config.lam**2
        total += lam2 * float(self.pen_weights @ (vec * vec))
        grad += 2.0 * lam2 * self.pen_weights * vec
        return total, grad

    def theta(self, vec: np.ndarray) -> Theta:
        return Theta.from_vector(self.basis, self.config.alpha, vec)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def negative_log_likelihood(theta: Theta, data: np.ndarray,
                            eta: FactorizedDensity,
                            link: LinkFunction | None = None) -> float:
    """-(1/N) sum_i log S_theta^# eta (X_i); 0 for an empty data set."""
    link = link or LinkFunction.logistic()
    cfg = FitConfig(alpha=theta.alpha, lam=0.0, J=theta.J, link=link,
                    basis_backend=theta.basis.backend.name)
    ws = _Workspace(data, eta, cfg)
    return ws.nll(theta.to_vector())


def objective(theta: Theta, data: np.ndarray, eta: FactorizedDensity,
              config: FitConfig) -> float:
    """Penalized objective: mean NLL + lambda^2 ||theta||^2_{b-alpha}."""
    ws = _Workspace(data, eta, config)
    return ws.value_and_grad(theta.to_vector())[0]


def gradient(theta: Theta, data: np.ndarray, eta: FactorizedDensity,
             config: FitConfig) -> Theta:
    """Analytic gradient of :func:`objective`, as a Theta-shaped vector."""
    ws = _Workspace(data, eta, config)
    _, g = ws.value_and_grad(theta.to_vector())
    return Theta.from_vector(ws.basis, config.alpha, g)


def fit(data: np.ndarray, eta: FactorizedDensity, config: FitConfig) -> FitResult:
    """Minimize the penalized objective by L-BFGS from the identity map.

    Non-convergence within ``max_iters`` is reported through the ``converged``
    flag (final gradient inf-norm against the stationarity tolerance scaled by
    max(1, |objective|)), never as an exception.  Deterministic given the data
    order and configuration.
    """
    ws = _Workspace(data, eta, config)
    if config.theta0 is not None:
        x0 = config.theta0.to_vector().copy()
        if x0.shape[0] != sum(ws.sizes):
            raise ValueError("theta0 does not match the configured basis size")
    else:
        x0 = np.zeros(sum(ws.sizes))

    trace: list[float] = []
    callback = None
    if config.record_trace:
        trace.append(float(ws.value_and_grad(x0)[0]))

        def callback(xk):
            trace.append(float(ws.value_and_grad(xk)[0]))

    res = minimize(
        ws.value_and_grad, x0, jac=True, method="L-BFGS-B",
        options={
            "maxcor": 10,
            "maxiter": config.max_iters,
            "maxfun": 20 * config.max_iters + 100,
            "ftol": 1e-14,
            "gtol": config.gradient_tolerance,
        },
        callback=callback,
    )
    value, grad = ws.value_and_grad(res.x)
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    converged = gnorm <= config.gradient_tolerance * max(1.0, abs(value))
    return FitResult(
        theta_hat=ws.theta(res.x),
        objective_value=float(value),
        iterations=int(res.nit),
        converged=bool(converged),
        gradient_norm_final=gnorm,
        trace=trace,
    )


def tau_squared(theta: Theta, p_truth: DensityField, eta: FactorizedDensity,
                lam: float, alpha: int | None = None,
                link: LinkFunction | None = None,
                grid: GridSpec | None = None) -> float:
    """h^2(S_theta^# eta, p) + lambda^2 pen(theta)^2, the tuned risk proxy."""
    link = link or LinkFunction.logistic()
    grid = grid or default_grid(p_truth.dim)
    s_map = RationalTriangularMap.from_theta(theta, link)
    p_hat = pullback_density(s_map, eta)
    h = hellinger(p_hat, p_truth, grid)
    pen = b_alpha_norm(theta, alpha if alpha is not None else theta.alpha)
    return h * h + (lam * pen) ** 2

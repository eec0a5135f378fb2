"""Time slabs, exponentially weighted right Gauss-Radau rules and the
Lagrange interpolants built on their nodes.

Slabs are indexed from 0 in code: slab ``n`` is the interval
(t[n], t[n + 1]].
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L

from porostdg.errors import InputError, NumericError


class TimeMesh:
    def __init__(self, endpoints):
        t = np.asarray(endpoints, dtype=float)
        if t.ndim != 1 or len(t) < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise InputError("time mesh endpoints must start at 0 and increase strictly")
        self.t = t

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeMesh":
        if T <= 0 or N < 1:
            raise InputError(f"need T > 0 and N >= 1, got T={T}, N={N}")
        t = np.linspace(0.0, T, int(N) + 1)
        t[-1] = T
        return cls(t)

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def tau(self) -> float:
        return float(self.taus.max())

    def slab_of(self, t: float) -> int:
        """Index of the slab (t[n], t[n+1]] containing t; t = 0 maps to slab 0."""
        n = int(np.searchsorted(self.t, t, side="left")) - 1
        return min(max(n, 0), self.N - 1)


def _weight_recurrence(k: int, c: float):
    """Monic recurrence coefficients (alpha_0..k, beta_0..k) of e^{-c(t+1)} on (-1, 1).

    Discretized Stieltjes procedure on a Gauss-Legendre discretization of the
    measure; the weight is entire, so a few dozen points already reproduce all
    needed moments to machine precision, with no cancellation as c -> 0.
    """
    m = 64 + 4 * int(np.ceil(c))
    x, w = L.leggauss(m)
    w = w * np.exp(-c * (x + 1.0))
    alpha = np.zeros(k + 1)
    beta = np.zeros(k + 1)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    beta[0] = nrm = w.sum()
    for j in range(k + 1):
        alpha[j] = np.sum(w * x * p * p) / nrm
        if j == k:
            break
        p_next = (x - alpha[j]) * p - beta[j] * p_prev
        nrm_next = np.sum(w * p_next * p_next)
        beta[j + 1] = nrm_next / nrm
        p_prev, p, nrm = p, p_next, nrm_next
    return alpha, beta


@lru_cache(maxsize=256)
def _radau_cached(k: int, c: float):
    alpha, beta = _weight_recurrence(k, c)
    a = 1.0
    # monic orthogonal polynomials at the fixed node
    pm, p = 0.0, 1.0
    for j in range(k):
        pm, p = p, (a - alpha[j]) * p - beta[j] * pm
    if k > 0 and p == 0.0:
        raise NumericError(f"Radau modification breaks down: pi_k(1) = 0 (k={k}, c={c})")
    diag = alpha.copy()
    diag[k] = a - (beta[k] * pm / p if k > 0 else 0.0)
    J = np.diag(diag) + np.diag(np.sqrt(beta[1:k + 1]), 1) + np.diag(np.sqrt(beta[1:k + 1]), -1)
    nodes, vecs = np.linalg.eigh(J)
    weights = beta[0] * vecs[0] ** 2
    if not (abs(nodes[-1] - 1.0) < 1e-10 and nodes[0] > -1.0 and np.all(weights > 0)):
        raise NumericError(
            f"weighted Radau rule failed for k={k}, c={c}: nodes={nodes}, weights={weights}, "
            f"beta={beta}")
    nodes[-1] = 1.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def weighted_gauss_radau(k: int, c: float):
    """Right-sided (k+1)-point Gauss-Radau rule for the weight e^{-c(t+1)} on (-1, 1].

    The rule is exact for polynomials of degree <= 2k and its last node is +1.
    """
    if k < 0 or c < 0:
        raise InputError(f"need k >= 0 and c >= 0, got k={k}, c={c}")
    nodes, weights = _radau_cached(int(k), float(c))
    return nodes.copy(), weights.copy()


def lagrange_matrix(nodes, x, derivative: bool = False) -> np.ndarray:
    """Values (or derivatives) of the Lagrange basis on ``nodes`` at ``x``.

    Shape (len(x), len(nodes)).
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    V = np.vander(nodes, n, increasing=True)
    coef = np.linalg.inv(V)  # column j: monomial coefficients of l_j
    if derivative:
        coef = (np.arange(1, n)[:, None] * coef[1:]) if n > 1 else np.zeros((1, 1))
    return np.vander(x, coef.shape[0], increasing=True) @ coef


class TemporalRule:
    """Per-slab weighted Radau nodes and weights for a time mesh, degree k, weight nu.

    ``weights(n)`` already include the factor tau_n / 2, so
    ``weights(n) @ w(nodes(n))`` approximates the weighted slab integral
    of w with weight e^{-2 nu (t - t_n)}.
    """

    def __init__(self, time_mesh: TimeMesh, k: int, nu: float):
        if k < 0:
            raise InputError("time degree k must be >= 0")
        if nu < 0:
            raise InputError("weight nu must be >= 0")
        self.time_mesh = time_mesh
        self.k = int(k)
        self.nu = float(nu)

    @property
    def N(self) -> int:
        return self.time_mesh.N

    def tau(self, n: int) -> float:
        return float(self.time_mesh.taus[n])

    def reference(self, n: int):
        return weighted_gauss_radau(self.k, self.nu * self.tau(n))

    def nodes(self, n: int) -> np.ndarray:
        t0, t1 = self.time_mesh.t[n], self.time_mesh.t[n + 1]
        ref, _ = self.reference(n)
        out = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * ref
        out[-1] = t1
        return out

    def weights(self, n: int) -> np.ndarray:
        return 0.5 * self.tau(n) * self.reference(n)[1]

    def slab_factor(self, n: int) -> float:
        """e^{-2 nu t_n}, the weight of slab n in the global time-mesh norms."""
        return float(np.exp(-2.0 * self.nu * self.time_mesh.t[n]))

    def quadrature(self, n: int, values) -> np.ndarray:
        """Q_n applied to node values (first axis = nodes)."""
        return np.tensordot(self.weights(n), np.asarray(values, dtype=float), axes=1)

    def all_nodes(self) -> np.ndarray:
        return np.array([self.nodes(n) for n in range(self.N)])


class RadauInterpolant:
    """Piecewise degree-k polynomial through t=0 and all Radau nodes.

    Left-continuous: on (t_n, t_{n+1}] the slab polynomial is used, at t = 0
    the initial value.
    """

    def __init__(self, rule: TemporalRule, initial, values):
        values = np.asarray(values, dtype=float)
        if values.shape[:2] != (rule.N, rule.k + 1):
            raise InputError(f"expected node data of shape ({rule.N}, {rule.k + 1}, ...), "
                             f"got {values.shape}")
        self.rule = rule
        self.initial = np.asarray(initial, dtype=float)
        self.values = values

    def _slab_poly(self, n):
        return self.rule.nodes(n), self.values[n]

    def __call__(self, t, derivative: bool = False):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t),) + self.values.shape[2:])
        tm = self.rule.time_mesh
        for i, ti in enumerate(t):
            if ti == 0.0 and not derivative and self.initial.size:
                out[i] = self.initial
                continue
            n = tm.slab_of(ti)
            nodes, vals = self._slab_poly(n)
            out[i] = np.tensordot(lagrange_matrix(nodes, [ti], derivative)[0], vals, axes=1)
        return out


class RadauPlusInterpolant(RadauInterpolant):
    """Continuous piecewise degree-(k+1) interpolant through t_n and the Radau nodes."""

    def _slab_poly(self, n):
        left = self.initial if n == 0 else self.values[n - 1, -1]
        nodes = np.concatenate([[self.rule.time_mesh.t[n]], self.rule.nodes(n)])
        return nodes, np.concatenate([np.asarray(left)[None], self.values[n]])

    def __call__(self, t, derivative: bool = False):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t),) + self.values.shape[2:])
        for i, ti in enumerate(t):
            n = self.rule.time_mesh.slab_of(ti)
            nodes, vals = self._slab_poly(n)
            out[i] = np.tensordot(lagrange_matrix(nodes, [ti], derivative)[0], vals, axes=1)
        return out


def _check_missing(initial, values):
    if initial is None or values is None:
        raise InputError("node data missing: both the value at t=0 and all slab node values are required")
    if np.any(~np.isfinite(np.asarray(values, dtype=float))) or np.any(
            ~np.isfinite(np.asarray(initial, dtype=float))):
        raise InputError("node data contains missing (non-finite) entries")


def interpolate_radau(rule: TemporalRule, initial, values) -> RadauInterpolant:
    """I_tau: interpolant of f(0) and f at every Radau node (``values[n, mu]``)."""
    _check_missing(initial, values)
    return RadauInterpolant(rule, initial, values)


def interpolate_radau_plus(rule: TemporalRule, initial, values) -> RadauPlusInterpolant:
    """Continuous interpolant of degree k+1 through t_n and the Radau nodes of each slab.

    The left endpoint value of slab n > 0 is the last node value of slab n - 1
    (the same point t_n), so only f(0) and the node values are needed.
    """
    _check_missing(initial, values)
    return RadauPlusInterpolant(rule, initial, values)


def sample_nodes(rule: TemporalRule, f):
    """(f(0), array of f at all Radau nodes) for a function of time."""
    vals = np.array([[f(t) for t in rule.nodes(n)] for n in range(rule.N)])
    return np.asarray(f(0.0)), vals


def weighted_norms(rule: TemporalRule, values, kind: str = "pairing", gram=None,
                   slab: int | None = None) -> float:
    """Squared time-mesh norms from node values ``values[n, mu, ...]``.

    kind="pairing":  ||w||^2 = sum_n e^{-2 nu t_n} Q_n[<w, w>]
    kind="value":    |w|^2   = sum_n e^{-2 nu t_n} Q_n[w]   (w >= 0 required)

    ``gram`` (matrix) defines <w, w> = w^T G w for vector-valued w; otherwise
    the Euclidean product over trailing axes is used.  With ``slab`` given
    only that slab's Q_n term is returned, without the e^{-2 nu t_n} factor.
    """
    values = np.asarray(values, dtype=float)
    if kind == "value":
        if np.any(values < 0):
            raise InputError("|w|_{tau,nu} needs a nonnegative integrand")
        pointwise = values
    elif kind == "pairing":
        if gram is not None:
            pointwise = np.einsum("nmi,nmi->nm", values, np.asarray(
                [[gram @ values[n, m] for m in range(values.shape[1])] for n in range(values.shape[0])]))
        else:
            pointwise = (values ** 2).reshape(values.shape[0], values.shape[1], -1).sum(axis=-1)
    else:
        raise InputError(f"unknown norm kind {kind!r}")
    if slab is not None:
        return float(rule.quadrature(slab, pointwise[slab]))
    return float(sum(rule.slab_factor(n) * rule.quadrature(n, pointwise[n]) for n in range(rule.N)))

"""Slab-by-slab solution of the fully discrete space-time problem.

On slab n the discrete solution is a polynomial of degree k in time with
values in the discrete space; it is represented by its values at the k+1
weighted Radau nodes of the slab (Lagrange basis on those nodes).  With test
functions ell_lambda(t) V the slab equations read, for lambda = 0..k,

    sum_mu [ omega_lambda ell'_mu(t_lambda) + ell_lambda(t_n) ell_mu(t_n) ] M0 U_mu
        + w_lambda L U_lambda  =  w_lambda b(t_lambda) + ell_lambda(t_n) M0 U^-(t_n)

where L = M1 + A_h + J_partial + J_gamma, w are the physical weighted Radau
weights, omega the reference weights and b(t) the load vector of the source.
The derivative pairing has polynomial degree 2k - 1 and is therefore
integrated exactly by the weighted rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from porostdg.errors import InputError, SolverError
from porostdg.fespace import GROUPS, DiscreteSpace, load_vector, project_l2
from porostdg.operators import OperatorSet
from porostdg.timeslab import TemporalRule, lagrange_matrix

RESIDUAL_TOL = 1e-10


def initial_state(initial, space: DiscreteSpace) -> np.ndarray:
    """L2 projection of the initial datum; ``initial(x, y)`` returns the eight fields."""
    if initial is None:
        return np.zeros(space.dim)
    return project_l2(initial, space)


def temporal_blocks(rule: TemporalRule, n: int):
    """(derivative+jump block, value weights, left-endpoint values) for slab n."""
    ref, omega = rule.reference(n)
    left = lagrange_matrix(ref, [-1.0])[0]
    deriv = omega[:, None] * lagrange_matrix(ref, ref, derivative=True)
    return deriv + np.outer(left, left), rule.weights(n), left


def _factor(matrix, pivoting: bool):
    """Sparse LU.  Without pivoting, SuperLU keeps the symmetric minimum-degree
    ordering of A + A^T, which cuts fill several times for the DG block
    structure; the caller checks the residual and refactors with pivoting
    if that ever loses accuracy."""
    matrix = sp.csc_matrix(matrix)
    if pivoting:
        return spla.splu(matrix)
    return spla.splu(matrix, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options=dict(SymmetricMode=True))


class TemporalDiagonalLU:
    """Solver for kron(Tb, M0) + kron(diag(w), L) through the eigen-decomposition
    of diag(w)^-1 Tb: k+1 decoupled (complex) systems (lambda M0 + L) of the
    spatial size.  Complex-conjugate eigenvalues share one factorization.
    """

    def __init__(self, time_block, w, M0, L, pivoting: bool = False):
        self.pivoting = pivoting
        self.w = np.asarray(w, dtype=float)
        lam, V = np.linalg.eig(time_block / self.w[:, None])
        if np.linalg.cond(V) > 1e8:
            raise np.linalg.LinAlgError("temporal block is not safely diagonalizable")
        self.lam, self.V, self.Vinv = lam, V, np.linalg.inv(V)
        self.dim = M0.shape[0]
        self._lu = {}
        self._map = []
        for val in lam:
            key = (round(val.real, 12), round(abs(val.imag), 12))
            if key not in self._lu:
                mat = (val.real if key[1] == 0.0 else complex(val.real, abs(val.imag))) * M0 + L
                self._lu[key] = _factor(mat, pivoting)
            self._map.append((key, val.imag < 0))

    def solve(self, rhs, trans: str = "N"):
        if trans != "N":
            raise NotImplementedError("transposed solves are not supported")
        b = (np.asarray(rhs, dtype=float).reshape(len(self.w), self.dim) / self.w[:, None])
        y = self.Vinv @ b
        z = np.empty(y.shape, dtype=complex)
        for i, (key, conj) in enumerate(self._map):
            lu = self._lu[key]
            if key[1] == 0.0:  # real factor: real and imaginary parts separately
                z[i] = lu.solve(y[i].real) + 1j * lu.solve(y[i].imag)
            else:
                z[i] = np.conj(lu.solve(np.conj(y[i]))) if conj else lu.solve(y[i])
        return (self.V @ z).real.ravel()


@dataclass
class SlabSystem:
    n: int
    matrix: sp.csc_matrix
    rhs: np.ndarray
    factor: object = field(default=None, repr=False)
    parts: tuple = field(default=None, repr=False)  # (time_block, w, M0, L)

    def factorize(self, method: str = "diagonal"):
        """LU factorization; ``diagonal`` decouples the temporal block, ``monolithic``
        factors the full space-time matrix."""
        if self.factor is None:
            try:
                if method == "diagonal" and self.parts is not None:
                    try:
                        self.factor = TemporalDiagonalLU(*self.parts)
                    except np.linalg.LinAlgError:
                        self.factor = spla.splu(self.matrix)
                else:
                    self.factor = spla.splu(self.matrix)
            except RuntimeError as exc:  # exactly singular
                raise SolverError(self.n, np.inf, f"factorization failed: {exc}") from exc
        return self.factor


def slab_matrix(ops: OperatorSet, rule: TemporalRule, n: int) -> sp.csc_matrix:
    time_block, w, _ = temporal_blocks(rule, n)
    return (sp.kron(time_block, ops.M0) + sp.kron(sp.diags(w), ops.spatial)).tocsc()


def slab_parts(ops: OperatorSet, rule: TemporalRule, n: int):
    time_block, w, _ = temporal_blocks(rule, n)
    return time_block, w, ops.M0, ops.spatial


def slab_rhs(ops: OperatorSet, rule: TemporalRule, n: int, source, prev_trace) -> np.ndarray:
    _, w, left = temporal_blocks(rule, n)
    dim = ops.space.dim
    rhs = np.kron(left, ops.M0 @ np.asarray(prev_trace, dtype=float))
    if source is not None:
        for lam, t in enumerate(rule.nodes(n)):
            rhs[lam * dim:(lam + 1) * dim] += w[lam] * load_vector(
                lambda x, y: source(t, x, y), ops.space)
    return rhs


def assemble_slab(ops: OperatorSet, rule: TemporalRule, n: int, source, prev_trace) -> SlabSystem:
    """Space-time system of slab ``n``.

    ``source(t, x, y)`` returns the eight components of the right-hand side
    (None for a homogeneous problem); ``prev_trace`` is U^-(t_n).
    """
    if not 0 <= n < rule.N:
        raise InputError(f"slab index {n} out of range 0..{rule.N - 1}")
    return SlabSystem(n, slab_matrix(ops, rule, n), slab_rhs(ops, rule, n, source, prev_trace),
                      parts=slab_parts(ops, rule, n))


def condition_estimate(matrix, factor=None) -> float:
    """1-norm condition estimate (uses an existing LU factor if given)."""
    if factor is None or isinstance(factor, TemporalDiagonalLU):
        try:
            factor = spla.splu(sp.csc_matrix(matrix))
        except RuntimeError:
            return float("inf")
    inv = spla.LinearOperator(matrix.shape, matvec=factor.solve, rmatvec=lambda x: factor.solve(x, "T"))
    return float(spla.onenormest(matrix) * spla.onenormest(inv))


def _refined_solve(system: SlabSystem, factor):
    x = factor.solve(system.rhs)
    if isinstance(factor, TemporalDiagonalLU):
        x += factor.solve(system.rhs - system.matrix @ x)
    return x, np.linalg.norm(system.matrix @ x - system.rhs)


def solve_slab(system: SlabSystem) -> np.ndarray:
    """Solve and verify the relative residual; returns the flat (k+1)*dim vector."""
    factor = system.factorize()
    x, res = _refined_solve(system, factor)
    bnorm = np.linalg.norm(system.rhs)
    if isinstance(factor, TemporalDiagonalLU) and not factor.pivoting and not (
            np.all(np.isfinite(x)) and res <= RESIDUAL_TOL * bnorm):
        factor = system.factor = TemporalDiagonalLU(*system.parts, pivoting=True)
        x, res = _refined_solve(system, factor)
    if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL * bnorm:
        cond = condition_estimate(system.matrix, factor)
        rel = res / bnorm if bnorm else res
        raise SolverError(system.n, cond, f"relative residual {rel:.3e} exceeds {RESIDUAL_TOL:g}")
    return x


@dataclass
class Trajectory:
    """Node values of the fully discrete solution.

    ``values[n, mu]`` is the coefficient vector at the mu-th Radau node of
    slab n; the last node of each slab is its right endpoint, so
    ``values[n, -1]`` is the trace U^-(t_{n+1}).
    """

    rule: TemporalRule
    space: DiscreteSpace
    initial: np.ndarray
    values: np.ndarray

    @property
    def traces(self) -> np.ndarray:
        """U^-(t_0) = U_{0,h}, U^-(t_1), ..., U^-(t_N)."""
        return np.concatenate([self.initial[None], self.values[:, -1]])

    def left_limit(self, n: int) -> np.ndarray:
        """U^+(t_n), slab n's polynomial evaluated at its left endpoint."""
        ref, _ = self.rule.reference(n)
        return lagrange_matrix(ref, [-1.0])[0] @ self.values[n]

    def jump(self, n: int) -> np.ndarray:
        """[[U]]_n = U^+(t_n) - U^-(t_n)."""
        return self.left_limit(n) - self.traces[n]

    def __call__(self, t: float) -> np.ndarray:
        """Left-continuous evaluation; returns U_{0,h} at t = 0."""
        if t == 0.0:
            return self.initial.copy()
        n = self.rule.time_mesh.slab_of(t)
        return lagrange_matrix(self.rule.nodes(n), [t])[0] @ self.values[n]

    def energies(self, M0) -> np.ndarray:
        return np.array([u @ (M0 @ u) for u in self.traces])


def march(ops: OperatorSet, rule: TemporalRule, source=None, initial=None) -> Trajectory:
    """Solve slab after slab; slab n consumes the trace U^-(t_n) of slab n-1.

    ``initial`` is a coefficient vector (e.g. from :func:`initial_state`);
    the factorization is reused across slabs with the same width.
    """
    space = ops.space
    u0 = np.zeros(space.dim) if initial is None else np.asarray(initial, dtype=float)
    if u0.shape != (space.dim,):
        raise InputError(f"initial vector has shape {u0.shape}, expected ({space.dim},)")
    k1 = rule.k + 1
    values = np.empty((rule.N, k1, space.dim))
    factors = {}
    trace = u0
    for n in range(rule.N):
        key = rule.tau(n)
        if key not in factors:
            fresh = SlabSystem(n, slab_matrix(ops, rule, n), None, parts=slab_parts(ops, rule, n))
            factors[key] = (fresh.matrix, fresh.factorize(), fresh.parts)
        matrix, factor, parts = factors[key]
        system = SlabSystem(n, matrix, slab_rhs(ops, rule, n, source, trace), factor, parts)
        values[n] = solve_slab(system).reshape(k1, space.dim)
        factors[key] = (matrix, system.factor, parts)  # keeps a pivoting refactorization
        trace = values[n, -1]
    return Trajectory(rule, space, u0, values)


def write_trajectory_csv(path, trajectory: Trajectory, M0) -> None:
    """Per slab end: n, t_n, L2 norms of v, sigma, p, qbar and the energy <M0 U, U>."""
    space = trajectory.space
    G = space.mass_matrix
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "norm_v", "norm_sigma", "norm_p", "norm_qbar", "energy"])
        for n, (t, u) in enumerate(zip(trajectory.rule.time_mesh.t, trajectory.traces)):
            norms = []
            for g in GROUPS:
                mask = space.group_mask(g)
                um = np.where(mask, u, 0.0)
                norms.append(np.sqrt(max(um @ (G @ um), 0.0)))
            w.writerow([n, f"{t:.16e}"] + [f"{x:.16e}" for x in norms] + [f"{u @ (M0 @ u):.16e}"])

"""Spatial operators of the fully discrete scheme.

Every matrix ``B`` here represents a bilinear form:  ``B[i, j] = b(phi_j, phi_i)``,
i.e. rows are test functions and columns trial functions, so that
``Z @ B @ Y = b(Y, Z)``.

All first-order couplings are built from one scalar DG derivative form per
direction c,

    D_c(y, z) = sum_K (d_c y, z)_K - sum_{interior e} ([[y]], {{z}} n_c)_e
                - sum_{boundary e} (y, z n_c)_e,

which is simultaneously grad_dg y tested with the c-th component of a vector
and div_dg of a vector (c-th component y) tested with a scalar.  The boundary
form B_c(y, z) = sum_{boundary e} (y, z n_c)_e satisfies D_c + D_c^T = -B_c.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from porostdg.errors import InfeasibleCoercivity, InputError
from porostdg.fespace import FIELD_WEIGHTS, N_FIELDS, DiscreteSpace

V1, V2, S11, S22, S12, P, Q1, Q2 = range(N_FIELDS)
VEL = (V1, V2)
FLUX = (Q1, Q2)
# (i, j) entry of the symmetric stress -> field index
STRESS = {(0, 0): S11, (1, 1): S22, (0, 1): S12, (1, 0): S12}


@dataclass(frozen=True)
class MaterialParams:
    """Constant coefficients: density, Biot coupling, storage, Lame pair, permeability."""

    rho: float = 1.0
    alpha: float = 1.0
    c0: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    K: np.ndarray = field(default_factory=lambda: np.eye(2))
    # sign of the alpha^2 K^-1 entry on the velocity block of M1; -1 is the
    # standard flux form used throughout, +1 the variant obtained by eliminating
    # q = qbar - alpha v from the second-order system
    coupling_sign: int = -1

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        object.__setattr__(self, "K", K)
        if not (self.rho > 0 and self.c0 > 0 and self.mu > 0):
            raise InputError("need rho > 0, c0 > 0 and mu > 0")
        if self.alpha < 0 or self.lam < 0:
            raise InputError("need alpha >= 0 and lambda >= 0")
        if K.shape != (2, 2) or not np.allclose(K, K.T, rtol=0, atol=1e-14 * abs(K).max()):
            raise InputError("permeability K must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(K).min() <= 0:
            raise InputError("permeability K must be positive definite")
        if self.coupling_sign not in (-1, 1):
            raise InputError("coupling_sign must be -1 or +1")

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    def stiffness(self, eps: np.ndarray) -> np.ndarray:
        """C eps for a full 2x2 strain (broadcast over leading axes)."""
        tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
        return 2 * self.mu * eps + self.lam * tr * np.eye(2)

    def compliance(self, sigma: np.ndarray) -> np.ndarray:
        """S sigma, the inverse of ``stiffness`` (plane, d = 2)."""
        tr = np.trace(sigma, axis1=-2, axis2=-1)[..., None, None]
        beta = self.lam / (2 * self.mu + 2 * self.lam)
        return (sigma - beta * tr * np.eye(2)) / (2 * self.mu)

    @property
    def compliance_voigt(self) -> np.ndarray:
        """3x3 matrix of the form <S sigma, tau> in (s11, s22, s12) coordinates."""
        beta = self.lam / (2 * self.mu + 2 * self.lam)
        return np.array([[1 - beta, -beta, 0.0], [-beta, 1 - beta, 0.0], [0.0, 0.0, 2.0]]) / (2 * self.mu)

    def pointwise_m0(self) -> np.ndarray:
        m = np.zeros((N_FIELDS, N_FIELDS))
        m[V1, V1] = m[V2, V2] = self.rho
        m[S11:S12 + 1, S11:S12 + 1] = self.compliance_voigt
        m[P, P] = self.c0
        return m

    def pointwise_m1(self) -> np.ndarray:
        Ki, a = self.K_inv, self.alpha
        m = np.zeros((N_FIELDS, N_FIELDS))
        for i in range(2):
            for j in range(2):
                m[VEL[i], VEL[j]] = self.coupling_sign * a * a * Ki[i, j]
                m[VEL[i], FLUX[j]] = m[FLUX[i], VEL[j]] = -a * Ki[i, j]
                m[FLUX[i], FLUX[j]] = Ki[i, j]
        return m


def _pointwise_to_global(space: DiscreteSpace, m: np.ndarray) -> sp.csr_matrix:
    return sp.kron(sp.csr_matrix(m), space.scalar_mass, format="csr")


def assemble_m0(params: MaterialParams, space: DiscreteSpace) -> sp.csr_matrix:
    """<M0 U, V> = rho (v, w) + (S sigma, tau) + c0 (p, q); zero on the flux."""
    return _pointwise_to_global(space, params.pointwise_m0())


def assemble_m1(params: MaterialParams, space: DiscreteSpace) -> sp.csr_matrix:
    return _pointwise_to_global(space, params.pointwise_m1())


class _ScalarForms:
    """Scalar building blocks D_c, B_c and the boundary trace mass on one space."""

    def __init__(self, space: DiscreteSpace):
        self.space = space
        mesh = space.mesh
        Tp, Tm, w, nrm = space.face_traces(mesh.interior_faces)
        self.int_avg = 0.5 * (Tp + Tm)
        self.int_jump = Tp - Tm
        self.int_w, self.int_n = w, nrm
        self.bdr_T, _, self.bdr_w, self.bdr_n = space.face_traces(mesh.boundary_faces)

    def boundary(self, c: int) -> sp.csr_matrix:
        T = self.bdr_T
        return (T.T @ sp.diags(self.bdr_w * self.bdr_n[:, c]) @ T).tocsr()

    @cached_property
    def boundary_mass(self) -> sp.csr_matrix:
        T = self.bdr_T
        return (T.T @ sp.diags(self.bdr_w) @ T).tocsr()

    def derivative(self, c: int) -> sp.csr_matrix:
        vol = self.space.volume_derivative(c)
        inner = self.int_avg.T @ sp.diags(self.int_w * self.int_n[:, c]) @ self.int_jump
        return (vol - inner - self.boundary(c)).tocsr()


def _blocks(space: DiscreteSpace, entries) -> sp.csr_matrix:
    """Assemble a global matrix from {(test_field, trial_field): scalar matrix}."""
    grid = [[None] * N_FIELDS for _ in range(N_FIELDS)]
    for (i, j), m in entries.items():
        grid[i][j] = m if grid[i][j] is None else grid[i][j] + m
    n = space.n_scalar
    for i in range(N_FIELDS):
        if grid[i][i] is None:
            grid[i][i] = sp.csr_matrix((n, n))
    return sp.bmat(grid, format="csr")


def _add(entries, key, m):
    entries[key] = m if key not in entries else entries[key] + m


def assemble_ah(space: DiscreteSpace, forms: _ScalarForms | None = None) -> sp.csr_matrix:
    """Discrete first-order operator:

    <A_h Y, Z> = -<Div_dg Y2, Z1> - <Grad_dg Y1, Z2> + <div_dg Y4, Z3> + <grad_dg Y3, Z4>.
    """
    forms = forms or _ScalarForms(space)
    D = [forms.derivative(0), forms.derivative(1)]
    e = {}
    for c in range(2):
        _add(e, (FLUX[c], P), D[c])  # grad_dg p against flux component c
        _add(e, (P, FLUX[c]), D[c])  # div_dg of the flux against p
    for (i, j), s in STRESS.items():
        _add(e, (s, VEL[i]), -D[j])  # Grad_dg v against sigma: sum_ij d_j v_i tau_ij
        _add(e, (VEL[i], s), -D[j])  # Div_dg sigma against v: sum_ij d_j sigma_ij w_i
    return _blocks(space, e)


def assemble_jpartial(space: DiscreteSpace, forms: _ScalarForms | None = None) -> sp.csr_matrix:
    """Boundary correction  J(U, V) = -sum_bdr (sigma n, w)_e + sum_bdr (qbar . n, q)_e."""
    forms = forms or _ScalarForms(space)
    B = [forms.boundary(0), forms.boundary(1)]
    e = {}
    for (i, j), s in STRESS.items():
        _add(e, (VEL[i], s), -B[j])
    for c in range(2):
        _add(e, (P, FLUX[c]), B[c])
    return _blocks(space, e)


def assemble_jgamma(space: DiscreteSpace, gamma_v: float, gamma_p: float,
                    forms: _ScalarForms | None = None) -> sp.csr_matrix:
    """Boundary penalty (1/h) sum_bdr (gamma_v (v, w)_e + gamma_p (p, q)_e), h the global meshsize."""
    if not (gamma_v > 0 and gamma_p > 0):
        raise InputError(f"penalties must be positive, got gamma_v={gamma_v}, gamma_p={gamma_p}")
    forms = forms or _ScalarForms(space)
    Mb = forms.boundary_mass / space.mesh.h
    return _blocks(space, {(V1, V1): gamma_v * Mb, (V2, V2): gamma_v * Mb, (P, P): gamma_p * Mb})


def default_penalty(r: int) -> float:
    return 10.0 * (r + 1) ** 2


@dataclass
class OperatorSet:
    space: DiscreteSpace
    params: MaterialParams
    gamma_v: float
    gamma_p: float
    M0: sp.csr_matrix
    M1: sp.csr_matrix
    Ah: sp.csr_matrix
    Jpartial: sp.csr_matrix
    Jgamma: sp.csr_matrix

    @property
    def mass(self) -> sp.csr_matrix:
        return self.space.mass_matrix

    @cached_property
    def spatial(self) -> sp.csr_matrix:
        """M1 + A_h + J_partial + J_gamma, the part of the scheme without time derivative."""
        return (self.M1 + self.Ah + self.Jpartial + self.Jgamma).tocsr()


def assemble_operators(params: MaterialParams, space: DiscreteSpace,
                       gamma_v: float | None = None, gamma_p: float | None = None) -> OperatorSet:
    gamma_v = default_penalty(space.degree) if gamma_v is None else gamma_v
    gamma_p = default_penalty(space.degree) if gamma_p is None else gamma_p
    forms = _ScalarForms(space)
    return OperatorSet(
        space, params, gamma_v, gamma_p,
        M0=assemble_m0(params, space),
        M1=assemble_m1(params, space),
        Ah=assemble_ah(space, forms),
        Jpartial=assemble_jpartial(space, forms),
        Jgamma=assemble_jgamma(space, gamma_v, gamma_p, forms),
    )


def _min_coercivity(params: MaterialParams, nu: float) -> float:
    """Smallest eigenvalue of nu*M0 + M1 relative to the pointwise H inner product."""
    s = 1.0 / np.sqrt(FIELD_WEIGHTS)
    m = nu * params.pointwise_m0() + params.pointwise_m1()
    return float(np.linalg.eigvalsh(s[:, None] * m * s[None, :]).min())


def compute_nu0(params: MaterialParams, gamma: float, tol: float = 1e-8) -> float:
    """Smallest nu with  <(nu M0 + M1) x, x> >= gamma <x, x>  for all x.

    Coefficients are constant, so the pointwise 8x8 condition is equivalent to
    the integral one.  Found by bisection to absolute tolerance ``tol``.
    """
    if gamma <= 0:
        raise InputError("coercivity target gamma must be positive")
    kmin = float(np.linalg.eigvalsh(params.K_inv).min())
    if gamma >= kmin:
        raise InfeasibleCoercivity(
            "qbar", f"flux block K^-1 has smallest eigenvalue {kmin:.6g} <= gamma={gamma:.6g}; "
                    "M0 vanishes there, so no weight nu can satisfy the coercivity condition")
    lo, hi = 0.0, 1.0
    while _min_coercivity(params, hi) < gamma:
        lo, hi = hi, 2 * hi
        if hi > 1e15:
            raise InfeasibleCoercivity("coupled", "no finite nu satisfies the coercivity condition")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _min_coercivity(params, mid) >= gamma:
            hi = mid
        else:
            lo = mid
    return hi


def generalized_min_eig(A, G) -> float:
    """Smallest eigenvalue of the symmetric pencil (A, G) (dense; small problems only)."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    G = G.toarray() if sp.issparse(G) else np.asarray(G)
    return float(sla.eigh(0.5 * (A + A.T), G, eigvals_only=True)[0])


def export_coo(path, matrix) -> None:
    """Write ``row col value`` lines (0-based) for all stored nonzeros."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"# {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for k in order:
            fh.write(f"{m.row[k]} {m.col[k]} {m.data[k]:.17e}\n")

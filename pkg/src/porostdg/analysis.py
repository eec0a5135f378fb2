"""Manufactured solutions, discrete error norms, convergence studies and the
algebraic identity checks of the spatial operators."""

from __future__ import annotations

import csv
import warnings
from math import comb
from dataclasses import dataclass, field

import numpy as np
import sympy as sym
import mpmath

from porostdg.errors import InputError
from porostdg.fespace import FIELD_WEIGHTS, N_FIELDS, DiscreteSpace, error_norms
from porostdg.mesh import build_mesh, face_quadrature
from porostdg.operators import (
    FLUX, P, VEL, MaterialParams, _ScalarForms, assemble_ah, assemble_jpartial,
    assemble_operators, compute_nu0,
)
from porostdg.solver import Trajectory, initial_state, march
from porostdg.timeslab import TemporalRule, TimeMesh, lagrange_matrix, weighted_gauss_radau

X, Y, T = sym.symbols("x y t", real=True)
COORDS = (X, Y)


def _exact(value):
    return sym.nsimplify(value, rational=True)


def _stress(u, params: MaterialParams):
    """C eps(u) as (s11, s22, s12)."""
    lam, mu = _exact(params.lam), _exact(params.mu)
    eps = [[(sym.diff(u[i], COORDS[j]) + sym.diff(u[j], COORDS[i])) / 2 for j in range(2)] for i in range(2)]
    tr = eps[0][0] + eps[1][1]
    return [2 * mu * eps[0][0] + lam * tr, 2 * mu * eps[1][1] + lam * tr, 2 * mu * eps[0][1]]


def _first_order_fields(u, p, params: MaterialParams):
    """Symbolic (v, sigma, p, qbar) from a displacement u and pressure p."""
    K = sym.Matrix(params.K.tolist()).applyfunc(_exact)
    v = [sym.diff(ui, T) for ui in u]
    grad_p = sym.Matrix([sym.diff(p, c) for c in COORDS])
    qbar = -K * grad_p + _exact(params.alpha) * sym.Matrix(v)
    return v + _stress(u, params) + [p, qbar[0], qbar[1]]


def evolution_residual(fields, params: MaterialParams):
    """(M0 d/dt + M1 + A) applied to symbolic first-order fields; returns 8 expressions."""
    v1, v2, s11, s22, s12, p, q1, q2 = fields
    rho, c0, alpha = _exact(params.rho), _exact(params.c0), _exact(params.alpha)
    lam, mu = _exact(params.lam), _exact(params.mu)
    Ki = sym.Matrix(params.K.tolist()).applyfunc(_exact).inv()
    v, qbar = sym.Matrix([v1, v2]), sym.Matrix([q1, q2])
    vel = rho * v.diff(T) + params.coupling_sign * alpha ** 2 * Ki * v - alpha * Ki * qbar
    flux = -alpha * Ki * v + Ki * qbar
    lin = [vel[0], vel[1], None, None, None, c0 * sym.diff(p, T), flux[0], flux[1]]
    # raw tensor entries of S dsigma/dt
    beta = lam / (2 * mu + 2 * lam)
    tr_rate = sym.diff(s11 + s22, T)
    stress_rate = [(sym.diff(s11, T) - beta * tr_rate) / (2 * mu),
                   (sym.diff(s22, T) - beta * tr_rate) / (2 * mu),
                   sym.diff(s12, T) / (2 * mu)]
    div_sigma = [sym.diff(s11, X) + sym.diff(s12, Y), sym.diff(s12, X) + sym.diff(s22, Y)]
    sym_grad_v = [sym.diff(v1, X), sym.diff(v2, Y), (sym.diff(v1, Y) + sym.diff(v2, X)) / 2]
    return [
        lin[0] - div_sigma[0],
        lin[1] - div_sigma[1],
        stress_rate[0] - sym_grad_v[0],
        stress_rate[1] - sym_grad_v[1],
        stress_rate[2] - sym_grad_v[2],
        lin[P] + sym.diff(q1, X) + sym.diff(q2, Y),
        lin[FLUX[0]] + sym.diff(p, X),
        lin[FLUX[1]] + sym.diff(p, Y),
    ]


def _vectorize(exprs):
    fn = sym.lambdify((T, X, Y), exprs, "numpy")

    def call(t, x, y):
        return [np.broadcast_to(np.asarray(val, dtype=float), np.shape(x)) for val in fn(t, x, y)]

    return call


@dataclass
class ManufacturedCase:
    """Closed-form solution of the first-order system with its sources.

    Built from a displacement ``u`` and a pressure ``p`` (sympy expressions in
    x, y, t).  The momentum and mass sources are obtained by applying the
    implemented evolution operator to the derived fields, so the case is an
    exact solution of the system the solver discretizes.
    """

    name: str
    u: tuple
    p: sym.Expr
    params: MaterialParams
    T_final: float = 1.0
    fields: list = field(init=False, repr=False)
    sources: list = field(init=False, repr=False)

    def __post_init__(self):
        # floats would leave round-off residue that exact simplification cannot cancel
        self.u = tuple(_exact(ui) for ui in self.u)
        self.p = _exact(self.p)
        self.fields = _first_order_fields(self.u, self.p, self.params)
        residual = [sym.simplify(r) for r in evolution_residual(self.fields, self.params)]
        for idx in (2, 3, 4, FLUX[0], FLUX[1]):
            if residual[idx] != 0:
                raise InputError(f"derived fields violate a constitutive equation (component {idx})")
        self.sources = residual
        self._exact = _vectorize(self.fields)
        self._source = _vectorize(self.sources)

    @property
    def momentum_source(self):
        """f with rho f the velocity component of the right-hand side."""
        return [s / self.params.rho for s in self.sources[:2]]

    @property
    def mass_source(self):
        return self.sources[P]

    def exact(self, t: float):
        """(x, y) -> eight field arrays at time t."""
        return lambda x, y: self._exact(t, x, y)

    def source(self, t, x, y):
        return self._source(t, x, y)

    def initial(self, x, y):
        return self._exact(0.0, x, y)


def default_case(params: MaterialParams | None = None, scale: float = 1.0) -> ManufacturedCase:
    params = params or MaterialParams()
    bump = sym.sin(sym.pi * X) * sym.sin(sym.pi * Y)
    u = (scale * bump * sym.sin(T), scale * bump * sym.cos(T))
    return ManufacturedCase("manufactured", u, bump * sym.sin(2 * T), params)


def zero_case(params: MaterialParams | None = None) -> ManufacturedCase:
    return ManufacturedCase("zero", (sym.Integer(0), sym.Integer(0)), sym.Integer(0),
                            params or MaterialParams())


def initial_from_data(u0, u1, p0, params: MaterialParams):
    """Initial vector field (x, y) -> 8 arrays from u(0), du/dt(0), p(0) (sympy in x, y)."""
    K = sym.Matrix(params.K.tolist()).applyfunc(_exact)
    u0, u1, p0 = [sym.sympify(e) for e in u0], [sym.sympify(e) for e in u1], sym.sympify(p0)
    qbar = -K * sym.Matrix([sym.diff(p0, c) for c in COORDS]) + _exact(params.alpha) * sym.Matrix(u1)
    exprs = u1 + _stress(u0, params) + [p0, qbar[0], qbar[1]]
    fn = sym.lambdify((X, Y), [sym.sympify(e) for e in exprs], "numpy")
    return lambda x, y: [np.broadcast_to(np.asarray(v, dtype=float), np.shape(x)) for v in fn(x, y)]


# --------------------------------------------------------------- error norms

def _energy_error(space: DiscreteSpace, coeffs, exact, m0: np.ndarray) -> float:
    """<M0 e, e> for e = exact - discrete, by volume quadrature."""
    pts = space.quad_points
    ex = np.array(exact(pts[..., 0], pts[..., 1]))
    e = ex - space.values_at_quad(coeffs)
    return float(np.einsum("eq,feq,fg,geq->", space.quad_weights, e, m0, e))


def _h_error(space: DiscreteSpace, coeffs, exact) -> float:
    return float(FIELD_WEIGHTS @ error_norms(space, coeffs, exact))


@dataclass(frozen=True)
class ErrorValues:
    err_tau_nu: float
    err_sup_energy: float
    err_nu: float


def discrete_error(trajectory: Trajectory, case: ManufacturedCase, rule: TemporalRule | None = None,
                   space: DiscreteSpace | None = None) -> ErrorValues:
    """Errors of a trajectory against the exact solution (all unsquared).

    err_tau_nu:     time-mesh norm from the exact solution sampled at the Radau nodes
    err_sup_energy: max of <M0 e, e>^(1/2) over t = 0 and all Radau nodes
    err_nu:         weighted L2(0, T; H) norm by a (k+5)-point Gauss rule per slab
    """
    rule = rule or trajectory.rule
    space = space or trajectory.space
    if rule is not trajectory.rule or space is not trajectory.space:
        raise InputError("trajectory was computed with a different time rule or space")
    m0 = case.params.pointwise_m0()
    tau_nu = 0.0
    sup = _energy_error(space, trajectory.initial, case.exact(0.0), m0)
    nu_sq = 0.0
    gx, gw = np.polynomial.legendre.leggauss(rule.k + 5)
    tmesh = rule.time_mesh
    for n in range(rule.N):
        nodes = rule.nodes(n)
        node_err = np.empty(len(nodes))
        for mu, t in enumerate(nodes):
            coeffs = trajectory.values[n, mu]
            node_err[mu] = _h_error(space, coeffs, case.exact(t))
            sup = max(sup, _energy_error(space, coeffs, case.exact(t), m0))
        tau_nu += rule.slab_factor(n) * rule.quadrature(n, node_err)
        t0, t1 = tmesh.t[n], tmesh.t[n + 1]
        ts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx
        interp = lagrange_matrix(nodes, ts)
        for q, t in enumerate(ts):
            coeffs = interp[q] @ trajectory.values[n]
            nu_sq += 0.5 * (t1 - t0) * gw[q] * np.exp(-2 * rule.nu * t) * _h_error(space, coeffs, case.exact(t))
    return ErrorValues(np.sqrt(tau_nu), np.sqrt(sup), np.sqrt(nu_sq))


def fit_rate(sizes, errors) -> float:
    """Least-squares slope of log(error) against log(size)."""
    sizes, errors = np.asarray(sizes, dtype=float), np.asarray(errors, dtype=float)
    if len(sizes) < 2 or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])


# ------------------------------------------------------- convergence studies

@dataclass
class ConvergenceLevel:
    level: int
    h: float
    tau: float
    k: int
    r: int
    errors: ErrorValues


@dataclass
class ConvergenceReport:
    axis: str
    levels: list
    monotone: bool = True

    def sizes(self):
        return [lv.tau if self.axis == "time" else lv.h for lv in self.levels]

    def rate(self, name: str = "err_tau_nu") -> float:
        return fit_rate(self.sizes(), [getattr(lv.errors, name) for lv in self.levels])

    @property
    def rates(self) -> dict:
        return {name: self.rate(name) for name in ("err_tau_nu", "err_sup_energy", "err_nu")}

    def write_csv(self, path) -> None:
        cols = ["level", "h", "tau", "k", "r", "err_tau_nu", "err_sup_energy", "err_nu", "rate_tau_nu"]
        sizes = self.sizes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i, lv in enumerate(self.levels):
                e = lv.errors
                rate = "" if i == 0 else f"{fit_rate(sizes[i - 1:i + 1], [self.levels[j].errors.err_tau_nu for j in (i - 1, i)]):.6f}"
                w.writerow([lv.level, f"{lv.h:.16e}", f"{lv.tau:.16e}", lv.k, lv.r,
                            f"{e.err_tau_nu:.16e}", f"{e.err_sup_energy:.16e}", f"{e.err_nu:.16e}", rate])


def default_nu(params: MaterialParams) -> float:
    return compute_nu0(params, 0.1) + 0.1


def run_case(case: ManufacturedCase, nx: int, ny: int, r: int, N: int, k: int, nu: float | None = None,
             gamma_v: float | None = None, gamma_p: float | None = None,
             rect=(0.0, 1.0, 0.0, 1.0)):
    """Build everything for one resolution, march and return (trajectory, ops, rule)."""
    params = case.params
    nu = default_nu(params) if nu is None else nu
    space = DiscreteSpace(build_mesh(rect, nx, ny), r)
    ops = assemble_operators(params, space, gamma_v, gamma_p)
    rule = TemporalRule(TimeMesh.uniform(case.T_final, N), k, nu)
    traj = march(ops, rule, case.source, initial_state(case.initial, space))
    return traj, ops, rule


def convergence_study(case: ManufacturedCase, axis: str, levels: int, fixed: int, k: int, r: int,
                      nu: float | None = None, gamma_v: float | None = None, gamma_p: float | None = None,
                      start: int = 1) -> ConvergenceReport:
    """Dyadic refinement along one axis.

    For ``axis="time"`` the slab count is ``start * 2**l`` and ``fixed`` is the
    number of elements per direction; for ``axis="space"`` the element count
    per direction is ``start * 2**l`` and ``fixed`` is the slab count.
    """
    if axis not in ("time", "space"):
        raise InputError(f"axis must be 'time' or 'space', got {axis!r}")
    if levels < 3:
        raise InputError(f"a rate fit needs at least 3 levels, got {levels}")
    nu = default_nu(case.params) if nu is None else nu
    out = []
    for lv in range(levels):
        m = start * 2 ** lv
        nx, N = (fixed, m) if axis == "time" else (m, fixed)
        traj, ops, rule = run_case(case, nx, nx, r, N, k, nu, gamma_v, gamma_p)
        out.append(ConvergenceLevel(lv, ops.space.mesh.h, rule.time_mesh.tau, k, r, discrete_error(traj, case)))
    errs = [lv.errors.err_tau_nu for lv in out]
    monotone = bool(np.all(np.diff(errs) < 0))
    if not monotone:
        warnings.warn(f"non-monotone error sequence in {axis} study: {errs}", RuntimeWarning, stacklevel=2)
    return ConvergenceReport(axis, out, monotone)


# ---------------------------------------------------------- identity checks

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    config: str
    defect: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.defect <= self.tol)


@dataclass
class IdentityReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name:<22} {c.config:<14} defect={c.defect:.3e} tol={c.tol:.0e}"
                for c in self.checks]


def boundary_pairings(space: DiscreteSpace, Y) -> np.ndarray:
    """sum_bdr <v, sigma n>_e - sum_bdr <p, qbar . n>_e for each column of Y.

    Evaluated face by face from the reference basis, independent of the
    assembled trace operators.
    """
    Y = np.atleast_2d(np.asarray(Y).T).T
    mesh, basis = space.mesh, space.basis
    nq = space.degree + 2
    out = np.zeros(Y.shape[1])
    coeffs = Y.reshape(N_FIELDS, mesh.n_elements, space.n_local, -1)
    for face in mesh.boundary_faces:
        pts, w = face_quadrature(face, nq)
        ref = mesh.to_reference(face.plus, pts)
        phi = basis.values(ref)
        vals = np.einsum("qi,fiz->fqz", phi, coeffs[:, face.plus])
        nx_, ny_ = face.normal
        sig_n = [vals[2] * nx_ + vals[4] * ny_, vals[4] * nx_ + vals[3] * ny_]
        out += w @ (vals[VEL[0]] * sig_n[0] + vals[VEL[1]] * sig_n[1])
        out -= w @ (vals[P] * (vals[FLUX[0]] * nx_ + vals[FLUX[1]] * ny_))
    return out


def verify_identities(mesh_sizes=(2, 4, 8), degrees=(0, 1, 2), trials: int = 100, seed: int = 0,
                      jpartial_sign: float = 1.0, tol: float = 1e-12) -> IdentityReport:
    """Skew-symmetry of A_h + J_partial, the boundary identity of A_h and the
    conditional duality of the scalar DG derivatives.

    ``jpartial_sign`` scales J_partial (a mutation hook; -1 must fail).
    """
    rng = np.random.default_rng(seed)
    checks = []
    for n in mesh_sizes:
        for r in degrees:
            space = DiscreteSpace(build_mesh((0.0, 1.0, 0.0, 1.0), n, n), r)
            forms = _ScalarForms(space)
            Ah = assemble_ah(space, forms)
            S = Ah + jpartial_sign * assemble_jpartial(space, forms)
            Ys = rng.standard_normal((space.dim, trials))
            cfg = f"{n}x{n} r={r}"
            norms = np.linalg.norm(Ys, axis=0)
            AY = Ah @ Ys
            skew = np.abs(np.einsum("it,it->t", Ys, S @ Ys)) / (norms * (np.linalg.norm(AY, axis=0) + 1))
            checks.append(IdentityCheck("skew_defect", cfg, float(skew.max()), tol))
            ident = np.abs(np.einsum("it,it->t", Ys, AY) - boundary_pairings(space, Ys))
            checks.append(IdentityCheck("boundary_identity", cfg, float(
                (ident / (norms * (np.linalg.norm(AY, axis=0) + 1))).max()), tol))
            # duality with vanishing boundary traces of v and p
            Z = Ys.copy()
            boundary_elems = sorted({f.plus for f in space.mesh.boundary_faces})
            for fld in (VEL[0], VEL[1], P):
                for e in boundary_elems:
                    Z[space.dof(fld, e, 0):space.dof(fld, e, 0) + space.n_local] = 0.0
            defect = np.abs(np.einsum("it,it->t", Z, Ah @ Z)) / (np.linalg.norm(Z, axis=0) * (
                np.linalg.norm(Ah @ Z, axis=0) + 1))
            checks.append(IdentityCheck("conditional_duality", cfg, float(defect.max()), tol))
    return IdentityReport(checks)


def random_nonnegative_poly(degree: int, rng) -> np.polynomial.Polynomial:
    """Random polynomial with uniform [0, 1] coefficients in the Bernstein basis of
    [-1, 1]; nonnegative there, so relative integration errors are well conditioned."""
    half_up = np.polynomial.Polynomial([0.5, 0.5])
    half_down = np.polynomial.Polynomial([0.5, -0.5])
    coef = rng.uniform(0.0, 1.0, degree + 1)
    return sum((coef[j] * comb(degree, j)) * half_up ** j * half_down ** (degree - j) for j in range(degree + 1))


def quadrature_exactness(degrees=(0, 1, 2, 3), cs=(0.0, 1e-6, 0.1, 1.0, 5.0), samples: int = 5,
                         seed: int = 0):
    """Max relative error of the weighted Radau rule on random nonnegative
    polynomials of degree 2k, against 30-digit adaptive quadrature.

    Returns a list of (k, c, max relative error).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for k in degrees:
        for c in cs:
            nodes, weights = weighted_gauss_radau(k, c)
            worst = 0.0
            for _ in range(samples):
                poly = random_nonnegative_poly(2 * k, rng)
                mono = [mpmath.mpf(a) for a in poly.coef[::-1]]
                with mpmath.workdps(30):
                    exact = float(mpmath.quad(lambda s: mpmath.exp(-c * (s + 1)) * mpmath.polyval(mono, s), [-1, 1]))
                worst = max(worst, abs(weights @ poly(nodes) - exact) / abs(exact))
            rows.append((k, c, worst))
    return rows

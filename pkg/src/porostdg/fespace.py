"""Broken tensor-product polynomial spaces and the L2 projection onto them.

The discrete product space stores eight scalar fields per element, always in
the order

    v1, v2, s11, s22, s12, p, q1, q2

(velocity, symmetric stress in Voigt order, pressure, total flux).  The global
index of local basis function ``i`` of field ``f`` on element ``e`` is
``f * n_elements * n_local + e * n_local + i``.

The inner product of the product space is the L2 product of the full tensor
fields, so the off-diagonal stress entry carries weight 2.
"""

from __future__ import annotations

import csv
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as L

from porostdg.errors import InputError
from porostdg.mesh import Mesh, face_quadrature, reference_face_points

FIELDS = ("v1", "v2", "s11", "s22", "s12", "p", "q1", "q2")
FIELD_WEIGHTS = np.array([1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0])
GROUPS = {"v": (0, 1), "sigma": (2, 3, 4), "p": (5,), "qbar": (6, 7)}
N_FIELDS = len(FIELDS)


def gauss_lobatto_nodes(r: int) -> np.ndarray:
    if r == 0:
        return np.zeros(1)
    inner = L.Legendre.basis(r).deriv().roots()
    return np.concatenate([[-1.0], np.sort(inner.real), [1.0]])


class ReferenceBasis:
    """Nodal Lagrange basis of Q_r on [-1, 1]^2 at tensor Gauss-Lobatto points.

    Local index ``i = iy * (r + 1) + ix``.  The default volume rule uses
    ``2r + 2`` Gauss points per axis.
    """

    def __init__(self, degree: int, quad_points: int | None = None):
        if degree < 0:
            raise InputError("polynomial degree must be >= 0")
        self.degree = r = int(degree)
        self.nodes_1d = gauss_lobatto_nodes(r)
        # columns of coef1d are the Legendre coefficients of the 1D Lagrange polynomials
        self._coef1d = np.linalg.inv(L.legvander(self.nodes_1d, r))
        self._dcoef1d = L.legder(self._coef1d, axis=0) if r > 0 else np.zeros((1, 1))
        self.quad_points_1d = int(quad_points or 2 * r + 2)

    @property
    def n_local(self) -> int:
        return (self.degree + 1) ** 2

    @cached_property
    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.nodes_1d, self.nodes_1d)
        return np.column_stack([X.ravel(), Y.ravel()])

    def _eval_1d(self, x):
        x = np.asarray(x, dtype=float)
        val = L.legvander(x, self.degree) @ self._coef1d
        if self.degree == 0:
            return val, np.zeros_like(val)
        der = L.legvander(x, self.degree - 1) @ self._dcoef1d
        return val, der

    def values(self, pts) -> np.ndarray:
        """Basis values at reference points, shape (n_points, n_local)."""
        pts = np.atleast_2d(pts)
        vx, _ = self._eval_1d(pts[:, 0])
        vy, _ = self._eval_1d(pts[:, 1])
        return (vy[:, :, None] * vx[:, None, :]).reshape(len(pts), -1)

    def gradients(self, pts) -> np.ndarray:
        """Reference gradients, shape (n_points, n_local, 2)."""
        pts = np.atleast_2d(pts)
        vx, dx = self._eval_1d(pts[:, 0])
        vy, dy = self._eval_1d(pts[:, 1])
        gx = (vy[:, :, None] * dx[:, None, :]).reshape(len(pts), -1)
        gy = (dy[:, :, None] * vx[:, None, :]).reshape(len(pts), -1)
        return np.stack([gx, gy], axis=-1)

    @cached_property
    def volume_rule(self):
        s, w = L.leggauss(self.quad_points_1d)
        X, Y = np.meshgrid(s, s)
        W = np.outer(w, w)
        return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


class DiscreteSpace:
    """The broken product space (Y_h^r)^2 x sym(Y_h^r)^{2x2} x Y_h^r x (Y_h^r)^2."""

    def __init__(self, mesh: Mesh, degree: int, quad_points: int | None = None):
        self.mesh = mesh
        self.degree = int(degree)
        self.basis = ReferenceBasis(degree, quad_points)
        self.n_local = self.basis.n_local
        self.n_scalar = mesh.n_elements * self.n_local
        self.dim = N_FIELDS * self.n_scalar

    def dof(self, field: int, element: int, local: int) -> int:
        return (field * self.mesh.n_elements + element) * self.n_local + local

    def field_slice(self, field: int) -> slice:
        return slice(field * self.n_scalar, (field + 1) * self.n_scalar)

    def split(self, coeffs) -> np.ndarray:
        """View coefficients as (8, n_elements, n_local)."""
        return np.asarray(coeffs).reshape(N_FIELDS, self.mesh.n_elements, self.n_local)

    def group_mask(self, *groups: str) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for g in groups:
            for f in GROUPS[g]:
                mask[self.field_slice(f)] = True
        return mask

    # ------------------------------------------------------------ quadrature
    @cached_property
    def _jac(self) -> np.ndarray:
        return 0.25 * self.mesh.size[:, 0] * self.mesh.size[:, 1]

    @cached_property
    def quad_points(self) -> np.ndarray:
        """Physical volume quadrature points, shape (n_elements, n_q, 2)."""
        ref, _ = self.basis.volume_rule
        return self.mesh.to_physical(np.arange(self.mesh.n_elements), ref)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        _, w = self.basis.volume_rule
        return self._jac[:, None] * w[None, :]

    @cached_property
    def _phi_q(self) -> np.ndarray:
        return self.basis.values(self.basis.volume_rule[0])

    @cached_property
    def _grad_q(self) -> np.ndarray:
        return self.basis.gradients(self.basis.volume_rule[0])

    def values_at_quad(self, coeffs) -> np.ndarray:
        """Field values at volume quadrature points, shape (8, n_elements, n_q)."""
        return np.einsum("qi,fei->feq", self._phi_q, self.split(coeffs))

    def gradients_at_quad(self, coeffs) -> np.ndarray:
        """Physical gradients, shape (8, n_elements, n_q, 2)."""
        g = np.einsum("qid,fei->feqd", self._grad_q, self.split(coeffs))
        return g * (2.0 / self.mesh.size)[None, :, None, :]

    # ------------------------------------------------------------- matrices
    @cached_property
    def local_mass(self) -> np.ndarray:
        """Element mass matrices, shape (n_elements, n_local, n_local)."""
        _, w = self.basis.volume_rule
        ref = self._phi_q.T @ (w[:, None] * self._phi_q)
        return self._jac[:, None, None] * ref[None]

    def _block_diag(self, blocks) -> sp.csr_matrix:
        ne, n = self.mesh.n_elements, self.n_local
        rows = (np.arange(ne)[:, None, None] * n + np.arange(n)[None, :, None]) + 0 * np.arange(n)
        cols = np.swapaxes(rows, 1, 2)
        return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(ne * n, ne * n))

    @cached_property
    def scalar_mass(self) -> sp.csr_matrix:
        return self._block_diag(self.local_mass)

    def volume_derivative(self, direction: int) -> sp.csr_matrix:
        """Matrix with entries  int phi_i d(phi_j)/dx_direction  (row = test)."""
        _, w = self.basis.volume_rule
        ref = self._phi_q.T @ (w[:, None] * self._grad_q[:, :, direction])
        scale = self._jac * 2.0 / self.mesh.size[:, direction]
        return self._block_diag(scale[:, None, None] * ref[None])

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        """Gram matrix of the product-space inner product."""
        return sp.kron(sp.diags(FIELD_WEIGHTS), self.scalar_mass, format="csr")

    def inner(self, a, b) -> float:
        return float(a @ (self.mass_matrix @ b))

    # ------------------------------------------------------------ face traces
    def face_traces(self, faces, quad_points: int | None = None):
        """Sparse trace operators on a list of faces.

        Returns ``(T_plus, T_minus, weights, normals)`` where ``T_plus`` maps a
        scalar coefficient vector to plus-side values at all face quadrature
        points (stacked face by face).  ``T_minus`` is None if any face is a
        boundary face.
        """
        nq = quad_points or self.degree + 2
        s, _ = L.leggauss(nq)
        phi = [self.basis.values(reference_face_points(f, s)) for f in range(4)]
        n = self.n_local
        nf = len(faces)
        rows = np.repeat(np.arange(nf * nq), n)
        data_p, cols_p, data_m, cols_m = [], [], [], []
        weights = np.empty(nf * nq)
        normals = np.empty((nf * nq, 2))
        interior = all(not f.is_boundary for f in faces)
        for k, f in enumerate(faces):
            _, w = face_quadrature(f, nq)
            weights[k * nq:(k + 1) * nq] = w
            normals[k * nq:(k + 1) * nq] = f.normal
            data_p.append(phi[f.plus_local].ravel())
            cols_p.append(np.tile(f.plus * n + np.arange(n), nq))
            if interior:
                data_m.append(phi[f.minus_local].ravel())
                cols_m.append(np.tile(f.minus * n + np.arange(n), nq))
        shape = (nf * nq, self.n_scalar)
        if nf == 0:
            empty = sp.csr_matrix(shape)
            return empty, (empty if interior else None), weights, normals
        Tp = sp.csr_matrix((np.concatenate(data_p), (rows, np.concatenate(cols_p))), shape=shape)
        Tm = None
        if interior:
            Tm = sp.csr_matrix((np.concatenate(data_m), (rows, np.concatenate(cols_m))), shape=shape)
        return Tp, Tm, weights, normals


def project_l2(f, space: DiscreteSpace, fields=None) -> np.ndarray:
    """L2-orthogonal projection of a closed-form field onto ``space``.

    ``f(x, y)`` receives arrays of equal shape and returns a sequence of the
    eight component arrays (scalars broadcast).  With ``fields`` given, ``f``
    returns only those components and the rest are left zero.
    """
    fields = tuple(range(N_FIELDS)) if fields is None else tuple(fields)
    pts = space.quad_points
    vals = f(pts[..., 0], pts[..., 1])
    rhs = np.zeros((N_FIELDS, space.mesh.n_elements, space.n_local))
    wphi = space.quad_weights[:, :, None] * space._phi_q[None]
    for slot, fi in enumerate(fields):
        v = np.broadcast_to(np.asarray(vals[slot], dtype=float), pts.shape[:2])
        rhs[fi] = np.einsum("eq,eqi->ei", v, wphi)
    coeffs = np.linalg.solve(space.local_mass[None], rhs[..., None])[..., 0]
    return coeffs.ravel()


def load_vector(f, space: DiscreteSpace, fields=None) -> np.ndarray:
    """Vector of  <f, phi_i>_H  for all basis functions (same ``f`` convention)."""
    fields = tuple(range(N_FIELDS)) if fields is None else tuple(fields)
    pts = space.quad_points
    vals = f(pts[..., 0], pts[..., 1])
    out = np.zeros((N_FIELDS, space.mesh.n_elements, space.n_local))
    wphi = space.quad_weights[:, :, None] * space._phi_q[None]
    for slot, fi in enumerate(fields):
        v = np.broadcast_to(np.asarray(vals[slot], dtype=float), pts.shape[:2])
        out[fi] = FIELD_WEIGHTS[fi] * np.einsum("eq,eqi->ei", v, wphi)
    return out.ravel()


def evaluate(space: DiscreteSpace, coeffs, field: int, point, element: int) -> float:
    """Value of one field at a physical point, using the expansion on ``element``.

    On a face shared by two elements the element id selects the one-sided trace.
    """
    if not space.mesh.contains(element, point):
        raise InputError(f"point {tuple(point)} is outside element {element}")
    ref = space.mesh.to_reference(element, point)
    phi = space.basis.values(ref[None])[0]
    return float(phi @ space.split(coeffs)[field, element])


def error_norms(space: DiscreteSpace, coeffs, exact, fields=None):
    """Squared L2 error per field; ``exact`` follows the ``project_l2`` convention."""
    fields = tuple(range(N_FIELDS)) if fields is None else tuple(fields)
    pts = space.quad_points
    vals = exact(pts[..., 0], pts[..., 1])
    uh = space.values_at_quad(coeffs)
    out = np.empty(len(fields))
    for slot, fi in enumerate(fields):
        e = np.broadcast_to(vals[slot], pts.shape[:2]) - uh[fi]
        out[slot] = np.sum(space.quad_weights * e**2)
    return out


def h1_seminorm_error(space: DiscreteSpace, coeffs, field: int, exact_grad) -> float:
    """Broken H1 seminorm of (exact - discrete) for one field (not squared)."""
    pts = space.quad_points
    gx, gy = exact_grad(pts[..., 0], pts[..., 1])
    gh = space.gradients_at_quad(coeffs)[field]
    err = (gx - gh[..., 0]) ** 2 + (gy - gh[..., 1]) ** 2
    return float(np.sqrt(np.sum(space.quad_weights * err)))


def face_trace_error(space: DiscreteSpace, coeffs, field: int, exact, quad_points=None) -> float:
    """(sum over faces and both sides of ||w - w_h||^2_{L2(e)})^(1/2)."""
    mesh = space.mesh
    total = 0.0
    u = space.split(coeffs)[field].ravel()
    for faces in (mesh.interior_faces, mesh.boundary_faces):
        if not faces:
            continue
        Tp, Tm, w, _ = space.face_traces(faces, quad_points or space.degree + 3)
        nq = len(w) // len(faces)
        pts = np.concatenate([face_quadrature(f, nq)[0] for f in faces])
        ex = np.broadcast_to(exact(pts[:, 0], pts[:, 1]), w.shape)
        total += np.sum(w * (ex - Tp @ u) ** 2)
        if Tm is not None:
            total += np.sum(w * (ex - Tm @ u) ** 2)
    return float(np.sqrt(total))


def write_field_csv(path, space: DiscreteSpace, coeffs) -> None:
    """Per-element nodal values: element, x, y, then the eight fields."""
    mesh = space.mesh
    nodes = space.basis.nodes
    phi = space.basis.values(nodes)
    vals = np.einsum("ni,fei->efn", phi, space.split(coeffs))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("element", "x", "y") + FIELDS)
        for e in range(mesh.n_elements):
            xy = mesh.to_physical(e, nodes)
            for a in range(len(nodes)):
                w.writerow([e, f"{xy[a, 0]:.16e}", f"{xy[a, 1]:.16e}"]
                           + [f"{vals[e, f, a]:.16e}" for f in range(N_FIELDS)])

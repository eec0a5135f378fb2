"""Uniform axis-aligned quadrilateral meshes of rectangles.

Elements are numbered row by row, ``id = j * nx + i``.  Every element is the
image of the reference square [-1, 1]^2 under an axis-aligned affine map.
Local faces are numbered 0 (bottom), 1 (right), 2 (top), 3 (left); along each
face the parameter s in [-1, 1] increases with the physical coordinate, so the
quadrature points of two elements sharing a face coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from porostdg.errors import InputError

LOCAL_FACE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class Face:
    """An edge of the mesh.

    ``normal`` is the outward unit normal of the ``plus`` element; on the
    boundary it is the outward normal of the domain and ``minus`` is None.
    """

    start: tuple[float, float]
    end: tuple[float, float]
    measure: float
    normal: tuple[float, float]
    plus: int
    plus_local: int
    minus: int | None = None
    minus_local: int | None = None

    @property
    def is_boundary(self) -> bool:
        return self.minus is None


@dataclass(frozen=True)
class Mesh:
    rect: tuple[float, float, float, float]
    nx: int
    ny: int
    lower: np.ndarray = field(repr=False)  # (n_elements, 2) lower-left corners
    size: np.ndarray = field(repr=False)  # (n_elements, 2) edge lengths
    interior_faces: tuple[Face, ...] = field(repr=False)
    boundary_faces: tuple[Face, ...] = field(repr=False)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def h_K(self) -> np.ndarray:
        return np.hypot(self.size[:, 0], self.size[:, 1])

    @property
    def h(self) -> float:
        return float(self.h_K.max())

    @property
    def faces(self) -> tuple[Face, ...]:
        return self.interior_faces + self.boundary_faces

    def element_vertices(self, e: int) -> np.ndarray:
        """Counter-clockwise vertex coordinates of element ``e``, shape (4, 2)."""
        (x0, y0), (hx, hy) = self.lower[e], self.size[e]
        return np.array([[x0, y0], [x0 + hx, y0], [x0 + hx, y0 + hy], [x0, y0 + hy]])

    def to_reference(self, e: int, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return 2.0 * (points - self.lower[e]) / self.size[e] - 1.0

    def to_physical(self, e, ref_points) -> np.ndarray:
        """Map reference points to element(s) ``e``; broadcasts over elements."""
        e = np.asarray(e)
        lower, size = self.lower[e], self.size[e]
        if e.ndim:
            lower, size = lower[:, None, :], size[:, None, :]
        return lower + 0.5 * (np.asarray(ref_points) + 1.0) * size

    def contains(self, e: int, point, tol: float = 1e-12) -> bool:
        ref = self.to_reference(e, point)
        return bool(np.all(np.abs(ref) <= 1.0 + tol))

    def element_faces(self, e: int) -> list[tuple[Face, float]]:
        """Faces of element ``e`` with the sign +1 if ``e`` is the plus side."""
        out = []
        for f in self.faces:
            if f.plus == e:
                out.append((f, 1.0))
            elif f.minus == e:
                out.append((f, -1.0))
        return out


def build_mesh(rect, nx: int, ny: int) -> Mesh:
    """Uniform ``nx`` x ``ny`` tensor-product mesh of ``rect = (x0, x1, y0, y1)``."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InputError(f"element counts must be positive integers, got nx={nx}, ny={ny}")
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise InputError(f"degenerate rectangle {rect!r}")
    nx, ny = int(nx), int(ny)
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs = x0 + hx * np.arange(nx + 1)
    ys = y0 + hy * np.arange(ny + 1)
    xs[-1], ys[-1] = x1, y1

    jj, ii = np.divmod(np.arange(nx * ny), nx)
    lower = np.column_stack([xs[ii], ys[jj]])
    size = np.column_stack([xs[ii + 1] - xs[ii], ys[jj + 1] - ys[jj]])

    def eid(i, j):
        return j * nx + i

    interior = []
    for j in range(ny):
        for i in range(nx - 1):
            interior.append(Face((xs[i + 1], ys[j]), (xs[i + 1], ys[j + 1]), ys[j + 1] - ys[j],
                                 (1.0, 0.0), eid(i, j), 1, eid(i + 1, j), 3))
    for j in range(ny - 1):
        for i in range(nx):
            interior.append(Face((xs[i], ys[j + 1]), (xs[i + 1], ys[j + 1]), xs[i + 1] - xs[i],
                                 (0.0, 1.0), eid(i, j), 2, eid(i, j + 1), 0))

    boundary = []
    for i in range(nx):
        boundary.append(Face((xs[i], y0), (xs[i + 1], y0), xs[i + 1] - xs[i], (0.0, -1.0), eid(i, 0), 0))
    for j in range(ny):
        boundary.append(Face((x1, ys[j]), (x1, ys[j + 1]), ys[j + 1] - ys[j], (1.0, 0.0), eid(nx - 1, j), 1))
    for i in range(nx):
        boundary.append(Face((xs[i], y1), (xs[i + 1], y1), xs[i + 1] - xs[i], (0.0, 1.0), eid(i, ny - 1), 2))
    for j in range(ny):
        boundary.append(Face((x0, ys[j]), (x0, ys[j + 1]), ys[j + 1] - ys[j], (-1.0, 0.0), eid(0, j), 3))

    return Mesh((x0, x1, y0, y1), nx, ny, lower, size, tuple(interior), tuple(boundary))


def face_quadrature(face: Face, order: int):
    """Gauss-Legendre rule with ``order`` points on ``face``.

    Returns ``(points, weights)`` with points of shape (order, 2); the weights
    sum to the face length and the rule is exact for polynomials of degree
    ``2 * order - 1`` along the face.
    """
    if order < 1:
        raise InputError("face quadrature order must be >= 1")
    s, w = np.polynomial.legendre.leggauss(order)
    a, b = np.asarray(face.start), np.asarray(face.end)
    points = 0.5 * (a + b) + 0.5 * s[:, None] * (b - a)
    return points, 0.5 * face.measure * w


def reference_face_points(local_face: int, s) -> np.ndarray:
    """Reference coordinates of the face parameter values ``s`` on a local face."""
    s = np.asarray(s, dtype=float)
    one = np.ones_like(s)
    return {
        0: np.column_stack([s, -one]),
        1: np.column_stack([one, s]),
        2: np.column_stack([s, one]),
        3: np.column_stack([-one, s]),
    }[local_face]

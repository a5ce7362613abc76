"""Poses, CGR rotations, 3x3 symmetric eigen-solving and plane fitting."""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import CollinearPoints, TooFewPoints

ORTHO_TOL = 1e-9
DEGENERACY_RTOL = 1e-9


def skew(v):
    """Cross-product matrix ``[v]_x`` so that ``skew(a) @ b == cross(a, b)``."""
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def cgr_to_rotation(s):
    """Rotation matrix from Cayley-Gibbs-Rodriguez parameters ``s``.

    ``R = ((1 - s.s) I + 2 [s]_x + 2 s s^T) / (1 + s.s)``; a rotation by
    ``2 atan(|s|)`` about ``s / |s|``.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (3,) or not np.all(np.isfinite(s)):
        raise ValueError("CGR vector must be a finite 3-vector")
    ss = s @ s
    Rbar = (1.0 - ss) * np.eye(3) + 2.0 * skew(s) + 2.0 * np.outer(s, s)
    return Rbar / (1.0 + ss)


def cgr_to_transform(x):
    """4x4 homogeneous transform from a 6-vector ``x = [s; t]``."""
    x = np.asarray(x, dtype=float)
    X = np.eye(4)
    X[:3, :3] = cgr_to_rotation(x[:3])
    X[:3, 3] = x[3:]
    return X


def is_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """Sensor-to-global rigid transform ``p_global = R p_local + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        if not is_rotation(R):
            raise ValueError("R is not a proper rotation matrix")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X[:3, :3], X[:3, 3])

    def matrix(self):
        X = np.eye(4)
        X[:3, :3] = self.R
        X[:3, 3] = self.t
        return X

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def compose(self, other):
        """``self * other``: apply ``other`` first, then ``self``."""
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self):
        return Pose(self.R.T, -self.R.T @ self.t)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.R, other.R) and np.array_equal(self.t, other.t)

    def __hash__(self):
        return hash((self.R.tobytes(), self.t.tobytes()))


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane ``n . p + d = 0`` with unit normal ``n``."""

    n: np.ndarray
    d: float

    def __post_init__(self):
        n = np.array(self.n, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("plane normal must have unit length")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", float(self.d))

    @property
    def vector(self):
        return np.append(self.n, self.d)

    def signed_distance(self, points):
        return np.asarray(points, dtype=float) @ self.n + self.d

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return np.array_equal(self.n, other.n) and self.d == other.d


@dataclass(frozen=True, eq=False)
class ScatterMatrix:
    """Centered second moments ``M = sum (p - pbar)(p - pbar)^T``."""

    M: np.ndarray
    centroid: np.ndarray = field(default=None)
    count: int = None

    def __post_init__(self):
        M = np.array(self.M, dtype=float).reshape(3, 3)
        if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
            raise ValueError("scatter matrix must be symmetric")
        object.__setattr__(self, "M", M)
        if self.centroid is not None:
            object.__setattr__(
                self, "centroid", np.array(self.centroid, dtype=float).reshape(3)
            )


def scatter_from_points(points):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(points)}")
    centroid = points.mean(axis=0)
    centered = points - centroid
    M = centered.T @ centered
    return ScatterMatrix(0.5 * (M + M.T), centroid, len(points))


def _as_matrix(M):
    if isinstance(M, ScatterMatrix):
        return M.M
    return np.asarray(M, dtype=float)


def characteristic_coeffs(M):
    """Coefficients of ``det(M - l I) = -l^3 + a l^2 + b l + c``."""
    m = _as_matrix(M)
    m11, m12, m13 = m[0, 0], m[0, 1], m[0, 2]
    m22, m23, m33 = m[1, 1], m[1, 2], m[2, 2]
    a = m11 + m22 + m33
    b = m12**2 + m13**2 + m23**2 - m11 * m22 - m11 * m33 - m22 * m33
    c = (
        -m33 * m12**2
        + 2.0 * m12 * m13 * m23
        - m22 * m13**2
        - m11 * m23**2
        + m11 * m22 * m33
    )
    return a, b, c


def symmetric_eigenvalues(M):
    """All three eigenvalues of a symmetric 3x3 matrix, ascending.

    Trigonometric solution of the characteristic cubic; the three roots
    are real for symmetric input.
    """
    m = _as_matrix(M)
    a = np.trace(m)
    shift = a / 3.0
    B = m - shift * np.eye(3)
    p2 = np.sum(B * B) / 6.0
    if p2 <= 0.0:
        return np.full(3, shift)
    p = np.sqrt(p2)
    r = np.linalg.det(B / p) / 2.0
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    l1 = shift + 2.0 * p * np.cos(phi)
    l3 = shift + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    l2 = a - l1 - l3
    return np.sort([l3, l2, l1])


def _null_vector(A, scale):
    """Unit vector spanning (approximately) the null space of rank-2 ``A``."""
    rows = A
    crosses = [
        np.cross(rows[0], rows[1]),
        np.cross(rows[0], rows[2]),
        np.cross(rows[1], rows[2]),
    ]
    norms = [np.linalg.norm(c) for c in crosses]
    best = int(np.argmax(norms))
    if norms[best] > 1e-12 * scale**2:
        return crosses[best] / norms[best]
    # rank <= 1: any vector orthogonal to the dominant row
    row_norms = np.linalg.norm(rows, axis=1)
    r = rows[int(np.argmax(row_norms))]
    if row_norms.max() <= 1e-12 * scale:
        return np.array([1.0, 0.0, 0.0])
    e = np.eye(3)[int(np.argmin(np.abs(r)))]
    v = np.cross(r, e)
    return v / np.linalg.norm(v)


def normalize_sign(v):
    """Flip ``v`` so its first non-negligible component is positive."""
    for comp in v:
        if abs(comp) > 1e-12:
            return v if comp > 0 else -v
    return v


class Eigenpair(NamedTuple):
    value: float
    vector: np.ndarray
    degenerate: bool


def smallest_eigenpair(M):
    """Smallest eigenvalue of symmetric 3x3 ``M`` and its unit eigenvector.

    ``degenerate`` is set when the two smallest eigenvalues are closer than
    ``1e-9 * max(1, trace(M))``; the vector is then an arbitrary member of
    the (near-)repeated eigenspace.
    """
    m = _as_matrix(M)
    evals = symmetric_eigenvalues(m)
    lam = evals[0]
    scale = max(1.0, abs(np.trace(m)))
    vec = normalize_sign(_null_vector(m - lam * np.eye(3), scale))
    degenerate = bool(evals[1] - evals[0] < DEGENERACY_RTOL * scale)
    return Eigenpair(float(lam), vec, degenerate)


def fit_plane(scatter):
    """Least-squares plane of the points summarised by ``scatter``.

    Returns ``(plane, residual)`` where ``residual`` is the smallest
    eigenvalue of the scatter matrix, i.e. the summed squared point-to-plane
    distance at the optimum.
    """
    if not isinstance(scatter, ScatterMatrix) or scatter.centroid is None:
        raise ValueError("fit_plane needs a ScatterMatrix with a cached centroid")
    evals = symmetric_eigenvalues(scatter.M)
    scale = max(1.0, abs(np.trace(scatter.M)))
    if evals[1] <= DEGENERACY_RTOL * scale:
        raise CollinearPoints("points do not span a plane")
    lam, n, _ = smallest_eigenpair(scatter.M)
    return Plane(n, -n @ scatter.centroid), lam

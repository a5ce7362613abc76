"""Brute-force reference computations used to check the analytic paths.

Nothing here touches :mod:`planeadjust.derivatives` or the solvers; the
finite-difference helpers take plain callables.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import MissingRawPoints
from .geometry import cgr_to_transform, fit_plane, scatter_from_points


@dataclass(frozen=True)
class FdSpec:
    step: float = 1e-5
    scheme: str = "central"

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("finite-difference step must be positive")
        if self.scheme != "central":
            raise ValueError("only central differences are supported")


def fd_gradient(f, x, spec=FdSpec()):
    x = np.asarray(x, dtype=float)
    h = spec.step
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_hessian(f, x, spec=FdSpec()):
    """Second-order central stencil; the result is symmetrised."""
    x = np.asarray(x, dtype=float)
    h = spec.step
    n = x.size
    H = np.zeros((n, n))
    f0 = f(x)
    eye = np.eye(n) * h
    for i in range(n):
        H[i, i] = (f(x + eye[i]) - 2.0 * f0 + f(x - eye[i])) / (h * h)
        for j in range(i + 1, n):
            H[i, j] = (
                f(x + eye[i] + eye[j])
                - f(x + eye[i] - eye[j])
                - f(x - eye[i] + eye[j])
                + f(x - eye[i] - eye[j])
            ) / (4.0 * h * h)
            H[j, i] = H[i, j]
    return H


def jacobi_eigensolve(M, tol=1e-14, max_sweeps=100):
    """Classical cyclic Jacobi rotations; eigenvalues ascending, vectors as columns."""
    A = np.array(M, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    order = np.argsort(np.diag(A))
    return np.diag(A)[order], V[:, order]


def perturbed_cost(evaluate, base_poses, pose_ids=None):
    """Wrap ``evaluate(poses)`` as a function of stacked 6-vectors.

    Each selected pose is left-multiplied by the CGR transform of its
    6-vector, mirroring how the solvers apply increments.
    """
    base = np.asarray(base_poses, dtype=float).reshape(-1, 4, 4)
    ids = list(range(len(base))) if pose_ids is None else list(pose_ids)

    def f(x):
        X = base.copy()
        for r, j in enumerate(ids):
            X[j] = cgr_to_transform(x[6 * r : 6 * r + 6]) @ base[j]
        return evaluate(X)

    return f


def raw_point_cost(raw_points, poses, planes=None):
    """Summed squared point-to-plane distance straight from raw points.

    ``raw_points`` maps ``(plane_id, pose_id)`` to local-frame points. With
    ``planes`` omitted each plane is replaced by its best fit.
    """
    if raw_points is None:
        raise MissingRawPoints("raw points are required for this check")
    items = raw_points.points if hasattr(raw_points, "points") else raw_points
    X = np.asarray(
        [p.matrix() if hasattr(p, "matrix") else p for p in poses], dtype=float
    )
    pooled = {}
    for (i, j), pts in sorted(items.items()):
        pts = np.asarray(pts, dtype=float)
        pooled.setdefault(i, []).append(pts @ X[j][:3, :3].T + X[j][:3, 3])
    total = 0.0
    for i, chunks in sorted(pooled.items()):
        glob = np.vstack(chunks)
        if planes is None:
            total += fit_plane(scatter_from_points(glob))[1]
        else:
            pl = planes[i]
            n, d = (pl.n, pl.d) if hasattr(pl, "n") else (pl[:3], pl[3])
            for pt in glob:
                r = n @ pt + d
                total += r * r
    return float(total)


def relative_error(actual, expected):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    denom = max(np.linalg.norm(expected), 1e-300)
    return float(np.linalg.norm(actual - expected) / denom)

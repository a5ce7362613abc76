"""Closed-form gradient and Hessian of a plane's smallest scatter eigenvalue.

The smallest eigenvalue ``lam`` of ``M`` is a root of
``-lam^3 + a lam^2 + b lam + c = 0`` where ``a, b, c`` are polynomials in the
entries of ``M``. Implicit differentiation of that cubic gives the pose
derivatives of ``lam`` from the derivatives of ``a, b, c``, which in turn
come from the derivatives of the six unique entries of ``M``.

Pose derivatives are taken at ``x0 = 0`` of the CGR/translation
parameterisation ``x = [s; t]`` with a left-multiplied increment, i.e. the
statistics must already be expressed in the current global frame.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import IndexNotObserved, SamePoseIndex
from .geometry import characteristic_coeffs, skew, symmetric_eigenvalues

# unique entries of a symmetric 3x3 matrix, in the order m11 m12 m13 m22 m23 m33
ENTRIES = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_ROWS = np.array([e[0] for e in ENTRIES])
_COLS = np.array([e[1] for e in ENTRIES])

# a, b, c as sums of monomials: (coefficient, entry indices into ENTRIES)
POLY_A = ((1.0, (0,)), (1.0, (3,)), (1.0, (5,)))
POLY_B = (
    (1.0, (1, 1)),
    (1.0, (2, 2)),
    (1.0, (4, 4)),
    (-1.0, (0, 3)),
    (-1.0, (0, 5)),
    (-1.0, (3, 5)),
)
POLY_C = (
    (-1.0, (5, 1, 1)),
    (2.0, (1, 2, 4)),
    (-1.0, (3, 2, 2)),
    (-1.0, (0, 4, 4)),
    (1.0, (0, 3, 5)),
)

DEGENERATE_RTOL = 1e-9


def _pose_generators():
    """First and second derivatives of ``T(x) = [R(s), t]`` at ``x = 0``.

    ``R(s)`` expands as ``I + 2[s]_x + 2 s s^T - 2 (s.s) I + O(|s|^3)``.
    """
    eye = np.eye(3)
    A = np.zeros((6, 3, 4))
    for m in range(3):
        A[m, :, :3] = 2.0 * skew(eye[m])
        A[m + 3, m, 3] = 1.0
    B = np.zeros((6, 6, 3, 4))
    for m in range(3):
        for n in range(3):
            B[m, n, :, :3] = 2.0 * (
                np.outer(eye[m], eye[n]) + np.outer(eye[n], eye[m])
            ) - 4.0 * (m == n) * eye
    return A, B


TANGENT, CURVATURE = _pose_generators()


def unique_entries(M):
    """``(..., 3, 3) -> (..., 6)`` in :data:`ENTRIES` order."""
    return M[..., _ROWS, _COLS]


def poly_derivatives(poly, m6):
    """Gradient (6,) and Hessian (6, 6) of a monomial polynomial in ``m6``."""
    grad = np.zeros(6)
    hess = np.zeros((6, 6))
    for coef, idx in poly:
        for r, er in enumerate(idx):
            rest = [e for s, e in enumerate(idx) if s != r]
            grad[er] += coef * np.prod(m6[rest])
            for s, es in enumerate(idx):
                if s == r:
                    continue
                others = [e for u, e in enumerate(idx) if u not in (r, s)]
                hess[er, es] += coef * np.prod(m6[others])
    return grad, hess


def coefficient_derivatives(M):
    """Gradients (3, 6) and Hessians (3, 6, 6) of ``(a, b, c)`` w.r.t. entries."""
    m6 = unique_entries(np.asarray(M, dtype=float))
    grads, hessians = zip(*(poly_derivatives(p, m6) for p in (POLY_A, POLY_B, POLY_C)))
    return np.array(grads), np.array(hessians)


@dataclass(frozen=True)
class EigenState:
    M: np.ndarray
    a: float
    b: float
    c: float
    lam: float
    chi: np.ndarray
    kappa: np.ndarray
    phi: float
    degenerate: bool

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        a, b, c = characteristic_coeffs(M)
        lam = float(symmetric_eigenvalues(M)[0])
        chi = np.array([lam * lam, lam, 1.0])
        kappa = np.array([-3.0, 2.0 * a, b])
        slope = kappa @ chi
        degenerate = bool(abs(slope) < DEGENERATE_RTOL * max(1.0, a * a))
        phi = np.inf if slope == 0.0 else 1.0 / slope
        return cls(M, a, b, c, lam, chi, kappa, phi, degenerate)

    @property
    def cubic_residual(self):
        lam = self.lam
        return -(lam**3) + self.a * lam**2 + self.b * lam + self.c


@dataclass(frozen=True)
class SurrogateDecomposition:
    """Pose-dependent parts of ``M_i`` around one pose (``Q``, ``K``) or a pair (``O``)."""

    Q: np.ndarray = None
    K: np.ndarray = None
    O: np.ndarray = None


class MeanPointDecomposition(NamedTuple):
    q_j: np.ndarray
    q_k: np.ndarray
    c_jk: np.ndarray
    c_j: np.ndarray


def _plane_stats(problem, plane_id, poses):
    block = problem.blocks[plane_id]
    X = problem.pose_matrices() if poses is None else np.asarray(poses).reshape(-1, 4, 4)
    lookup = {int(j): r for r, j in enumerate(block.pose_ids)}
    return block, X, lookup


def _row(lookup, plane_id, j):
    try:
        return lookup[int(j)]
    except KeyError:
        raise IndexNotObserved(f"pose {j} does not observe plane {plane_id}") from None


def mean_point_decomposition(problem, plane_id, j, k, poses=None):
    """Split the plane centroid as ``T_j q_j + T_k q_k + c_jk``."""
    block, X, lookup = _plane_stats(problem, plane_id, poses)
    rj, rk = _row(lookup, plane_id, j), _row(lookup, plane_id, k)
    N = block.n_points
    q_j = block.p[rj] / N
    q_k = block.p[rk] / N
    rest = [r for r in range(len(block.pose_ids)) if r not in (rj, rk)]
    c_jk = np.zeros(3)
    for r in rest:
        c_jk += X[block.pose_ids[r], :3] @ block.p[r]
    c_jk /= N
    c_j = X[int(k), :3] @ q_k + c_jk if rk != rj else c_jk
    return MeanPointDecomposition(q_j, q_k, c_jk, c_j)


def surrogate_single(problem, plane_id, j, poses=None):
    """``Q``, ``K`` with ``M_i(T_j) = T_j Q T_j^T + T_j K + K^T T_j^T + const``."""
    block, X, lookup = _plane_stats(problem, plane_id, poses)
    rj = _row(lookup, plane_id, j)
    N = block.n_points
    q = block.p[rj] / N
    others = [r for r in range(len(block.pose_ids)) if r != rj]
    c = sum((X[block.pose_ids[r], :3] @ block.p[r] for r in others), np.zeros(3)) / N
    Q = block.U[rj] - N * np.outer(q, q)
    K = -N * np.outer(q, c)
    return SurrogateDecomposition(Q=0.5 * (Q + Q.T), K=K)


def surrogate_pair(problem, plane_id, j, k, poses=None):
    """``O`` with ``M_i(T_j, T_k) = T_j O T_k^T + T_k O^T T_j^T + const``."""
    if int(j) == int(k):
        raise SamePoseIndex("cross decomposition needs two distinct poses")
    block, _, lookup = _plane_stats(problem, plane_id, poses)
    rj, rk = _row(lookup, plane_id, j), _row(lookup, plane_id, k)
    N = block.n_points
    O = -N * np.outer(block.p[rj] / N, block.p[rk] / N)
    return SurrogateDecomposition(O=O)


def own_pose_partials(Q, K):
    """First (..., 6, 6) and second (..., 6, 6, 6) partials of the ``m_ef``.

    Layout: ``d1[..., m, e]`` is the derivative of entry ``e`` w.r.t. pose
    variable ``m``; ``d2[..., m, n, e]`` the second derivative.
    """
    Q = np.asarray(Q, dtype=float)
    K = np.asarray(K, dtype=float)
    G = Q[..., :, :3] + K
    S1 = np.einsum("mab,...bc->...mac", TANGENT, G)
    d1 = S1 + np.swapaxes(S1, -1, -2)
    S2 = np.einsum("mnab,...bc->...mnac", CURVATURE, G)
    AQA = np.einsum("mab,...bc,ndc->...mnad", TANGENT, Q, TANGENT, optimize=True)
    d2 = (
        S2
        + np.swapaxes(S2, -1, -2)
        + AQA
        + np.swapaxes(AQA, -3, -4)
    )
    return unique_entries(d1), unique_entries(d2)


def cross_pose_partials(O):
    """Mixed second partials ``d2[..., m, n, e]`` w.r.t. ``x_jm`` and ``x_kn``."""
    O = np.asarray(O, dtype=float)
    AOA = np.einsum("mab,...bc,ndc->...mnad", TANGENT, O, TANGENT, optimize=True)
    return unique_entries(AOA + np.swapaxes(AOA, -1, -2))


def cross_pose_partials_rank1(N, q):
    """All-pairs :func:`cross_pose_partials` for ``O_jk = -N q_j q_k^T``.

    ``q`` is (P, 4); the result is (P, P, 6, 6, 6). Uses the factorisation
    ``A_m O_jk A_n^T = -N (A_m q_j)(A_n q_k)^T``.
    """
    W = np.einsum("mab,jb->jma", TANGENT, q)
    Wr, Wc = W[:, :, _ROWS], W[:, :, _COLS]
    return -N * (
        np.einsum("jme,kne->jkmne", Wr, Wc) + np.einsum("kne,jme->jkmne", Wr, Wc)
    )


class MPartials(NamedTuple):
    first: np.ndarray
    second: np.ndarray
    cross: np.ndarray


def m_partials_at_identity(Q, K, O=None):
    """Entry partials of ``M`` at ``x_j = x_k = x0`` for the tabulated set.

    Returns first partials (6, 6), own-pose second partials (6, 6, 6) and,
    when ``O`` is given, cross-pose second partials (6, 6, 6); the last axis
    runs over :data:`ENTRIES`.
    """
    d1, d2 = own_pose_partials(Q, K)
    cross = None if O is None else cross_pose_partials(O)
    return MPartials(d1, d2, cross)


@dataclass(frozen=True)
class AbcDerivatives:
    Delta: np.ndarray  # (..., 6, 3): columns alpha, beta, gamma
    H_a: np.ndarray
    H_b: np.ndarray
    H_c: np.ndarray

    @property
    def alpha(self):
        return self.Delta[..., 0]

    @property
    def beta(self):
        return self.Delta[..., 1]

    @property
    def gamma(self):
        return self.Delta[..., 2]


def abc_derivatives(M, d1_j, d2_jk, d1_k=None):
    """Chain rule from entry partials to partials of ``a, b, c``.

    ``d2_jk`` is the own-pose second partial when ``d1_k`` is omitted, the
    cross-pose one otherwise. ``Delta`` always refers to pose ``j``.
    """
    grads, hessians = coefficient_derivatives(M)
    d1_j = np.asarray(d1_j, dtype=float)
    d1_k = d1_j if d1_k is None else np.asarray(d1_k, dtype=float)
    Delta = np.einsum("...me,ce->...mc", d1_j, grads)
    H = np.einsum(
        "...me,cef,...nf->c...mn", d1_j, hessians, d1_k, optimize=True
    ) + np.einsum(
        "...mne,ce->c...mn", d2_jk, grads
    )
    return AbcDerivatives(Delta, H[0], H[1], H[2])


def lambda_gradient_block(state, Delta):
    """``d lam / d x_j = -phi * Delta_j @ chi``."""
    return -state.phi * np.asarray(Delta) @ state.chi


def lambda_hessian_block(state, Delta_j, Delta_k, H_a, H_b, H_c, g_j, g_k):
    """``d2 lam / d x_j d x_k`` as a 6x6 block (row index on ``x_j``).

    ``-phi * (g_j u_k^T + v_j g_k^T + lam^2 H_a + lam H_b + H_c)`` with
    ``u_k = 2 lam alpha_k + beta_k + (2a - 6 lam) g_k`` (the derivative of
    ``1/phi`` along ``x_k``) and ``v_j = 2 lam alpha_j + beta_j``.
    """
    lam, a = state.lam, state.a
    u_k = 2.0 * lam * Delta_k[..., 0] + Delta_k[..., 1] + (2.0 * a - 6.0 * lam) * g_k
    v_j = 2.0 * lam * Delta_j[..., 0] + Delta_j[..., 1]
    K = np.einsum("...m,...n->...mn", g_j, u_k) + np.einsum(
        "...m,...n->...mn", v_j, g_k
    )
    return -state.phi * (K + lam * lam * H_a + lam * H_b + H_c)


def symmetrize(H):
    """Symmetrised copy of a diagonal block plus its max asymmetry."""
    Ht = np.swapaxes(H, -1, -2)
    return 0.5 * (H + Ht), float(np.max(np.abs(H - Ht), initial=0.0))


@dataclass
class PlaneDerivatives:
    state: EigenState
    pose_ids: np.ndarray
    gradient: np.ndarray  # (P, 6)
    hessian: np.ndarray  # (P, P, 6, 6); [j, k] = d2 lam / d x_j d x_k
    asymmetry: float = 0.0


def plane_derivatives(block, hessian=True):
    """Gradient and Hessian blocks of one plane's smallest eigenvalue.

    ``block`` holds statistics already re-expressed in the current global
    frame, so every observing pose sits at ``x0``. Degenerate planes come
    back with zero derivatives and ``state.degenerate`` set.
    """
    from .problem import scatter_from_block

    scatter = scatter_from_block(block)
    state = EigenState.from_matrix(scatter.M)
    P = len(block.pose_ids)
    if state.degenerate:
        return PlaneDerivatives(
            state, block.pose_ids, np.zeros((P, 6)), np.zeros((P, P, 6, 6))
        )
    N = float(block.n_points)
    q = block.p / N
    c = scatter.centroid - q[:, :3]
    Q = block.U - N * np.einsum("ja,jb->jab", q, q)
    K = -N * np.einsum("ja,jb->jab", q, c)
    d1, d2 = own_pose_partials(Q, K)
    own = abc_derivatives(state.M, d1, d2)
    g = lambda_gradient_block(state, own.Delta)
    if not hessian:
        return PlaneDerivatives(state, block.pose_ids, g, None)

    d2x = cross_pose_partials_rank1(N, q)
    cross = abc_derivatives(state.M, d1[:, None], d2x, d1[None, :])
    Hx = lambda_hessian_block(
        state,
        own.Delta[:, None],
        own.Delta[None, :],
        cross.H_a,
        cross.H_b,
        cross.H_c,
        g[:, None],
        g[None, :],
    )
    Hd = lambda_hessian_block(state, own.Delta, own.Delta, own.H_a, own.H_b, own.H_c, g, g)
    Hd, asym = symmetrize(Hd)
    idx = np.arange(P)
    Hx[idx, idx] = Hd
    return PlaneDerivatives(state, block.pose_ids, g, Hx, asym)

"""Joint Levenberg-Marquardt over planes and poses (the comparison baseline).

Residuals are point-to-plane distances ``pi~^T X_j p~``. Their Gauss-Newton
normal equations are formed straight from the track statistics:
with ``f = X_j^T pi~`` and ``F = df/dtheta`` the block is ``F^T U F``.
Plane variables are eliminated per step with the Schur complement.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .damping import damped_minimize
from .exceptions import FactorizationFailure
from .geometry import fit_plane, skew
from .newton import increments
from .problem import as_pose_array, scatter_from_block
from .report import SolverConfig


def tangent_basis(n):
    """Two unit vectors orthogonal to ``n`` (and to each other)."""
    e = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = np.cross(n, e)
    u /= np.linalg.norm(u)
    return np.array([u, np.cross(n, u)]).T


@dataclass
class JointState:
    poses: np.ndarray  # (N, 4, 4)
    planes: np.ndarray  # (M, 4) rows [n; d], |n| = 1

    def copy(self):
        return JointState(self.poses.copy(), self.planes.copy())


def lm_initialize_planes(problem, poses=None):
    """Best-fit plane for each plane's pooled statistics at the given poses."""
    X = as_pose_array(problem.poses if poses is None else poses).astype(float)
    planes = []
    for block in problem.blocks:
        plane, _ = fit_plane(scatter_from_block(block.transformed(X[block.pose_ids])))
        planes.append(plane.vector)
    return JointState(X, np.array(planes))


def track_costs(state, problem):
    """Per-plane ``sum_j pi~^T X_j U_ij X_j^T pi~``.

    Evaluated in the centered form ``n^T M n + N (n.c + d)^2``, which is the
    same quantity but shares its rounding with the eigenvalue path.
    """
    out = np.zeros(problem.plane_count)
    for block in problem.blocks:
        sc = scatter_from_block(block.transformed(state.poses[block.pose_ids]))
        n, d = state.planes[block.plane_id, :3], state.planes[block.plane_id, 3]
        out[block.plane_id] = n @ sc.M @ n + sc.count * (n @ sc.centroid + d) ** 2
    return out


def joint_cost(state, problem):
    return float(track_costs(state, problem).sum())


@dataclass
class NormalEquations:
    """Damping-free Gauss-Newton system ``2 J^T J``, ``2 J^T r``."""

    Hpp: np.ndarray  # (6N, 6N)
    Hll: np.ndarray  # (M, 3, 3)
    Hpl: np.ndarray  # (6N, 3M)
    gp: np.ndarray
    gl: np.ndarray
    gauge_mask: frozenset = frozenset()
    skipped_degenerate: int = 0

    def grad_inf_norm(self):
        free = [i for i in range(len(self.gp)) if i not in self.gauge_mask]
        return float(
            max(np.max(np.abs(self.gp[free]), initial=0.0), np.max(np.abs(self.gl), initial=0.0))
        )


def linearize(state, problem, gauge="fix-first-pose"):
    N, M = len(state.poses), problem.plane_count
    Hpp = np.zeros((6 * N, 6 * N))
    Hll = np.zeros((M, 3, 3))
    Hpl = np.zeros((6 * N, 3 * M))
    gp = np.zeros(6 * N)
    gl = np.zeros(3 * M)
    for block in problem.blocks:
        i = block.plane_id
        pi = state.planes[i]
        n = pi[:3]
        Dpose = np.zeros((4, 6))
        Dpose[:3, :3] = 2.0 * skew(n)
        Dpose[3, 3:] = n
        Dplane = np.zeros((4, 3))
        Dplane[:3, :2] = tangent_basis(n)
        Dplane[3, 2] = 1.0
        Xt = np.swapaxes(state.poses[block.pose_ids], -1, -2)
        f = Xt @ pi
        Fp = Xt @ Dpose
        Fl = Xt @ Dplane
        UFp = block.U @ Fp
        UFl = block.U @ Fl
        Uf = np.einsum("jab,jb->ja", block.U, f)
        for r, j in enumerate(block.pose_ids):
            sp = slice(6 * j, 6 * j + 6)
            Hpp[sp, sp] += 2.0 * Fp[r].T @ UFp[r]
            Hpl[sp, 3 * i : 3 * i + 3] += 2.0 * Fp[r].T @ UFl[r]
            gp[sp] += 2.0 * Fp[r].T @ Uf[r]
        Hll[i] = 2.0 * np.einsum("jab,jac->bc", Fl, UFl)
        gl[3 * i : 3 * i + 3] = 2.0 * np.einsum("jab,ja->b", Fl, Uf)
    mask = frozenset(range(6)) if gauge == "fix-first-pose" else frozenset()
    return NormalEquations(Hpp, Hll, Hpl, gp, gl, mask)


def schur_step(eqs, mu):
    """Damped step with planes eliminated; returns ``(dpose, dplane)``."""
    M = len(eqs.Hll)
    free = np.array([i for i in range(len(eqs.gp)) if i not in eqs.gauge_mask], dtype=int)
    Hll_inv = np.linalg.inv(eqs.Hll + mu * np.eye(3))
    S = eqs.Hpp + mu * np.eye(len(eqs.gp))
    rhs = -eqs.gp.copy()
    for i in range(M):
        W = eqs.Hpl[:, 3 * i : 3 * i + 3]
        WHinv = W @ Hll_inv[i]
        S -= WHinv @ W.T
        rhs += WHinv @ eqs.gl[3 * i : 3 * i + 3]
    try:
        factor = scipy.linalg.cho_factor(S[np.ix_(free, free)], lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationFailure(str(exc)) from exc
    dpose = np.zeros_like(eqs.gp)
    dpose[free] = scipy.linalg.cho_solve(factor, rhs[free])
    dplane = np.zeros(3 * M)
    for i in range(M):
        sl = slice(3 * i, 3 * i + 3)
        dplane[sl] = Hll_inv[i] @ (-eqs.gl[sl] - eqs.Hpl[:, sl].T @ dpose)
    return dpose, dplane


def dense_step(eqs, mu):
    """Same damped step from the full (poses + planes) system, for checking."""
    P, L = len(eqs.gp), 3 * len(eqs.Hll)
    H = np.zeros((P + L, P + L))
    H[:P, :P] = eqs.Hpp
    H[:P, P:] = eqs.Hpl
    H[P:, :P] = eqs.Hpl.T
    H[P:, P:] = scipy.linalg.block_diag(*eqs.Hll)
    g = np.concatenate([eqs.gp, eqs.gl])
    keep = np.array([i for i in range(P + L) if i not in eqs.gauge_mask], dtype=int)
    A = H[np.ix_(keep, keep)] + mu * np.eye(len(keep))
    dx = np.zeros(P + L)
    dx[keep] = np.linalg.solve(A, -g[keep])
    return dx[:P], dx[P:]


def retract(state, dpose, dplane):
    poses = np.einsum("jab,jbc->jac", increments(dpose), state.poses)
    planes = state.planes.copy()
    for i, pi in enumerate(planes):
        delta = dplane[3 * i : 3 * i + 3]
        n = pi[:3] + tangent_basis(pi[:3]) @ delta[:2]
        planes[i, :3] = n / np.linalg.norm(n)
        planes[i, 3] = pi[3] + delta[2]
    return JointState(poses, planes)


def lm_solve(problem, config=None, initial_poses=None, state=None):
    """Joint LM from planes fitted at the initial poses.

    Returns ``(poses, planes, report)``; the report's ``tau`` column holds
    the joint point-to-plane cost.
    """
    config = config or SolverConfig()
    if state is None:
        state = lm_initialize_planes(problem, initial_poses)

    def lin(s):
        return linearize(s, problem, config.gauge), joint_cost(s, problem)

    def propose(s, eqs, mu):
        dpose, dplane = schur_step(eqs, mu)
        trial = retract(s, dpose, dplane)
        return trial, joint_cost(trial, problem), np.concatenate([dpose, dplane])

    state, report = damped_minimize(state, lin, propose, config, "lm")
    report.final_poses = state.poses.copy()
    return state.poses.copy(), state.planes.copy(), report

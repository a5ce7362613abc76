"""Damped Newton plane adjustment on the plane-eliminated cost.

Every iteration re-expresses the track statistics in the current global
frame, so all poses are differentiated at the identity parameterisation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .damping import damped_minimize
from .derivatives import plane_derivatives
from .exceptions import FactorizationFailure
from .geometry import cgr_to_transform, symmetric_eigenvalues
from .problem import as_pose_array, scatter_from_block
from .report import SolverConfig


class RecenteredProblem:
    """Track statistics transformed by the current pose estimates.

    ``poses`` holds the accumulated 4x4 transforms; ``blocks`` the per-plane
    statistics already mapped to the global frame by those transforms.
    """

    def __init__(self, problem, poses, blocks):
        self.problem = problem
        self.poses = poses
        self.blocks = blocks

    @classmethod
    def from_problem(cls, problem, poses=None):
        X = as_pose_array(problem.poses if poses is None else poses).astype(float)
        blocks = [b.transformed(X[b.pose_ids]) for b in problem.blocks]
        return cls(problem, X, blocks)

    @property
    def pose_count(self):
        return len(self.poses)


def plane_cost(block):
    return symmetric_eigenvalues(scatter_from_block(block).M)[0]


def evaluate(rp):
    """Cost of a re-centered problem (poses at ``x0``)."""
    total = 0.0
    for b in rp.blocks:
        total += plane_cost(b)
    return float(total)


@dataclass
class BlockSystem:
    H: np.ndarray
    g: np.ndarray
    pattern: set = field(default_factory=set)
    gauge_mask: frozenset = frozenset()
    skipped_degenerate: int = 0
    asymmetry: float = 0.0

    def block(self, j, k):
        return self.H[6 * j : 6 * j + 6, 6 * k : 6 * k + 6]

    @property
    def free(self):
        return np.array(
            [i for i in range(len(self.g)) if i not in self.gauge_mask], dtype=int
        )

    def grad_inf_norm(self):
        free = self.free
        return float(np.max(np.abs(self.g[free]), initial=0.0))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def assemble(rp, threads=1, hessian=True):
    """Gradient and block Hessian of the cost at the current poses.

    Returns ``(system, tau, plane_results)``. Per-plane results are reduced
    in plane order, so the output does not depend on ``threads``.
    """
    n = rp.pose_count
    H = np.zeros((6 * n, 6 * n))
    g = np.zeros(6 * n)
    pattern = set()
    results = _map(lambda b: plane_derivatives(b, hessian=hessian), rp.blocks, threads)
    tau = 0.0
    skipped = 0
    asym = 0.0
    for res in results:
        tau += res.state.lam
        if res.state.degenerate:
            skipped += 1
            continue
        asym = max(asym, res.asymmetry)
        ids = res.pose_ids
        for r, j in enumerate(ids):
            g[6 * j : 6 * j + 6] += res.gradient[r]
        if not hessian:
            continue
        rows = (6 * ids[:, None] + np.arange(6)).ravel()
        P = len(ids)
        H[np.ix_(rows, rows)] += res.hessian.transpose(0, 2, 1, 3).reshape(6 * P, 6 * P)
        pattern.update((int(j), int(k)) for j in ids for k in ids)
    system = BlockSystem(H, g, pattern, frozenset(), skipped, asym)
    return system, float(tau), results


def fix_gauge(system, mode):
    """Freeze pose 0 (``fix-first-pose``) or leave the gauge to damping (``free``)."""
    if mode == "fix-first-pose":
        system.gauge_mask = frozenset(range(6))
    elif mode == "free":
        system.gauge_mask = frozenset()
    else:
        raise ValueError(f"unknown gauge mode {mode!r}")
    return system


def newton_step(system, mu):
    """Solve ``(H + mu I) dx = -g`` over the free variables by Cholesky.

    Raises :class:`FactorizationFailure` when the damped matrix is not
    positive definite; the caller should raise ``mu`` and retry.
    """
    free = system.free
    A = system.H[np.ix_(free, free)] + mu * np.eye(len(free))
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationFailure(str(exc)) from exc
    dx = np.zeros_like(system.g)
    dx[free] = scipy.linalg.cho_solve(factor, -system.g[free])
    return dx


def increments(dx):
    """Per-pose 4x4 transforms from a stacked 6N step."""
    dx = np.asarray(dx, dtype=float).reshape(-1, 6)
    return np.array([cgr_to_transform(x) for x in dx])


def apply_and_recenter(rp, dx):
    """Left-compose the step onto every pose and re-express the statistics."""
    dX = increments(dx)
    poses = np.einsum("jab,jbc->jac", dX, rp.poses)
    blocks = [b.transformed(dX[b.pose_ids]) for b in rp.blocks]
    return RecenteredProblem(rp.problem, poses, blocks)


def solve(problem, config=None, initial_poses=None):
    """Minimise the plane-eliminated cost over all poses.

    Returns ``(final_poses, report)``. Non-convergence is reported through
    ``report.termination`` rather than raised.
    """
    config = config or SolverConfig()

    def linearize(rp):
        system, tau, _ = assemble(rp, config.threads)
        return fix_gauge(system, config.gauge), tau

    def propose(rp, system, mu):
        dx = newton_step(system, mu)
        trial = apply_and_recenter(rp, dx)
        return trial, evaluate(trial), dx

    rp = RecenteredProblem.from_problem(problem, initial_poses)
    rp, report = damped_minimize(rp, linearize, propose, config, "newton")
    report.final_poses = rp.poses.copy()
    return rp.poses.copy(), report

"""scikit-learn style wrappers around the two solvers.

``fit`` takes a :class:`PlaneAdjustProblem` whose poses are the initial
estimates; ``transform`` returns the same problem with the refined poses.
"""

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import MismatchedDatasets
from .lm import lm_solve
from .newton import solve
from .problem import evaluate_cost
from .report import SolverConfig
from .validation import check_poses, check_problem


class _PlaneAdjuster(BaseEstimator, TransformerMixin):
    def __init__(
        self,
        mu0=1e-4,
        max_iters=200,
        tol=1e-7,
        gauge="fix-first-pose",
        mu_increase=2.0,
        mu_decrease=3.0,
        max_rejections=32,
        threads=1,
    ):
        self.mu0 = mu0
        self.max_iters = max_iters
        self.tol = tol
        self.gauge = gauge
        self.mu_increase = mu_increase
        self.mu_decrease = mu_decrease
        self.max_rejections = max_rejections
        self.threads = threads

    def _config(self):
        return SolverConfig(
            mu0=self.mu0,
            max_iters=self.max_iters,
            tol_cost_change=self.tol,
            tol_grad_norm=self.tol,
            mu_increase=self.mu_increase,
            mu_decrease=self.mu_decrease,
            max_rejections=self.max_rejections,
            gauge=self.gauge,
            threads=self.threads,
        )

    def _run(self, problem, config, initial_poses):
        raise NotImplementedError

    def fit(self, X, y=None, initial_poses=None):
        """Refine the poses of problem ``X`` (``y`` is ignored)."""
        problem = check_problem(X)
        init = None if initial_poses is None else check_poses(initial_poses, problem.pose_count)
        self.config_ = self._config()
        self.poses_, self.report_ = self._run(problem, self.config_, init)
        self.cost_ = evaluate_cost(problem, self.poses_)
        self.n_iter_ = self.report_.iterations
        self.converged_ = self.report_.converged
        self._tracks = problem.tracks
        return self

    def transform(self, X):
        check_is_fitted(self, "poses_")
        problem = check_problem(X)
        if problem.tracks != self._tracks:
            raise MismatchedDatasets("transform expects the problem the estimator was fitted on")
        return problem.with_poses(self.poses_)

    def score(self, X, y=None):
        """Negative plane-eliminated cost at the fitted poses (higher is better)."""
        return -evaluate_cost(self.transform(X))


class NewtonPlaneAdjuster(_PlaneAdjuster):
    """Damped Newton on the plane-eliminated cost."""

    def _run(self, problem, config, initial_poses):
        return solve(problem, config, initial_poses)


class LMPlaneAdjuster(_PlaneAdjuster):
    """Joint Levenberg-Marquardt baseline; also exposes the fitted ``planes_``."""

    def _run(self, problem, config, initial_poses):
        poses, planes, report = lm_solve(problem, config, initial_poses)
        self.planes_ = planes
        return poses, report

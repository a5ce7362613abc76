"""Input validation helpers shared by the estimators, loaders and CLI."""

import numpy as np

from .exceptions import UnderconstrainedPlane
from .geometry import Pose, is_rotation
from .problem import PlaneAdjustProblem


def check_problem(problem):
    """Raise :class:`UnderconstrainedPlane` unless every plane is well posed.

    Well posed means at least two observing poses and at least three points
    in total. Returns the problem unchanged so calls can be chained.
    """
    if not isinstance(problem, PlaneAdjustProblem):
        raise TypeError(f"expected PlaneAdjustProblem, got {type(problem).__name__}")
    for block in problem.blocks:
        if len(block.pose_ids) < 2:
            raise UnderconstrainedPlane(
                f"plane {block.plane_id} is observed by {len(block.pose_ids)} pose(s), need 2"
            )
        if block.n_points < 3:
            raise UnderconstrainedPlane(
                f"plane {block.plane_id} has {block.n_points} points, need at least 3"
            )
    return problem


def check_poses(poses, n_poses=None):
    """Coerce poses (Pose objects or 4x4 arrays) to a validated (N, 4, 4) array."""
    if poses is None:
        raise ValueError("poses must not be None")
    if isinstance(poses, np.ndarray):
        X = np.asarray(poses, dtype=float)
    else:
        X = np.array(
            [p.matrix() if isinstance(p, Pose) else np.asarray(p, dtype=float) for p in poses]
        )
    if X.ndim != 3 or X.shape[1:] != (4, 4):
        raise ValueError(f"poses must have shape (N, 4, 4), got {X.shape}")
    if n_poses is not None and len(X) != n_poses:
        raise ValueError(f"expected {n_poses} poses, got {len(X)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("poses must be finite")
    for j, T in enumerate(X):
        if not is_rotation(T[:3, :3]) or not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError(f"pose {j} is not a rigid transform")
    return X

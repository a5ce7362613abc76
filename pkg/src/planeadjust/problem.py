"""Plane-adjustment data model built on per-track sufficient statistics."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import EmptyObservation, UnderconstrainedPlane
from .geometry import Pose, ScatterMatrix, smallest_eigenpair


@dataclass(frozen=True, eq=False)
class TrackStats:
    """Points of one plane seen from one pose, reduced to moments.

    ``U = sum p~ p~^T`` and ``p = sum p~`` over homogeneous local points
    ``p~ = [p; 1]``; ``N`` is the point count.
    """

    plane_id: int
    pose_id: int
    N: int
    U: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        U = np.array(self.U, dtype=float).reshape(4, 4)
        p = np.array(self.p, dtype=float).reshape(4)
        if int(self.N) < 1:
            raise EmptyObservation("track must contain at least one point")
        if p[3] != self.N or U[3, 3] != self.N:
            raise ValueError("homogeneous entries of U and p must equal N")
        U.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "plane_id", int(self.plane_id))
        object.__setattr__(self, "pose_id", int(self.pose_id))
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "p", p)

    def __eq__(self, other):
        if not isinstance(other, TrackStats):
            return NotImplemented
        return (
            self.plane_id == other.plane_id
            and self.pose_id == other.pose_id
            and self.N == other.N
            and np.array_equal(self.U, other.U)
            and np.array_equal(self.p, other.p)
        )


def accumulate_track(plane_id, pose_id, points):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyObservation("no points in observation")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    hom = np.hstack([points, np.ones((len(points), 1))])
    U = hom.T @ hom
    U = 0.5 * (U + U.T)
    # exact integer counts in the homogeneous slots
    U[3, 3] = len(points)
    p = hom.sum(axis=0)
    p[3] = len(points)
    return TrackStats(plane_id, pose_id, len(points), U, p)


@dataclass(frozen=True)
class PlaneBlock:
    """All tracks of one plane stacked for vectorised evaluation."""

    plane_id: int
    pose_ids: np.ndarray  # (P,)
    U: np.ndarray  # (P, 4, 4)
    p: np.ndarray  # (P, 4)
    counts: np.ndarray  # (P,)

    @property
    def n_points(self):
        return int(self.counts.sum())

    def transformed(self, X):
        """Statistics re-expressed by per-track transforms ``X`` (P, 4, 4)."""
        U = X @ self.U @ np.swapaxes(X, -1, -2)
        U = 0.5 * (U + np.swapaxes(U, -1, -2))
        p = np.einsum("kab,kb->ka", X, self.p)
        return PlaneBlock(self.plane_id, self.pose_ids, U, p, self.counts)


class PlaneAdjustProblem:
    """Poses plus plane observations summarised as :class:`TrackStats`.

    Construction checks index ranges and duplicate tracks. The stricter
    well-posedness conditions (every plane seen by two poses, at least three
    points per plane) live in :func:`planeadjust.validation.check_problem`.
    """

    def __init__(self, poses, tracks, plane_count=None):
        self.poses = tuple(
            p if isinstance(p, Pose) else Pose.from_matrix(p) for p in poses
        )
        self.tracks = tuple(tracks)
        if plane_count is None:
            plane_count = 1 + max(t.plane_id for t in self.tracks) if self.tracks else 0
        self.plane_count = int(plane_count)
        seen = set()
        for t in self.tracks:
            if not 0 <= t.pose_id < len(self.poses):
                raise ValueError(f"track references unknown pose {t.pose_id}")
            if not 0 <= t.plane_id < self.plane_count:
                raise ValueError(f"track references unknown plane {t.plane_id}")
            key = (t.plane_id, t.pose_id)
            if key in seen:
                raise ValueError(f"duplicate track for plane/pose {key}")
            seen.add(key)

    @property
    def pose_count(self):
        return len(self.poses)

    def observations(self, plane_id):
        """Sorted pose indices that observe ``plane_id``."""
        return [int(j) for j in self.blocks[plane_id].pose_ids]

    @cached_property
    def blocks(self):
        per_plane = [[] for _ in range(self.plane_count)]
        for t in self.tracks:
            per_plane[t.plane_id].append(t)
        blocks = []
        for i, tracks in enumerate(per_plane):
            tracks.sort(key=lambda t: t.pose_id)
            blocks.append(
                PlaneBlock(
                    i,
                    np.array([t.pose_id for t in tracks], dtype=int),
                    np.array([t.U for t in tracks]).reshape(-1, 4, 4),
                    np.array([t.p for t in tracks]).reshape(-1, 4),
                    np.array([t.N for t in tracks], dtype=int),
                )
            )
        return blocks

    def pose_matrices(self):
        return np.array([p.matrix() for p in self.poses]).reshape(-1, 4, 4)

    def with_poses(self, poses):
        return PlaneAdjustProblem(poses, self.tracks, self.plane_count)

    def __eq__(self, other):
        if not isinstance(other, PlaneAdjustProblem):
            return NotImplemented
        return (
            self.plane_count == other.plane_count
            and self.poses == other.poses
            and self.tracks == other.tracks
        )

    def __repr__(self):
        return (
            f"PlaneAdjustProblem(poses={self.pose_count}, planes={self.plane_count}, "
            f"tracks={len(self.tracks)})"
        )


def as_pose_array(poses):
    if isinstance(poses, np.ndarray):
        return poses.reshape(-1, 4, 4)
    return np.array(
        [p.matrix() if isinstance(p, Pose) else np.asarray(p) for p in poses]
    ).reshape(-1, 4, 4)


def scatter_from_block(block):
    """Scatter matrix of a plane whose statistics are already in the global frame."""
    N = block.n_points
    if N < 3:
        raise UnderconstrainedPlane(
            f"plane {block.plane_id} has {N} points, need at least 3"
        )
    S = block.U[:, :3, :3].sum(axis=0)
    pbar = block.p[:, :3].sum(axis=0) / N
    M = S - N * np.outer(pbar, pbar)
    return ScatterMatrix(0.5 * (M + M.T), pbar, N)


def build_M(problem, plane_id, poses=None):
    """Scatter matrix ``M_i`` of one plane under the given poses."""
    X = as_pose_array(problem.poses if poses is None else poses)
    block = problem.blocks[plane_id]
    if len(block.pose_ids) == 0:
        raise UnderconstrainedPlane(f"plane {plane_id} has no observations")
    return scatter_from_block(block.transformed(X[block.pose_ids]))


def plane_costs(problem, poses=None):
    X = as_pose_array(problem.poses if poses is None else poses)
    return np.array(
        [
            smallest_eigenpair(build_M(problem, i, X)).value
            for i in range(problem.plane_count)
        ]
    )


def evaluate_cost(problem, poses=None):
    """Plane-eliminated cost: sum over planes of the smallest scatter eigenvalue."""
    return float(np.sum(plane_costs(problem, poses)))

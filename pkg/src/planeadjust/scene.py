"""Synthetic room-like scenes and pose perturbation."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import InfeasibleConfig
from .geometry import Pose, scatter_from_points, symmetric_eigenvalues
from .problem import PlaneAdjustProblem, accumulate_track

# (sigma_R degrees, sigma_t metres) for the four benchmark noise levels
NOISE_LEVELS = {1: (0.1, 0.01), 2: (1.0, 0.1), 3: (2.0, 0.2), 4: (3.0, 0.3)}


@dataclass(frozen=True)
class SceneConfig:
    plane_count: int = 20
    pose_count: int = 50
    points_per_obs: int = 100
    visibility_prob: float = 0.5
    extent: float = 10.0
    point_noise_sigma: float = 0.01
    rng_seed: int = 0
    max_retries: int = 200


@dataclass(frozen=True)
class NoiseSpec:
    sigma_r_deg: float = 0.0
    sigma_t: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.sigma_r_deg < 0 or self.sigma_t < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def level(cls, level, rng_seed=0):
        sr, st = NOISE_LEVELS[int(level)]
        return cls(sr, st, rng_seed)

    @property
    def preset_level(self):
        """Matching benchmark level number, or None for custom noise."""
        for k, v in NOISE_LEVELS.items():
            if v == (self.sigma_r_deg, self.sigma_t):
                return k
        return None


@dataclass(frozen=True)
class RawPoints:
    """Local-frame points per (plane, pose) track, kept for oracle checks."""

    points: dict

    def global_points(self, plane_id, poses):
        chunks = [
            poses[j].apply(pts)
            for (i, j), pts in sorted(self.points.items())
            if i == plane_id
        ]
        return np.vstack(chunks)


@dataclass(frozen=True)
class PlanePatch:
    normal: np.ndarray
    center: np.ndarray
    axes: np.ndarray  # (2, 3) orthonormal in-plane directions
    half_size: np.ndarray  # (2,)

    @property
    def offset(self):
        return -float(self.normal @ self.center)


def _tangent_basis(n):
    e = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = np.cross(n, e)
    u /= np.linalg.norm(u)
    return np.array([u, np.cross(n, u)])


def _make_planes(config, rng):
    L = config.extent
    planes = []
    for i in range(config.plane_count):
        if i < 3:
            # first three are axis-aligned so the normals always span 3D
            n = np.eye(3)[i] * rng.choice([-1.0, 1.0])
        else:
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
        center = rng.uniform(-L / 2, L / 2, size=3)
        half = rng.uniform(0.2 * L, 0.4 * L, size=2)
        planes.append(PlanePatch(n, center, _tangent_basis(n), half))
    return planes


def _spans_3d(normals):
    if len(normals) < 3:
        return False
    return np.linalg.svd(np.asarray(normals), compute_uv=False)[-1] > 0.3


def _draw_visibility(config, planes, rng):
    M, N = config.plane_count, config.pose_count
    for _ in range(config.max_retries):
        vis = np.zeros((M, N), dtype=bool)
        for j in range(N):
            for _ in range(config.max_retries):
                col = rng.random(M) < config.visibility_prob
                if _spans_3d([planes[i].normal for i in np.flatnonzero(col)]):
                    vis[:, j] = col
                    break
            else:
                raise InfeasibleConfig(
                    f"pose {j}: could not draw >= 3 planes with spanning normals"
                )
        if np.all(vis.sum(axis=1) >= 2):
            return vis
    raise InfeasibleConfig("could not make every plane visible from >= 2 poses")


def generate_scene(config=None, **overrides):
    """Random room-like scene.

    Returns ``(problem, ground_truth_poses, raw_points)``; ``problem`` carries
    the ground-truth poses and sufficient statistics of noisy points.
    Deterministic for a fixed ``rng_seed``.
    """
    config = config or SceneConfig()
    if overrides:
        config = SceneConfig(**{**config.__dict__, **overrides})
    if config.pose_count < 2:
        raise InfeasibleConfig("need at least 2 poses")
    if config.plane_count < 3:
        raise InfeasibleConfig("need at least 3 planes to constrain every pose")
    if config.points_per_obs < 3:
        raise InfeasibleConfig("need at least 3 points per observation")
    if not 0.0 < config.visibility_prob <= 1.0:
        raise InfeasibleConfig("visibility_prob must lie in (0, 1]")

    rng = np.random.default_rng(config.rng_seed)
    planes = _make_planes(config, rng)
    L = config.extent
    poses = []
    for _ in range(config.pose_count):
        R = Rotation.random(random_state=rng).as_matrix()
        poses.append(Pose(R, rng.uniform(-L / 4, L / 4, size=3)))
    vis = _draw_visibility(config, planes, rng)

    tracks, raw = [], {}
    K = config.points_per_obs
    for i, plane in enumerate(planes):
        for j in np.flatnonzero(vis[i]):
            uv = rng.uniform(-1.0, 1.0, size=(K, 2)) * plane.half_size
            pts = plane.center + uv @ plane.axes
            pts += rng.normal(scale=config.point_noise_sigma, size=pts.shape)
            local = poses[j].inverse().apply(pts)
            raw[(i, int(j))] = local
            tracks.append(accumulate_track(i, int(j), local))

    problem = PlaneAdjustProblem(poses, tracks, config.plane_count)
    for i in range(config.plane_count):
        glob = RawPoints(raw).global_points(i, poses)
        ev = symmetric_eigenvalues(scatter_from_points(glob).M)
        if ev[1] - ev[0] < 1e-6 * ev[2]:
            raise InfeasibleConfig(f"plane {i} has a degenerate point spread")
    return problem, list(poses), RawPoints(raw)


def perturb_poses(poses, noise, hold_first=False):
    """Gaussian pose noise: ``R <- exp([w]_x) R`` and ``t <- t + e``.

    ``w ~ N(0, sigma_R^2 I)`` (radians) and ``e ~ N(0, sigma_t^2 I)``, both in
    the global frame. With ``hold_first`` pose 0 is returned unchanged.
    """
    rng = np.random.default_rng(noise.rng_seed)
    sigma_r = np.deg2rad(noise.sigma_r_deg)
    out = []
    for j, pose in enumerate(poses):
        w = rng.normal(scale=sigma_r, size=3)
        e = rng.normal(scale=noise.sigma_t, size=3)
        if hold_first and j == 0:
            out.append(pose)
            continue
        if noise.sigma_r_deg == 0 and noise.sigma_t == 0:
            out.append(pose)
            continue
        dR = Rotation.from_rotvec(w).as_matrix()
        out.append(Pose(dR @ pose.R, pose.t + e))
    return out

import random

import numpy as np
import pytest

from planeadjust.scene import NoiseSpec, generate_scene, perturb_poses


def small_scene(seed, poses=None, planes=None, pts=None, noise=0.01, visibility=0.8):
    """Random small problem; unspecified sizes are drawn from the seed."""
    r = random.Random(seed)
    N = poses or r.randint(2, 5)
    M = planes or r.randint(3, 8)
    P = pts or r.randint(20, 200)
    return generate_scene(
        plane_count=M, pose_count=N, points_per_obs=P, visibility_prob=visibility,
        point_noise_sigma=noise, rng_seed=seed,
    )


def perturbed(gt, level, seed):
    return np.array([p.matrix() for p in perturb_poses(gt, NoiseSpec.level(level, seed))])


def random_psd(rng, scale=1.0):
    A = rng.normal(size=(3, 3))
    return scale * (A @ A.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy():
    """4 poses, 6 planes, perturbed off the optimum."""
    problem, gt, raw = small_scene(3, poses=4, planes=6, pts=40)
    return problem, gt, raw, perturbed(gt, 2, 11)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])

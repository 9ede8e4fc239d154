"""Shared helpers for the test suite."""

import numpy as np
import pytest

from gmlpnp import bench
from gmlpnp.geometry import Pose, exp_so3


def random_unit(rng, n=1):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_spd(rng, scale=0.1, min_ratio=0.01):
    """Random anisotropic SPD covariance with eigenvalues in
    [min_ratio, 1] * scale^2."""
    R = bench.random_rotation(rng)
    eigs = scale**2 * rng.uniform(min_ratio, 1.0, size=3)
    return R @ np.diag(eigs) @ R.T


def random_pose(rng, trans_scale=5.0):
    return Pose(
        bench.random_rotation(rng),
        trans_scale * rng.standard_normal(3),
    )


def make_scene(n=50, sigma_obj=0.1, sigma_img=1.0, seed=0, **kwargs):
    cfg = bench.SceneConfig(n_points=n, rng_seed=seed, **kwargs)
    return bench.generate_scene(
        cfg, bench.NoiseConfig(sigma_obj=sigma_obj, sigma_img=sigma_img)
    )


def perturbed(pose, rng, rot_deg, trans):
    axis = random_unit(rng)[0]
    return Pose(
        pose.rotation @ exp_so3(np.radians(rot_deg) * axis),
        pose.translation + trans * random_unit(rng)[0],
    )


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    """Compile the numba kernels once so individual tests stay fast."""
    bench.warmup()

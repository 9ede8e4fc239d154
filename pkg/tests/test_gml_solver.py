"""Iterated-GLS solver: covariance estimation, determinant criterion, outer loop."""

import numpy as np
import pytest

from conftest import make_scene, perturbed

from gmlpnp import bench
from gmlpnp.errors import InsufficientPointsError
from gmlpnp.gml_solver import (
    ABSOLUTE_FLOOR,
    REGULARIZATION_FLOOR,
    OuterLoopConfig,
    determinant_criterion,
    estimate_covariance,
    solve,
)

EXHAUSTIVE = OuterLoopConfig(covariance_threshold=1e-300, max_outer_iterations=25)


class TestEstimateCovariance:
    def test_rank_one_sample_moment(self):
        e = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
        got = estimate_covariance(e)
        ridge = REGULARIZATION_FLOOR * max(1.0 / 3.0, ABSOLUTE_FLOOR)
        np.testing.assert_allclose(got, np.diag([1.0, 0.0, 0.0]) + ridge * np.eye(3))

    def test_zero_residual_floor(self):
        got = estimate_covariance(np.zeros((5, 3)))
        np.testing.assert_array_equal(
            got, REGULARIZATION_FLOOR * ABSOLUTE_FLOOR * np.eye(3)
        )

    def test_monte_carlo_recovery(self):
        rng = np.random.default_rng(123)
        R0 = bench.random_rotation(rng)
        cov = R0 @ np.diag([0.25, 0.04, 0.01]) @ R0.T
        draws = rng.standard_normal((500, 3)) @ (R0 @ np.diag([0.5, 0.2, 0.1])).T
        got = estimate_covariance(draws)
        assert np.linalg.norm(got - cov) < 0.15 * np.linalg.norm(cov)

    def test_output_positive_definite(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            e = rng.standard_normal((4, 3)) * rng.uniform(0, 0.1)
            got = estimate_covariance(e)
            assert np.min(np.linalg.eigvalsh(got)) > 0.0

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            estimate_covariance(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            estimate_covariance(np.zeros((5, 2)))


class TestDeterminantCriterion:
    def test_planar_residuals_are_singular(self):
        e = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 0.0], [2.0, 0.3, 0.0]])
        assert determinant_criterion(e) == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal_residuals(self):
        e = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
        assert determinant_criterion(e) == pytest.approx(36.0)

    def test_matches_direct_accumulation_oracle(self):
        rng = np.random.default_rng(3)
        e = rng.standard_normal((50, 3))
        V = sum(np.outer(row, row) for row in e)
        assert determinant_criterion(e) == pytest.approx(np.linalg.det(V), rel=1e-10)


class TestSolve:
    def test_noise_free_fixed_point(self):
        scene = make_scene(n=20, sigma_obj=0.0, sigma_img=0.0, seed=0)
        report = solve(scene.points, scene.rays, init=scene.truth.pose)
        assert report.converged
        assert len(report.iterations) - 1 <= 2
        rot = bench.rotation_error_deg(
            scene.truth.pose.rotation, report.pose.rotation
        )
        trans = np.max(
            np.abs(report.pose.translation - scene.truth.pose.translation)
        )
        assert rot < 1e-10
        assert trans < 1e-12

    def test_noise_free_from_linear_init(self):
        scene = make_scene(n=20, sigma_obj=0.0, sigma_img=0.0, seed=4)
        report = solve(scene.points, scene.rays)
        assert report.converged
        assert (
            bench.rotation_error_deg(scene.truth.pose.rotation, report.pose.rotation)
            < 1e-6
        )
        assert (
            bench.translation_error(
                scene.truth.pose.translation, report.pose.translation
            )
            < 1e-8
        )

    def test_diagnostics_structure(self):
        scene = make_scene(n=50, sigma_obj=0.1, sigma_img=1.0, seed=5)
        report = solve(scene.points, scene.rays)
        assert len(report.iterations) >= 1
        assert [d.index for d in report.iterations] == list(
            range(len(report.iterations))
        )
        for d in report.iterations:
            assert d.det_v >= -1e-9
            assert d.cost >= 0.0
            assert np.min(np.linalg.eigvalsh(d.covariance)) > 0.0
        np.testing.assert_array_equal(
            report.covariance, report.iterations[-1].covariance
        )
        assert len(report.scales) == 50

    def test_det_v_mean_non_increasing(self):
        traces = []
        for trial in range(40):
            scene = make_scene(n=200, sigma_obj=0.5, sigma_img=5.0, seed=(6, trial))
            report = solve(scene.points, scene.rays)
            traces.append([d.det_v for d in report.iterations])
        depth = max(len(t) for t in traces)
        padded = np.array([t + [t[-1]] * (depth - len(t)) for t in traces])
        means = padded.mean(axis=0)
        assert all(b <= a for a, b in zip(means[1:], means[2:])), means

    def test_covariance_estimate_approaches_truth(self):
        # mean Frobenius error to the true covariance drops from the identity
        # start and keeps shrinking across iterations
        frobs = []
        for trial in range(40):
            scene = make_scene(n=200, sigma_obj=0.5, sigma_img=5.0, seed=(7, trial))
            report = solve(scene.points, scene.rays)
            frobs.append(
                [
                    np.linalg.norm(d.covariance - scene.truth.covariance)
                    for d in report.iterations
                ]
            )
        depth = max(len(f) for f in frobs)
        padded = np.array([f + [f[-1]] * (depth - len(f)) for f in frobs])
        means = padded.mean(axis=0)
        assert all(b <= a + 1e-12 for a, b in zip(means, means[1:]))
        assert means[-1] < means[0]

    def test_not_converged_flag(self):
        scene = make_scene(n=50, sigma_obj=0.1, sigma_img=1.0, seed=8)
        report = solve(
            scene.points, scene.rays, config=OuterLoopConfig(max_outer_iterations=1)
        )
        assert not report.converged
        assert len(report.iterations) - 1 == 1

    def test_starting_covariance_independence_noise_free(self):
        scene = make_scene(n=20, sigma_obj=0.0, sigma_img=0.0, seed=9)
        a = solve(scene.points, scene.rays)
        b = solve(
            scene.points, scene.rays, bootstrap_covariance=np.diag([4.0, 1.0, 0.25])
        )
        assert bench.rotation_error_deg(a.pose.rotation, b.pose.rotation) < 1e-6

    def test_starting_covariance_independence_noisy(self):
        scene = make_scene(n=200, sigma_obj=0.1, sigma_img=1.0, seed=10)
        a = solve(scene.points, scene.rays, config=EXHAUSTIVE)
        b = solve(
            scene.points,
            scene.rays,
            config=EXHAUSTIVE,
            bootstrap_covariance=np.diag([4.0, 1.0, 0.25]),
        )
        assert np.linalg.norm(a.covariance - b.covariance) < 1e-3

    def test_explicit_init_respected(self):
        scene = make_scene(n=60, sigma_obj=0.05, sigma_img=0.5, seed=11)
        rng = np.random.default_rng(12)
        init = perturbed(scene.truth.pose, rng, rot_deg=5.0, trans=0.3)
        report = solve(scene.points, scene.rays, init=init)
        assert (
            bench.rotation_error_deg(scene.truth.pose.rotation, report.pose.rotation)
            < 1.0
        )

    def test_too_few_points(self):
        scene = make_scene(n=10, seed=13)
        with pytest.raises(InsufficientPointsError):
            solve(scene.points[:5], scene.rays[:5])

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            OuterLoopConfig(covariance_threshold=0.0)
        with pytest.raises(ValueError):
            OuterLoopConfig(max_outer_iterations=0)

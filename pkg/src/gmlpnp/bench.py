"""Synthetic benchmark: scene generation, error metrics, experiment runner.

Scenes are built in the camera frame (points uniform in a box in front of
the camera), the world frame is anchored at the point-cloud centroid under
a uniformly random rotation, and two noise processes disturb the
observations:

* object noise: i.i.d. N(0, Sigma) added to the world points, with
  Sigma = R_o diag(sigma^2, s1^2, s2^2) R_o' for a random rotation R_o and
  s1, s2 drawn uniformly from (0, sigma);
* image noise: the 2D analogue (random in-plane rotation, second axis drawn
  uniformly below sigma_img) added to the projected pixels before the rays
  are recovered through the camera model.

Each trial derives its own RNG stream from (seed, grid index, trial index),
so results are identical no matter how trials are scheduled, and every
method inside one trial consumes the same noisy scene (paired comparison).
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cameras import PinholeIntrinsics
from .errors import DegenerateGroundTruthError, PnPError
from .geometry import Pose, exp_so3, rotation_from_quat
from .gml_solver import OuterLoopConfig, solve
from .linear_init import solve_linear_init
from .ml_solver import solve_fixed_covariance

DEFAULT_CAMERA = PinholeIntrinsics(fx=800.0, fy=800.0, cx=320.0, cy=240.0)
DEFAULT_BOX = ((-2.0, 2.0), (-2.0, 2.0), (4.0, 8.0))

METHODS = ("gmlpnp", "gmlpnp_star", "ml_identity", "linear_init")

# Minimum draw for the random spread axes, as a fraction of the dominant
# sigma: keeps the constructed covariance strictly positive-definite.
MIN_SPREAD_FRACTION = 1e-6

TRIAL_CSV_COLUMNS = (
    "method", "n_points", "sigma_obj", "sigma_img", "trial",
    "e_rot_deg", "e_trans_rel", "time_us", "outer_iters", "converged", "failed",
)
ITERATION_CSV_COLUMNS = ("method", "trial", "iteration", "det_V", "frob_err", "cost")


@dataclass(frozen=True)
class SceneConfig:
    """Scene layout: point count, camera-frame box, camera, RNG seed.

    ``world_rotation`` fixes the world-frame orientation instead of drawing
    it at random; consistency experiments use it so a fixed noise
    covariance keeps a fixed orientation relative to the viewing rays.
    """

    n_points: int = 50
    box: tuple = DEFAULT_BOX
    camera: object = DEFAULT_CAMERA
    rng_seed: object = 0
    world_rotation: object = None

    def __post_init__(self):
        if self.n_points < 6:
            raise ValueError("n_points must be at least 6")
        for lo, hi in self.box:
            if not hi > lo:
                raise ValueError("box ranges must be non-degenerate")


@dataclass(frozen=True)
class NoiseConfig:
    """Noise levels; optional fixed covariances override the random draws."""

    sigma_obj: float = 0.1
    sigma_img: float = 1.0
    anisotropic: bool = True
    object_covariance: np.ndarray | None = None
    image_covariance: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma_obj < 0 or self.sigma_img < 0:
            raise ValueError("noise standard deviations must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knows: pose, true covariances, clean data."""

    pose: Pose
    covariance: np.ndarray
    image_covariance: np.ndarray
    points: np.ndarray
    rays: np.ndarray
    pixels: np.ndarray


@dataclass(frozen=True)
class Scene:
    """Noisy observables plus the ground truth they were generated from."""

    truth: GroundTruth
    points: np.ndarray
    rays: np.ndarray
    pixels: np.ndarray


@dataclass(frozen=True)
class TrialRecord:
    method: str
    n_points: int
    sigma_obj: float
    sigma_img: float
    trial: int
    e_rot_deg: float
    e_trans_rel: float
    time_us: float
    outer_iters: int
    converged: bool
    failed: bool
    det_v_trace: tuple = ()
    frob_err_trace: tuple = ()
    cost_trace: tuple = ()


@dataclass(frozen=True)
class GridPoint:
    n_points: int
    sigma_obj: float
    sigma_img: float


def random_rotation(rng):
    """Uniform random rotation via a quaternion on the unit 3-sphere."""
    q = rng.standard_normal(4)
    return rotation_from_quat(q)


def _object_noise_factor(noise, rng):
    """Matrix A with A A' equal to the object-noise covariance."""
    sigma = noise.sigma_obj
    if noise.object_covariance is not None:
        cov = np.asarray(noise.object_covariance, dtype=np.float64)
        return np.linalg.cholesky(cov), cov
    if not noise.anisotropic:
        A = sigma * np.eye(3)
        return A, A @ A.T
    R_o = random_rotation(rng)
    lo = MIN_SPREAD_FRACTION * sigma
    s1, s2 = rng.uniform(lo, sigma, size=2) if sigma > 0 else (0.0, 0.0)
    A = R_o @ np.diag([sigma, s1, s2])
    return A, A @ A.T


def _image_noise_factor(noise, rng):
    """2D analogue of the object-noise construction."""
    sigma = noise.sigma_img
    if noise.image_covariance is not None:
        cov = np.asarray(noise.image_covariance, dtype=np.float64)
        return np.linalg.cholesky(cov), cov
    if not noise.anisotropic:
        A = sigma * np.eye(2)
        return A, A @ A.T
    alpha = rng.uniform(0.0, 2.0 * np.pi)
    lo = MIN_SPREAD_FRACTION * sigma
    s1 = rng.uniform(lo, sigma) if sigma > 0 else 0.0
    c, s = np.cos(alpha), np.sin(alpha)
    A = np.array([[c, -s], [s, c]]) @ np.diag([sigma, s1])
    return A, A @ A.T


def generate_scene(cfg, noise):
    """Build one synthetic scene with its noisy observations.

    Deterministic for a fixed ``cfg.rng_seed``; with both sigmas zero the
    noisy observations equal the clean ones exactly.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    (x0, x1), (y0, y1), (z0, z1) = cfg.box
    cam_points = np.column_stack(
        [
            rng.uniform(x0, x1, cfg.n_points),
            rng.uniform(y0, y1, cfg.n_points),
            rng.uniform(z0, z1, cfg.n_points),
        ]
    )
    centroid = cam_points.mean(axis=0)
    if cfg.world_rotation is None:
        R_world = random_rotation(rng)  # world axes expressed in the camera frame
    else:
        R_world = np.asarray(cfg.world_rotation, dtype=np.float64)
    # Camera point x relates to world point p by x = R_world p + centroid,
    # hence (per the p = s R m + t convention) the camera-in-world pose is:
    pose = Pose(R_world.T, -(R_world.T @ centroid))
    world_points = (cam_points - centroid) @ R_world

    clean_pixels = cfg.camera.project(cam_points)
    clean_rays = cfg.camera.unproject(clean_pixels)

    A_obj, cov_obj = _object_noise_factor(noise, rng)
    noisy_points = world_points + rng.standard_normal((cfg.n_points, 3)) @ A_obj.T
    A_img, cov_img = _image_noise_factor(noise, rng)
    noisy_pixels = clean_pixels + rng.standard_normal((cfg.n_points, 2)) @ A_img.T
    noisy_rays = cfg.camera.unproject(noisy_pixels)

    truth = GroundTruth(
        pose=pose,
        covariance=cov_obj,
        image_covariance=cov_img,
        points=world_points,
        rays=clean_rays,
        pixels=clean_pixels,
    )
    return Scene(truth=truth, points=noisy_points, rays=noisy_rays, pixels=noisy_pixels)


def rotation_error_deg(R_gt, R_est):
    """Largest angle between matching rotation-matrix columns, in degrees.

    Computed as atan2(||a x b||, a . b) per column: identical to
    arccos(a . b) but with full precision near zero, where the arccos form
    quantizes at ~1e-6 degrees (dots are clamped to [-1, 1] either way).
    """
    R_gt = np.asarray(R_gt, dtype=np.float64)
    R_est = np.asarray(R_est, dtype=np.float64)
    dots = np.clip(np.sum(R_gt * R_est, axis=0), -1.0, 1.0)
    crosses = np.linalg.norm(np.cross(R_gt.T, R_est.T), axis=1)
    return float(np.degrees(np.max(np.arctan2(crosses, dots))))


def translation_error(t_gt, t_est):
    """Relative translation error ||t_gt - t_est|| / ||t_gt||."""
    t_gt = np.asarray(t_gt, dtype=np.float64)
    denom = float(np.linalg.norm(t_gt))
    if denom < 1e-12:
        raise DegenerateGroundTruthError("ground-truth translation is (near) zero")
    return float(np.linalg.norm(t_gt - np.asarray(t_est, dtype=np.float64)) / denom)


def perturb_pose(pose, rot_deg, trans_frac, rng):
    """Randomly offset a pose by up to rot_deg degrees and trans_frac * ||t||."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.uniform(0.0, rot_deg))
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    shift = rng.uniform(0.0, trans_frac) * np.linalg.norm(pose.translation)
    return Pose(
        pose.rotation @ exp_so3(angle * axis),
        pose.translation + shift * direction,
    )


def _run_method(name, scene, outer_cfg):
    """Run one solver on a scene; returns (pose, outer_iters, converged, traces)."""
    if name == "linear_init":
        pose = solve_linear_init(scene.points, scene.rays)
        return pose, 0, True, None
    init = solve_linear_init(scene.points, scene.rays)
    if name == "ml_identity":
        res = solve_fixed_covariance(
            scene.points, scene.rays, np.eye(3), init, outer_cfg.inner
        )
        return res.pose, res.gn_iterations, res.converged, None
    if name == "gmlpnp_star":
        cov = scene.truth.covariance
        if np.linalg.eigvalsh(cov)[0] <= 0.0:
            cov = np.eye(3)  # noise-free scenes: any weighting is equivalent
        res = solve_fixed_covariance(
            scene.points, scene.rays, cov, init, outer_cfg.inner
        )
        return res.pose, res.gn_iterations, res.converged, None
    if name == "gmlpnp":
        report = solve(scene.points, scene.rays, init=init, config=outer_cfg)
        sigma_true = scene.truth.covariance
        det_trace = tuple(d.det_v for d in report.iterations)
        frob_trace = tuple(
            float(np.linalg.norm(d.covariance - sigma_true)) for d in report.iterations
        )
        cost_trace = tuple(d.cost for d in report.iterations)
        outer = len(report.iterations) - 1
        return report.pose, outer, report.converged, (det_trace, frob_trace, cost_trace)
    raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")


def _run_trial(grid_idx, grid_point, trial, seed, methods, camera, outer_cfg,
               noise_overrides, world_rotation):
    cfg = SceneConfig(
        n_points=grid_point.n_points,
        camera=camera,
        rng_seed=(seed, grid_idx, trial),
        world_rotation=world_rotation,
    )
    noise = NoiseConfig(
        sigma_obj=grid_point.sigma_obj, sigma_img=grid_point.sigma_img
    )
    if noise_overrides:
        noise = replace(noise, **noise_overrides)
    scene = generate_scene(cfg, noise)
    records = []
    for name in methods:
        t0 = time.perf_counter()
        try:
            pose, outer, converged, traces = _run_method(name, scene, outer_cfg)
            elapsed_us = (time.perf_counter() - t0) * 1e6
            rec = TrialRecord(
                method=name,
                n_points=grid_point.n_points,
                sigma_obj=grid_point.sigma_obj,
                sigma_img=grid_point.sigma_img,
                trial=trial,
                e_rot_deg=rotation_error_deg(scene.truth.pose.rotation, pose.rotation),
                e_trans_rel=translation_error(
                    scene.truth.pose.translation, pose.translation
                ),
                time_us=elapsed_us,
                outer_iters=outer,
                converged=converged,
                failed=False,
                det_v_trace=traces[0] if traces else (),
                frob_err_trace=traces[1] if traces else (),
                cost_trace=traces[2] if traces else (),
            )
        except PnPError:
            elapsed_us = (time.perf_counter() - t0) * 1e6
            rec = TrialRecord(
                method=name,
                n_points=grid_point.n_points,
                sigma_obj=grid_point.sigma_obj,
                sigma_img=grid_point.sigma_img,
                trial=trial,
                e_rot_deg=float("nan"),
                e_trans_rel=float("nan"),
                time_us=elapsed_us,
                outer_iters=0,
                converged=False,
                failed=True,
            )
        records.append(rec)
    return records


_warmed_up = False


def warmup():
    """Run every method once so JIT compilation never lands in a timing."""
    global _warmed_up
    if _warmed_up:
        return
    cfg = SceneConfig(n_points=20, rng_seed=(0xC0FFEE,))
    scene = generate_scene(cfg, NoiseConfig(sigma_obj=0.05, sigma_img=0.5))
    outer = OuterLoopConfig()
    for name in METHODS:
        _run_method(name, scene, outer)
    _warmed_up = True


def run_experiment(grid, trials, methods=METHODS, seed=0, threads=None,
                   camera=None, outer_config=None, noise_overrides=None,
                   world_rotation=None):
    """Run a sweep and return one TrialRecord per (grid point, trial, method).

    Solver failures are recorded with the ``failed`` flag, never aborting
    the sweep. Records come back in deterministic (grid, trial, method)
    order regardless of the thread count.
    """
    for name in methods:
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    camera = camera if camera is not None else DEFAULT_CAMERA
    outer_cfg = outer_config if outer_config is not None else OuterLoopConfig()
    warmup()

    # Execute trial-major (all grid points at trial 0, then trial 1, ...) so
    # slow drift in machine load spreads evenly across grid points instead of
    # biasing the timings of whichever grid point runs last.
    tasks = [
        (gi, gp, trial)
        for trial in range(trials)
        for gi, gp in enumerate(grid)
    ]

    def job(task):
        gi, gp, trial = task
        return _run_trial(
            gi, gp, trial, seed, methods, camera, outer_cfg, noise_overrides,
            world_rotation,
        )

    if threads is not None and threads <= 1:
        chunks = [job(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, tasks))

    by_key = {
        (task[0], task[2]): chunk for task, chunk in zip(tasks, chunks)
    }
    return [
        rec
        for gi in range(len(grid))
        for trial in range(trials)
        for rec in by_key[(gi, trial)]
    ]


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trials_csv(records, path):
    """Write per-trial results; byte-identical across runs except time_us."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.method,
                    r.n_points,
                    _fmt(float(r.sigma_obj)),
                    _fmt(float(r.sigma_img)),
                    r.trial,
                    _fmt(r.e_rot_deg),
                    _fmt(r.e_trans_rel),
                    _fmt(round(r.time_us, 3)),
                    r.outer_iters,
                    _fmt(r.converged),
                    _fmt(r.failed),
                ]
            )


def write_iterations_csv(records, path):
    """Write per-iteration diagnostics (methods that produce traces only)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ITERATION_CSV_COLUMNS)
        for r in records:
            for i, det_v in enumerate(r.det_v_trace):
                writer.writerow(
                    [
                        r.method,
                        r.trial,
                        i,
                        _fmt(det_v),
                        _fmt(r.frob_err_trace[i]),
                        _fmt(r.cost_trace[i]),
                    ]
                )


def padded_trace_means(records, which="det_v"):
    """Mean per-iteration curve across trials, padding each trial's trace
    with its final value (a converged covariance no longer changes)."""
    traces = [
        getattr(r, f"{which}_trace") for r in records if getattr(r, f"{which}_trace")
    ]
    if not traces:
        return np.array([])
    depth = max(len(t) for t in traces)
    padded = np.array([list(t) + [t[-1]] * (depth - len(t)) for t in traces])
    return padded.mean(axis=0)


def aggregate(records):
    """Mean and median errors per (grid point, method), plus failure counts."""
    keys = sorted(
        {(r.n_points, r.sigma_obj, r.sigma_img, r.method) for r in records},
        key=lambda k: (k[0], k[1], k[2], METHODS.index(k[3]) if k[3] in METHODS else 99),
    )
    rows = []
    for n, so, si, method in keys:
        sel = [
            r
            for r in records
            if (r.n_points, r.sigma_obj, r.sigma_img, r.method) == (n, so, si, method)
        ]
        good = [r for r in sel if not r.failed]
        rot = np.array([r.e_rot_deg for r in good])
        trans = np.array([r.e_trans_rel for r in good])
        times = np.array([r.time_us for r in good])
        rows.append(
            {
                "n_points": n,
                "sigma_obj": so,
                "sigma_img": si,
                "method": method,
                "trials": len(sel),
                "failed": len(sel) - len(good),
                "mean_e_rot_deg": float(rot.mean()) if len(good) else math.nan,
                "median_e_rot_deg": float(np.median(rot)) if len(good) else math.nan,
                "mean_e_trans_rel": float(trans.mean()) if len(good) else math.nan,
                "median_e_trans_rel": float(np.median(trans)) if len(good) else math.nan,
                "mean_time_us": float(times.mean()) if len(good) else math.nan,
            }
        )
    return rows


def format_summary(rows):
    """Human-readable aggregate table."""
    header = (
        f"{'n':>5} {'sigma':>6} {'method':<12} {'mean rot(deg)':>14} "
        f"{'mean trans':>11} {'med rot':>9} {'med trans':>10} {'time(us)':>10} {'fail':>5}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['n_points']:>5} {row['sigma_obj']:>6.3g} {row['method']:<12} "
            f"{row['mean_e_rot_deg']:>14.6g} {row['mean_e_trans_rel']:>11.6g} "
            f"{row['median_e_rot_deg']:>9.4g} {row['median_e_trans_rel']:>10.4g} "
            f"{row['mean_time_us']:>10.1f} {row['failed']:>5}"
        )
    return "\n".join(lines)

"""JSON schemas for correspondence problems and solve reports.

Problem files look like::

    {
      "camera": {"model": "pinhole", "fx": 800, "fy": 800, "cx": 320, "cy": 240},
      "correspondences": [
        {"object": [x, y, z], "pixel": [u, v]},
        {"object": [x, y, z], "ray": [rx, ry, rz]}
      ],
      "initial_pose": {"rotation_wxyz": [w, x, y, z], "translation": [x, y, z]},
      "ground_truth": {"rotation_wxyz": [...], "translation": [...]}
    }

"camera" (model "pinhole" or "mei") is required only when any correspondence
carries a "pixel"; an explicit "ray" takes precedence over "pixel" and is
normalized on load. Rotations are serialized as unit quaternions (w, x, y, z)
with canonical sign w >= 0.
"""

import json
from dataclasses import dataclass

import numpy as np

from .cameras import MeiIntrinsics, PinholeIntrinsics
from .errors import SchemaError
from .geometry import Pose, quat_from_rotation, rotation_from_quat
from .gml_solver import IterationDiagnostics, SolveReport

_PINHOLE_FIELDS = ("fx", "fy", "cx", "cy")
_MEI_OPTIONAL_FIELDS = ("k1", "k2", "p1", "p2")


@dataclass(frozen=True)
class Problem:
    points: np.ndarray
    rays: np.ndarray
    camera: object | None
    initial_pose: Pose | None
    ground_truth: Pose | None


def _require(mapping, key, where):
    if key not in mapping:
        raise SchemaError(f"{where}: missing required field '{key}'")
    return mapping[key]


def _vector(value, length, where):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a numeric array") from None
    if arr.shape != (length,):
        raise SchemaError(f"{where}: expected {length} numbers, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{where}: values must be finite")
    return arr


def camera_from_dict(d, where="camera"):
    """Build a camera model from its JSON object."""
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object")
    model = _require(d, "model", where)
    if model == "pinhole":
        kwargs = {k: float(_require(d, k, where)) for k in _PINHOLE_FIELDS}
        try:
            return PinholeIntrinsics(**kwargs)
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from None
    if model == "mei":
        kwargs = {k: float(_require(d, k, where)) for k in _PINHOLE_FIELDS}
        kwargs["xi"] = float(_require(d, "xi", where))
        for k in _MEI_OPTIONAL_FIELDS:
            kwargs[k] = float(d.get(k, 0.0))
        try:
            return MeiIntrinsics(**kwargs)
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from None
    raise SchemaError(f"{where}.model: unknown camera model {model!r}")


def camera_to_dict(camera):
    if isinstance(camera, PinholeIntrinsics):
        return {
            "model": "pinhole",
            "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
        }
    if isinstance(camera, MeiIntrinsics):
        return {
            "model": "mei",
            "xi": camera.xi,
            "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
            "k1": camera.k1, "k2": camera.k2, "p1": camera.p1, "p2": camera.p2,
        }
    raise TypeError(f"unsupported camera type {type(camera)!r}")


def pose_to_dict(pose):
    return {
        "rotation_wxyz": [float(v) for v in quat_from_rotation(pose.rotation)],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_dict(d, where="pose"):
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object")
    quat = _vector(_require(d, "rotation_wxyz", where), 4, f"{where}.rotation_wxyz")
    trans = _vector(_require(d, "translation", where), 3, f"{where}.translation")
    return Pose(rotation_from_quat(quat), trans)


def problem_from_dict(data):
    """Validate a problem dict and resolve observations to unit rays."""
    if not isinstance(data, dict):
        raise SchemaError("top level: expected an object")
    camera = None
    if "camera" in data:
        camera = camera_from_dict(data["camera"])
    corr = _require(data, "correspondences", "top level")
    if not isinstance(corr, list):
        raise SchemaError("correspondences: expected an array")
    if len(corr) == 0:
        raise SchemaError(
            "correspondences: InsufficientPoints, the array is empty"
        )

    points = np.empty((len(corr), 3))
    rays = np.empty((len(corr), 3))
    pixel_rows = []
    pixels = []
    for i, item in enumerate(corr):
        where = f"correspondences[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{where}: expected an object")
        points[i] = _vector(_require(item, "object", where), 3, f"{where}.object")
        if "ray" in item:
            ray = _vector(item["ray"], 3, f"{where}.ray")
            norm = float(np.linalg.norm(ray))
            if norm < 1e-12:
                raise SchemaError(f"{where}.ray: zero-length ray")
            # normalize only when needed so unit input passes through bit-exact
            rays[i] = ray if abs(norm - 1.0) <= 1e-12 else ray / norm
        elif "pixel" in item:
            if camera is None:
                raise SchemaError(
                    f"{where}.pixel: requires a top-level 'camera' to unproject"
                )
            pixel_rows.append(i)
            pixels.append(_vector(item["pixel"], 2, f"{where}.pixel"))
        else:
            raise SchemaError(f"{where}: missing required field 'ray' or 'pixel'")
    if pixel_rows:
        rays[pixel_rows] = camera.unproject(np.asarray(pixels))

    initial_pose = None
    if "initial_pose" in data:
        initial_pose = pose_from_dict(data["initial_pose"], "initial_pose")
    ground_truth = None
    if "ground_truth" in data:
        ground_truth = pose_from_dict(data["ground_truth"], "ground_truth")
    return Problem(
        points=points,
        rays=rays,
        camera=camera,
        initial_pose=initial_pose,
        ground_truth=ground_truth,
    )


def load_problem(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc}") from None
    return problem_from_dict(data)


def report_to_dict(report):
    """Serialize a SolveReport; numbers keep full precision."""
    return {
        "pose": pose_to_dict(report.pose),
        "covariance": [float(v) for v in np.asarray(report.covariance).ravel()],
        "scales": [float(v) for v in report.scales],
        "converged": bool(report.converged),
        "iterations": [
            {
                "index": int(d.index),
                "covariance": [float(v) for v in np.asarray(d.covariance).ravel()],
                "det_v": float(d.det_v),
                "cost": float(d.cost),
                "negative_scale_count": int(d.negative_scale_count),
            }
            for d in report.iterations
        ],
    }


def report_from_dict(d):
    where = "report"
    pose = pose_from_dict(_require(d, "pose", where), "pose")
    cov = _vector(_require(d, "covariance", where), 9, "covariance").reshape(3, 3)
    scales = np.asarray(_require(d, "scales", where), dtype=np.float64)
    iterations = []
    for i, item in enumerate(_require(d, "iterations", where)):
        iw = f"iterations[{i}]"
        iterations.append(
            IterationDiagnostics(
                index=int(_require(item, "index", iw)),
                covariance=_vector(
                    _require(item, "covariance", iw), 9, f"{iw}.covariance"
                ).reshape(3, 3),
                det_v=float(_require(item, "det_v", iw)),
                cost=float(_require(item, "cost", iw)),
                negative_scale_count=int(_require(item, "negative_scale_count", iw)),
            )
        )
    return SolveReport(
        pose=pose,
        covariance=cov,
        scales=scales,
        iterations=tuple(iterations),
        converged=bool(_require(d, "converged", where)),
    )


def case_to_dict(scene, camera, use_pixels=True):
    """Problem dict for a generated scene (used by ``bench --emit-case``)."""
    corr = []
    for i in range(scene.points.shape[0]):
        item = {"object": [float(v) for v in scene.points[i]]}
        if use_pixels:
            item["pixel"] = [float(v) for v in scene.pixels[i]]
        else:
            item["ray"] = [float(v) for v in scene.rays[i]]
        corr.append(item)
    return {
        "camera": camera_to_dict(camera),
        "correspondences": corr,
        "ground_truth": pose_to_dict(scene.truth.pose),
    }

"""Versioned JSON datasets, pose files and raw-point side files.

Matrices are stored row-major and floats with Python's shortest round-trip
repr, so ``loads(dumps(problem))`` is bit-exact and ``dumps`` is canonical.
"""

import hashlib
import json
import numbers
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import ParseError, SchemaVersionMismatch, UnderconstrainedPlane
from .geometry import Pose, is_rotation
from .problem import PlaneAdjustProblem, TrackStats
from .scene import RawPoints
from .validation import check_problem

SCHEMA_VERSION = 1


def _pose_to_json(X):
    X = X.matrix() if isinstance(X, Pose) else np.asarray(X)
    return {"R": [float(v) for v in X[:3, :3].ravel()], "t": [float(v) for v in X[:3, 3]]}


def _dump(obj):
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


class Dataset(NamedTuple):
    problem: PlaneAdjustProblem
    reference_poses: list = None
    noise: dict = None
    sha256: str = None


def problem_to_dict(problem, reference_poses=None, noise=None):
    data = {
        "schema_version": SCHEMA_VERSION,
        "plane_count": problem.plane_count,
        "poses": [_pose_to_json(p) for p in problem.poses],
        "tracks": [
            {
                "plane_id": t.plane_id,
                "pose_id": t.pose_id,
                "N": t.N,
                "U": [float(v) for v in t.U.ravel()],
                "p": [float(v) for v in t.p],
            }
            for t in problem.tracks
        ],
    }
    if reference_poses is not None:
        data["reference_poses"] = [_pose_to_json(p) for p in reference_poses]
    if noise is not None:
        data["noise"] = dict(noise)
    return data


def dumps_problem(problem, reference_poses=None, noise=None):
    return _dump(problem_to_dict(problem, reference_poses, noise))


def dataset_hash(problem):
    """SHA-256 of the problem's canonical serialisation, without optional extras."""
    return hashlib.sha256(dumps_problem(problem).encode()).hexdigest()


def _loads_json(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}") from exc


def _field(obj, key, where):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", where)
    if key not in obj:
        raise ParseError(f"missing field {key!r}", where)
    return obj[key]


def _numbers(value, length, where):
    if not isinstance(value, list) or len(value) != length:
        raise ParseError(f"expected a list of {length} numbers", where)
    for v in value:
        if isinstance(v, bool) or not isinstance(v, numbers.Real):
            raise ParseError("expected a list of numbers", where)
    return np.array(value, dtype=float)


def _integer(value, where, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError("expected an integer", where)
    if value < minimum:
        raise ParseError(f"must be >= {minimum}", where)
    return value


def _check_version(data):
    if not isinstance(data, dict):
        raise ParseError("top level must be an object")
    version = _field(data, "schema_version", "schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
            "schema_version",
        )


def _parse_pose(obj, where):
    R = _numbers(_field(obj, "R", where), 9, f"{where}.R").reshape(3, 3)
    t = _numbers(_field(obj, "t", where), 3, f"{where}.t")
    if not is_rotation(R):
        raise ParseError("R is not a rotation matrix", f"{where}.R")
    return Pose(R, t)


def _parse_poses(data, key="poses"):
    items = _field(data, key, key)
    if not isinstance(items, list):
        raise ParseError("expected a list", key)
    return [_parse_pose(p, f"{key}[{j}]") for j, p in enumerate(items)]


def _parse_track(obj, where, n_poses):
    plane_id = _integer(_field(obj, "plane_id", where), f"{where}.plane_id")
    pose_id = _integer(_field(obj, "pose_id", where), f"{where}.pose_id")
    if pose_id >= n_poses:
        raise ParseError(f"unknown pose {pose_id}", f"{where}.pose_id")
    N = _integer(_field(obj, "N", where), f"{where}.N", minimum=1)
    U = _numbers(_field(obj, "U", where), 16, f"{where}.U").reshape(4, 4)
    p = _numbers(_field(obj, "p", where), 4, f"{where}.p")
    if not np.array_equal(U, U.T):
        raise ParseError("U is not symmetric", f"{where}.U")
    if U[3, 3] != N:
        raise ParseError("U[3][3] must equal N", f"{where}.U")
    if p[3] != N:
        raise ParseError("p[3] must equal N", f"{where}.p")
    return TrackStats(plane_id, pose_id, N, U, p)


def problem_from_dict(data):
    """Build a :class:`Dataset` (problem plus optional extras) from parsed JSON."""
    _check_version(data)
    poses = _parse_poses(data)
    items = _field(data, "tracks", "tracks")
    if not isinstance(items, list):
        raise ParseError("expected a list", "tracks")
    tracks = [_parse_track(t, f"tracks[{k}]", len(poses)) for k, t in enumerate(items)]
    plane_count = data.get("plane_count")
    if plane_count is not None:
        plane_count = _integer(plane_count, "plane_count")
    try:
        problem = check_problem(PlaneAdjustProblem(poses, tracks, plane_count))
    except (UnderconstrainedPlane, ValueError) as exc:
        raise ParseError(str(exc), "tracks") from exc
    reference = _parse_poses(data, "reference_poses") if "reference_poses" in data else None
    noise = data.get("noise")
    if noise is not None and not isinstance(noise, dict):
        raise ParseError("expected an object", "noise")
    return Dataset(problem, reference, noise)


def loads_problem(text):
    return problem_from_dict(_loads_json(text)).problem


def save_problem(problem, path, reference_poses=None, noise=None):
    Path(path).write_text(dumps_problem(problem, reference_poses, noise))


def load_dataset(path):
    """Load a dataset file together with its extras and the SHA-256 of its bytes."""
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not UTF-8 text") from exc
    dataset = problem_from_dict(_loads_json(text))
    return dataset._replace(sha256=hashlib.sha256(raw).hexdigest())


def load_problem(path):
    return load_dataset(path).problem


def save_poses(poses, path):
    data = {"schema_version": SCHEMA_VERSION, "poses": [_pose_to_json(p) for p in poses]}
    Path(path).write_text(_dump(data))


def load_poses(path):
    data = _loads_json(Path(path).read_text())
    _check_version(data)
    return _parse_poses(data)


def save_raw_points(raw, path):
    data = {
        "tracks": [
            {"plane_id": i, "pose_id": j, "points": np.asarray(pts, dtype=float).tolist()}
            for (i, j), pts in sorted(raw.points.items())
        ]
    }
    Path(path).write_text(_dump(data))


def load_raw_points(path):
    data = _loads_json(Path(path).read_text())
    items = _field(data, "tracks", "tracks")
    points = {}
    for k, obj in enumerate(items):
        where = f"tracks[{k}]"
        i = _integer(_field(obj, "plane_id", where), f"{where}.plane_id")
        j = _integer(_field(obj, "pose_id", where), f"{where}.pose_id")
        pts = _field(obj, "points", where)
        if not isinstance(pts, list) or not pts:
            raise ParseError("expected a non-empty list of points", f"{where}.points")
        points[(i, j)] = np.array(
            [_numbers(q, 3, f"{where}.points[{n}]") for n, q in enumerate(pts)]
        )
    return RawPoints(points)

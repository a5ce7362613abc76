"""Second-order plane adjustment: exact damped Newton on the plane-eliminated cost."""

from .estimators import LMPlaneAdjuster, NewtonPlaneAdjuster
from .exceptions import (
    CollinearPoints,
    EmptyObservation,
    FactorizationFailure,
    IndexNotObserved,
    InfeasibleConfig,
    MismatchedDatasets,
    MissingRawPoints,
    ParseError,
    PlaneAdjustError,
    SamePoseIndex,
    SchemaVersionMismatch,
    TooFewPoints,
    UnderconstrainedPlane,
)
from .geometry import Plane, Pose, ScatterMatrix, fit_plane, scatter_from_points, smallest_eigenpair
from .io import load_problem, save_problem
from .lm import lm_solve
from .newton import solve
from .problem import PlaneAdjustProblem, TrackStats, accumulate_track, build_M, evaluate_cost
from .report import SolveReport, SolverConfig
from .scene import NoiseSpec, SceneConfig, generate_scene, perturb_poses

__all__ = [
    "CollinearPoints", "EmptyObservation", "FactorizationFailure", "IndexNotObserved",
    "InfeasibleConfig", "LMPlaneAdjuster", "MismatchedDatasets", "MissingRawPoints",
    "NewtonPlaneAdjuster", "NoiseSpec", "ParseError", "Plane", "PlaneAdjustError",
    "PlaneAdjustProblem", "Pose", "SamePoseIndex", "ScatterMatrix", "SceneConfig",
    "SchemaVersionMismatch", "SolveReport", "SolverConfig", "TooFewPoints", "TrackStats",
    "UnderconstrainedPlane", "accumulate_track", "build_M", "evaluate_cost", "fit_plane",
    "generate_scene", "load_problem", "lm_solve", "perturb_poses", "save_problem",
    "scatter_from_points", "smallest_eigenpair", "solve",
]

"""Solver configuration and per-iteration reports (JSON / CSV)."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import ParseError

GAUGE_MODES = ("fix-first-pose", "free")
CSV_COLUMNS = ("iteration", "tau", "grad_inf_norm", "mu", "accepted", "time_ms")
CONVERGED = ("gradient_tolerance", "cost_tolerance")


@dataclass(frozen=True)
class SolverConfig:
    mu0: float = 1e-4
    max_iters: int = 200
    tol_cost_change: float = 1e-7
    tol_grad_norm: float = 1e-7
    mu_increase: float = 2.0
    mu_decrease: float = 3.0
    max_rejections: int = 32
    gauge: str = "fix-first-pose"
    threads: int = 1

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if not (self.tol_cost_change > 0 and self.tol_grad_norm > 0):
            raise ValueError("tolerances must be positive")
        if self.mu_increase <= 1 or self.mu_decrease <= 1:
            raise ValueError("damping factors must exceed 1")
        if self.gauge not in GAUGE_MODES:
            raise ValueError(f"gauge must be one of {GAUGE_MODES}")
        if self.max_iters < 0 or self.max_rejections < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class IterationRecord:
    iteration: int
    tau: float
    grad_inf_norm: float
    mu: float
    step_norm: float
    accepted: bool
    trial_tau: float
    skipped_degenerate: int = 0
    time_ms: float = 0.0


@dataclass
class SolveReport:
    solver: str
    gauge: str
    records: list = field(default_factory=list)
    termination: str = ""
    final_poses: np.ndarray = None
    dataset_hash: str = None
    config: dict = None
    metadata: dict = None

    @property
    def converged(self):
        return self.termination in CONVERGED

    @property
    def iterations(self):
        """Number of trial steps taken (record 0 is the starting point)."""
        return max(len(self.records) - 1, 0)

    @property
    def final_tau(self):
        return self.records[-1].tau

    @property
    def accepted_taus(self):
        return [r.tau for r in self.records if r.accepted]

    def iterations_to_reach(self, target):
        """First iteration whose cost is at or below ``target``, else None."""
        for r in self.records:
            if r.tau <= target:
                return r.iteration
        return None

    def zero_timings(self):
        for r in self.records:
            r.time_ms = 0.0

    def to_dict(self):
        return {
            "solver": self.solver,
            "gauge": self.gauge,
            "termination": self.termination,
            "dataset_hash": self.dataset_hash,
            "config": self.config,
            "metadata": self.metadata,
            "records": [asdict(r) for r in self.records],
            "final_poses": None
            if self.final_poses is None
            else [
                {"R": X[:3, :3].ravel().tolist(), "t": X[:3, 3].tolist()}
                for X in np.asarray(self.final_poses)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(
                [
                    r.iteration,
                    repr(float(r.tau)),
                    repr(float(r.grad_inf_norm)),
                    repr(float(r.mu)),
                    int(r.accepted),
                    repr(float(r.time_ms)),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data):
        try:
            names = {f.name for f in fields(IterationRecord)}
            records = [
                IterationRecord(**{k: v for k, v in r.items() if k in names})
                for r in data["records"]
            ]
            poses = data.get("final_poses")
            if poses is not None:
                mats = []
                for p in poses:
                    X = np.eye(4)
                    X[:3, :3] = np.reshape(p["R"], (3, 3))
                    X[:3, 3] = p["t"]
                    mats.append(X)
                poses = np.array(mats)
            return cls(
                solver=data["solver"],
                gauge=data["gauge"],
                records=records,
                termination=data["termination"],
                final_poses=poses,
                dataset_hash=data.get("dataset_hash"),
                config=data.get("config"),
                metadata=data.get("metadata"),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed solve report: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno}") from exc
        return cls.from_dict(data)

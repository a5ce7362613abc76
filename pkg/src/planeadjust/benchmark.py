"""Iteration-count comparison between two solve reports on one dataset."""

import csv
import io
from dataclasses import dataclass
from itertools import zip_longest

from .exceptions import MismatchedDatasets

# a run "reaches" a cost when within this relative margin of it
REACH_RTOL = 1e-6
FEWER_FRACTION = 0.8


@dataclass(frozen=True)
class Comparison:
    dataset_hash: str
    candidate: str
    baseline: str
    target: float
    candidate_iters: int  # None if never reached
    baseline_iters: int
    candidate_final: float
    baseline_final: float
    level: object = None

    @property
    def flag(self):
        a, b = self.candidate_iters, self.baseline_iters
        if a == b:
            return "tie"
        if a is None:
            return "more"
        if b is None or a < b:
            return "fewer"
        return "more"

    def line(self):
        return (
            f"dataset={self.dataset_hash[:12]} level={self.level} "
            f"candidate={self.candidate}:{self.candidate_iters} "
            f"baseline={self.baseline}:{self.baseline_iters} target={self.target!r} "
            f"flag={self.flag}"
        )


def compare_reports(candidate, baseline, rtol=REACH_RTOL):
    """Iterations each run needs to come within ``rtol`` of the baseline's final cost."""
    if candidate.dataset_hash != baseline.dataset_hash:
        raise MismatchedDatasets(
            f"reports come from different datasets "
            f"({candidate.dataset_hash} vs {baseline.dataset_hash})"
        )
    target = baseline.final_tau * (1.0 + rtol)
    meta = candidate.metadata or {}
    return Comparison(
        dataset_hash=candidate.dataset_hash or "",
        candidate=candidate.solver,
        baseline=baseline.solver,
        target=target,
        candidate_iters=candidate.iterations_to_reach(target),
        baseline_iters=baseline.iterations_to_reach(target),
        candidate_final=candidate.final_tau,
        baseline_final=baseline.final_tau,
        level=meta.get("level"),
    )


def level_verdicts(comparisons, fraction=FEWER_FRACTION):
    """``{level: (n_fewer, n_total, passed)}`` for the fewer-iterations criterion."""
    out = {}
    for c in comparisons:
        fewer, total = out.get(c.level, (0, 0))
        out[c.level] = (fewer + (c.flag == "fewer"), total + 1)
    return {k: (f, n, f >= fraction * n) for k, (f, n) in out.items()}


def _series(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def iteration_series(a, b):
    """Cost per iteration of both runs, padded to a common length."""
    rows = zip_longest(a.records, b.records)
    return _series(
        (
            (
                i,
                None if ra is None else repr(float(ra.tau)),
                None if rb is None else repr(float(rb.tau)),
            )
            for i, (ra, rb) in enumerate(rows)
        ),
        ("iteration", f"{a.solver}_tau", f"{b.solver}_tau"),
    )


def time_series(a, b):
    """Cost against elapsed time for both runs, one row per record."""
    rows = zip_longest(a.records, b.records)
    return _series(
        (
            (
                None if ra is None else repr(float(ra.time_ms)),
                None if ra is None else repr(float(ra.tau)),
                None if rb is None else repr(float(rb.time_ms)),
                None if rb is None else repr(float(rb.tau)),
            )
            for ra, rb in rows
        ),
        (f"{a.solver}_time_ms", f"{a.solver}_tau", f"{b.solver}_time_ms", f"{b.solver}_tau"),
    )

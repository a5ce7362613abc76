"""Shared accept/reject loop with multiplicative damping updates."""

import time

import numpy as np

from .exceptions import FactorizationFailure
from .report import IterationRecord, SolveReport

MAX_FACTOR_RETRIES = 64


def damped_minimize(state, linearize, propose, config, solver):
    """Generic damped second-order loop.

    ``linearize(state) -> (system, cost)`` where ``system`` exposes
    ``grad_inf_norm()`` and ``skipped_degenerate``; ``propose(state, system,
    mu) -> (trial_state, trial_cost, step)`` may raise
    :class:`FactorizationFailure`, in which case ``mu`` is raised and the
    proposal retried without counting an iteration.
    """
    t_start = time.perf_counter()
    system, cost = linearize(state)
    mu = config.mu0
    report = SolveReport(solver=solver, gauge=config.gauge, config=vars(config).copy())
    report.records.append(
        IterationRecord(0, cost, system.grad_inf_norm(), mu, 0.0, True, cost,
                        system.skipped_degenerate, 0.0)
    )
    rejections = 0
    termination = "max_iterations"
    for it in range(1, config.max_iters + 1):
        if system.grad_inf_norm() < config.tol_grad_norm:
            termination = "gradient_tolerance"
            break
        for _ in range(MAX_FACTOR_RETRIES):
            try:
                trial, trial_cost, step = propose(state, system, mu)
                break
            except FactorizationFailure:
                mu *= config.mu_increase
        else:
            termination = "non_convergence"
            break
        accepted = trial_cost < cost
        mu_used = mu
        if accepted:
            change = (cost - trial_cost) / max(cost, 1e-300)
            state = trial
            system, cost = linearize(state)
            mu /= config.mu_decrease
            rejections = 0
        else:
            change = abs(trial_cost - cost) / max(cost, 1e-300)
            mu *= config.mu_increase
            rejections += 1
        report.records.append(
            IterationRecord(
                it, cost, system.grad_inf_norm(), mu_used,
                float(np.linalg.norm(step)), accepted, trial_cost,
                system.skipped_degenerate, 1e3 * (time.perf_counter() - t_start),
            )
        )
        if change < config.tol_cost_change:
            termination = "cost_tolerance"
            break
        if rejections > config.max_rejections:
            termination = "non_convergence"
            break
    else:
        if system.grad_inf_norm() < config.tol_grad_norm:
            termination = "gradient_tolerance"
    report.termination = termination
    return state, report

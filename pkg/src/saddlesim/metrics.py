"""Convergence measurement: reference solutions, distances, gaps, support.

Reference solutions come from a direct linear solve when the problem is
affine and unconstrained, otherwise from a high-precision extragradient
run.  They are cached per (problem fingerprint, tolerance) because
experiment sweeps evaluate distances against the same solution thousands
of times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import (
    NetworkProblem,
    ProblemConstants,
    SplitPoint,
    assemble_operator_jacobian,
)
from .solvers import _eg_loop

__all__ = [
    "ReferenceSolution",
    "reference_solution",
    "clear_reference_cache",
    "distance_sq",
    "saddle_gap",
    "consensus_error",
    "support_size",
    "operator_bound_at",
]


@dataclass(frozen=True)
class ReferenceSolution:
    z_star: SplitPoint
    achieved_residual: float
    method: str


_CACHE: Dict[Tuple[bytes, float], ReferenceSolution] = {}


def clear_reference_cache() -> None:
    _CACHE.clear()


def reference_solution(problem: NetworkProblem, tol: float, *,
                       constants: Optional[ProblemConstants] = None,
                       step: Optional[float] = None,
                       max_iters: int = 2_000_000,
                       use_cache: bool = True) -> ReferenceSolution:
    """High-precision saddle point of the mean problem.

    Affine unconstrained problems are solved directly (the residual is the
    operator norm at the solution).  Otherwise extragradient runs until the
    distance between successive iterates falls to ``tol``; the residual
    reported is that final move.  A non-convergent run raises RuntimeError.
    """
    key = (problem.fingerprint(), float(tol))
    if use_cache and key in _CACHE:
        return _CACHE[key]

    affine = all(a.constant_hessian for a in problem.agents) \
        and problem.set_x.is_whole_space and problem.set_y.is_whole_space
    if affine:
        blocks = [a.hessian_blocks(None, None) for a in problem.agents]
        jac = sum(assemble_operator_jacobian(*b) for b in blocks) / problem.n_agents
        zero = SplitPoint.zeros(problem.dim_x, problem.dim_y)
        offset = problem.mean_operator(zero).to_array()
        z = np.linalg.solve(jac, -offset)
        z_star = SplitPoint.from_array(z, problem.dim_x)
        residual = float(np.linalg.norm(problem.mean_operator(z_star).to_array()))
        out = ReferenceSolution(z_star, residual, "linear-solve")
    else:
        if step is None:
            if constants is None:
                raise ValueError("need problem constants (or an explicit step)")
            step = 1.0 / (2.0 * constants.L)
        z0 = problem.initial_point()
        x, y, _, move = _eg_loop(
            problem.mean_operator_xy, problem.project_xy,
            z0.x, z0.y, step, tol=tol, max_iters=max_iters,
        )
        out = ReferenceSolution(SplitPoint(x, y), move, "extragradient")
    if use_cache:
        _CACHE[key] = out
    return out


def distance_sq(z: SplitPoint, ref) -> float:
    """Squared Euclidean distance to a point or a reference solution."""
    target = ref.z_star if isinstance(ref, ReferenceSolution) else ref
    return float(np.sum((z.x - target.x) ** 2) + np.sum((z.y - target.y) ** 2))


def saddle_gap(problem: NetworkProblem, z: SplitPoint,
               constants: ProblemConstants, *,
               budget: Optional[int] = None, tol: float = 1e-6) -> float:
    """max_y' f(x, y') - min_x' f(x', y), by projected gradient inner solves.

    The two one-sided problems are solved independently with step 1/L; the
    budget defaults to 10 L / mu steps in the strongly-monotone case and to
    10 L omega^2 / tol otherwise.  The result is nonnegative up to the
    inner-solve accuracy.
    """
    big_l = constants.L
    step = 1.0 / big_l
    if budget is None:
        if constants.mu > 0:
            budget = math.ceil(10.0 * big_l / constants.mu)
        else:
            omega = constants.omega if constants.omega is not None else problem.domain_diameter()
            budget = math.ceil(10.0 * big_l * omega ** 2 / tol)
        budget = max(budget, 50)

    y_best = z.y.copy()
    for _ in range(budget):
        _, fy = problem.mean_operator_xy(z.x, y_best)
        y_best = problem.set_y.project(y_best + step * (-fy))   # ascent on f(x, .)
    x_best = z.x.copy()
    for _ in range(budget):
        fx, _ = problem.mean_operator_xy(x_best, z.y)
        x_best = problem.set_x.project(x_best - step * fx)      # descent on f(., y)
    return problem.mean_value(z.x, y_best) - problem.mean_value(x_best, z.y)


def consensus_error(points: Sequence[SplitPoint]) -> float:
    """Sum of squared distances from the per-agent points to their mean."""
    if len(points) == 0:
        raise ValueError("need at least one point")
    xs = np.stack([p.x for p in points])
    ys = np.stack([p.y for p in points])
    return float(np.sum((xs - xs.mean(axis=0)) ** 2) + np.sum((ys - ys.mean(axis=0)) ** 2))


def support_size(z: SplitPoint, tol: float = 1e-14) -> int:
    """Largest 1-based index carrying mass above ``tol`` in either block."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")

    def last_nonzero(v: np.ndarray) -> int:
        idx = np.nonzero(np.abs(v) > tol)[0]
        return int(idx[-1]) + 1 if idx.size else 0

    return max(last_nonzero(z.x), last_nonzero(z.y))


def operator_bound_at(problem: NetworkProblem, z: SplitPoint) -> float:
    """max over agents of the local operator norm at a point."""
    return max(
        float(np.linalg.norm(problem.local_operator(m, z).to_array()))
        for m in range(problem.n_agents)
    )

"""Saddle-point solvers and their theory-prescribed tunings.

Four method families are implemented:

* a plain extragradient loop (also the inner solver for the proximal
  subproblems and the reference-solution engine);
* a master/workers similarity-sliding method: the master absorbs the mean
  operator drift into a proximal subproblem built from its own loss, so the
  number of outer rounds scales with the similarity-to-monotonicity ratio
  instead of the condition number;
* its mesh-network counterpart, where a uniformly random node plays the
  master role each round and accelerated gossip propagates points and
  operator averages;
* extragradient baselines (centralized, decentralized diffusion, and
  decentralized with gradient tracking).

All runs are deterministic given the problem, tuning, round budget and
seed.  Communication counters advance by the number of synchronous
exchanges each primitive performs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    ConstraintSet,
    LocalProblem,
    NetworkProblem,
    ProblemConstants,
    SplitPoint,
)
from .network import GossipMatrix, acc_gossip
from .trace import RunTrace, TraceRow

__all__ = [
    "TuningParameters",
    "DivergenceError",
    "tune",
    "extragradient",
    "solve_local_subproblem",
    "run_master_sliding",
    "run_gossip_sliding",
    "run_baseline",
    "regularize_convex_concave",
    "averaged_iterate",
    "BASELINE_KINDS",
]

BASELINE_KINDS = ("egd_centralized", "egd_decentralized", "egd_gradient_tracking")

MODES = ("sc-centralized", "sc-decentralized", "cc-centralized", "cc-decentralized")


class DivergenceError(RuntimeError):
    """An iterate became non-finite."""

    def __init__(self, message: str, round_index: int):
        super().__init__(f"{message} (round {round_index})")
        self.round_index = round_index


@dataclass(frozen=True)
class TuningParameters:
    """Stepsize, inner-solve budget and gossip budgets for one run.

    ``inner_precision`` is relative (a contraction factor on the starting
    error) in the strongly-monotone modes and absolute in the
    convex-concave modes.  ``inner_iters`` is the fixed extragradient
    budget that achieves it, ``inner_step`` the inner stepsize.  The gossip
    budgets are only set for the decentralized modes.
    """

    mode: str
    gamma: float
    inner_precision: float
    precision_is_relative: bool
    inner_iters: int
    inner_step: float
    gossip_h0: Optional[int] = None
    gossip_h1: Optional[int] = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.precision_is_relative and not (0 < self.inner_precision < 1):
            raise ValueError("relative inner precision must lie in (0, 1)")
        if self.inner_iters < 1:
            raise ValueError("inner iteration budget must be at least 1")


def tune(mode: str, constants: ProblemConstants, *,
         rho: Optional[float] = None, n_agents: Optional[int] = None,
         omega: Optional[float] = None, epsilon: Optional[float] = None,
         inner_iter_scale: float = 4.0, gossip_scale: float = 1.0) -> TuningParameters:
    """Derive the full parameter set for a mode from the problem constants.

    Strongly-monotone modes use gamma = min(1/(12 mu), 1/(c delta)) with
    c = 4 (centralized) or 7 (decentralized) and a relative inner precision
    chosen so that the inner error is absorbed by the per-round contraction.
    Convex-concave modes use gamma = 1/(2 delta) or 1/(4 delta) and an
    absolute inner precision driven by the target accuracy.  Decentralized
    modes additionally receive gossip budgets proportional to
    log(...)/sqrt(rho); the hidden proportionality constant is exposed as
    ``gossip_scale``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    mu, delta, big_l = constants.mu, constants.delta, constants.L
    omega = omega if omega is not None else constants.omega
    g_bound = constants.G if constants.G is not None else 0.0
    decentralized = mode.endswith("decentralized")
    convex_concave = mode.startswith("cc")

    if decentralized:
        if rho is None or not (0 < rho <= 1):
            raise ValueError("decentralized modes need an eigengap rho in (0, 1]")
        if n_agents is None:
            raise ValueError("decentralized modes need the agent count")
        if omega is None:
            raise ValueError("decentralized modes need a domain diameter (or hint)")
        if epsilon is None:
            raise ValueError("decentralized modes need a target accuracy epsilon")
    if convex_concave:
        if omega is None:
            raise ValueError("convex-concave modes need a compact domain diameter")
        if epsilon is None:
            raise ValueError("convex-concave modes need a target accuracy epsilon")
        if delta <= 0:
            raise ValueError("convex-concave tunings require delta > 0")
    elif mu <= 0:
        raise ValueError("strongly-monotone modes require mu > 0")

    if mode == "sc-centralized":
        gamma = min(1.0 / (12.0 * mu), 1.0 / (4.0 * delta)) if delta > 0 else 1.0 / (12.0 * mu)
        denom = 2.0 + 4.0 * gamma * delta ** 2 / mu + 4.0 / (gamma * mu) + 4.0 * gamma ** 2 * delta ** 2
        precision = 1.0 / (2.0 * denom)
        relative = True
        log_arg = 1.0 / precision
    elif mode == "sc-decentralized":
        gamma = min(1.0 / (12.0 * mu), 1.0 / (7.0 * delta)) if delta > 0 else 1.0 / (12.0 * mu)
        denom = 2.0 + 12.0 * gamma ** 2 * delta ** 2 + 4.0 / (gamma * mu) + 8.0 * gamma * delta ** 2 / mu
        precision = 1.0 / (2.0 * denom)
        relative = True
        log_arg = 1.0 / precision
    else:
        gamma = 1.0 / (2.0 * delta) if mode == "cc-centralized" else 1.0 / (4.0 * delta)
        precision = min(
            epsilon / delta,
            epsilon ** 2 / (big_l * omega + g_bound + delta * omega) ** 2,
        )
        relative = False
        log_arg = omega ** 2 / precision

    inner_iters = max(1, math.ceil(inner_iter_scale * (1.0 + gamma * big_l) * math.log(max(log_arg, math.e))))
    inner_step = 1.0 / (2.0 * (1.0 + gamma * big_l))

    h0 = h1 = None
    if decentralized:
        # the budget formulas involve mu; in the convex-concave mode the
        # regularization modulus eps/(2 omega^2) plays that role
        mu_eff = mu if mu > 0 else epsilon / (2.0 * omega ** 2)
        arg0 = (gamma ** 2 + gamma / mu_eff) * n_agents * (big_l * omega + g_bound) ** 2 \
            / (epsilon * gamma * mu_eff)
        arg1 = (1.0 + gamma ** 2 * big_l ** 2 + gamma * big_l ** 2 / mu_eff) * n_agents * omega ** 2 \
            / (epsilon * gamma * mu_eff)
        h0 = max(1, math.ceil(gossip_scale / math.sqrt(rho) * math.log(max(arg0, math.e))))
        h1 = max(1, math.ceil(gossip_scale / math.sqrt(rho) * math.log(max(arg1, math.e))))

    return TuningParameters(
        mode=mode, gamma=gamma, inner_precision=precision,
        precision_is_relative=relative, inner_iters=inner_iters,
        inner_step=inner_step, gossip_h0=h0, gossip_h1=h1,
    )


# ---------------------------------------------------------------------------
# Extragradient
# ---------------------------------------------------------------------------


def _eg_loop(op_xy, proj_xy, x, y, step, iters=None, tol=None, max_iters=1_000_000):
    """Projected extragradient on raw arrays; returns (x, y, iters, last_move)."""
    if iters is None and tol is None:
        raise ValueError("need an iteration budget or a stopping tolerance")
    budget = iters if iters is not None else max_iters
    last_move = math.inf
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, budget + 1):
            gx, gy = op_xy(x, y)
            hx, hy = proj_xy(x - step * gx, y - step * gy)
            gx, gy = op_xy(hx, hy)
            nx, ny = proj_xy(x - step * gx, y - step * gy)
            if not (np.all(np.isfinite(nx)) and np.all(np.isfinite(ny))):
                raise DivergenceError("extragradient iterate is non-finite", k)
            last_move = math.sqrt(float(np.sum((nx - x) ** 2) + np.sum((ny - y) ** 2)))
            x, y = nx, ny
            if tol is not None and last_move <= tol:
                return x, y, k, last_move
    if tol is not None:
        raise RuntimeError(
            f"extragradient did not reach tolerance {tol} within {budget} iterations "
            f"(last move {last_move:.3e})"
        )
    return x, y, k, last_move


def extragradient(operator: Callable[[SplitPoint], SplitPoint],
                  set_x: ConstraintSet, set_y: ConstraintSet,
                  z0: SplitPoint, step: float, *,
                  iters: Optional[int] = None, tol: Optional[float] = None,
                  max_iters: int = 1_000_000) -> SplitPoint:
    """Run the extragradient method and return the last iterate.

    Each iteration takes a projected look-ahead step and then re-steps from
    the original point using the look-ahead operator value.  Stops after
    ``iters`` iterations, or once the distance between successive iterates
    drops to ``tol``.
    """
    if step <= 0:
        raise ValueError("step must be positive")

    def op_xy(x, y):
        g = operator(SplitPoint(x, y))
        return g.x, g.y

    def proj_xy(x, y):
        return set_x.project(x), set_y.project(y)

    x, y, _, _ = _eg_loop(op_xy, proj_xy, z0.x, z0.y, step,
                          iters=iters, tol=tol, max_iters=max_iters)
    return SplitPoint(x, y)


def solve_local_subproblem(local: LocalProblem, v: SplitPoint, gamma: float,
                           set_x: ConstraintSet, set_y: ConstraintSet, *,
                           iters: int, step: float,
                           start: Optional[SplitPoint] = None) -> SplitPoint:
    """Approximately solve the proximal subproblem anchored at v.

    The target is min_x max_y  gamma f(u) + ||u_x - v_x||^2/2 - ||u_y - v_y||^2/2,
    whose operator gamma F(u) + (u - v) is 1-strongly monotone; a fixed
    extragradient budget therefore yields a relative accuracy that shrinks
    geometrically with ``iters``.  With gamma = 0 the exact solution is the
    projection of v.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        return SplitPoint(set_x.project(v.x), set_y.project(v.y))

    vx, vy = v.x, v.y

    def op_xy(x, y):
        gx, gy = local.operator_xy(x, y)
        return gamma * gx + (x - vx), gamma * gy + (y - vy)

    def proj_xy(x, y):
        return set_x.project(x), set_y.project(y)

    z0 = start if start is not None else v
    x, y, _, _ = _eg_loop(op_xy, proj_xy, z0.x, z0.y, step, iters=iters)
    return SplitPoint(x, y)


# ---------------------------------------------------------------------------
# Trace recording
# ---------------------------------------------------------------------------

# A callback receives (round, comm_rounds, local_iters, z_mean, z_nodes) and
# may return a mapping with any of the metric keys below plus "stop".
Callback = Callable[[int, int, int, SplitPoint, Optional[Sequence[SplitPoint]]], Optional[Mapping]]

_METRIC_KEYS = ("dist_sq", "gap", "consensus_err")


class _Recorder:
    def __init__(self, method: str, callback: Optional[Callback], record_wall_time: bool):
        self.trace = RunTrace(method=method)
        self.callback = callback
        self.record_wall_time = record_wall_time
        self._t0 = time.perf_counter()

    def record(self, round_index: int, comm: int, local_iters: int,
               z_mean: SplitPoint, z_nodes=None) -> bool:
        """Append a row; returns True when the callback requests a stop."""
        row = TraceRow(round=round_index, comm_rounds=comm, local_iters=local_iters)
        if self.record_wall_time:
            row.wall_seconds = time.perf_counter() - self._t0
        stop = False
        if self.callback is not None:
            out = self.callback(round_index, comm, local_iters, z_mean, z_nodes)
            if out:
                for key in _METRIC_KEYS:
                    if key in out:
                        setattr(row, key, float(out[key]))
                stop = bool(out.get("stop", False))
        self.trace.rows.append(row)
        return stop


# ---------------------------------------------------------------------------
# Similarity-sliding methods
# ---------------------------------------------------------------------------


def run_master_sliding(problem: NetworkProblem, tuning: TuningParameters, rounds: int, *,
                       z0: Optional[SplitPoint] = None, callback: Optional[Callback] = None,
                       keep_u_history: bool = False,
                       record_wall_time: bool = False) -> RunTrace:
    """Master/workers similarity sliding.

    Per round: workers ship their operator values (one gather), the master
    shifts the anchor by the operator drift gamma (F - F_1), solves its
    proximal subproblem to the tuned precision, asks the workers for the
    operator values at the trial point (second gather), applies the
    drift correction and broadcasts the projected iterate (one broadcast).
    Exactly three communication rounds are counted per outer round.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    master = problem.agents[0]
    gamma = tuning.gamma
    z = z0 if z0 is not None else problem.initial_point()
    rec = _Recorder("master_sliding", callback, record_wall_time)
    if keep_u_history:
        rec.trace.u_history = []
    comm = 0
    liters = 0
    rec.record(0, comm, liters, z)
    for k in range(1, rounds + 1):
        fx, fy = problem.mean_operator_xy(z.x, z.y)     # workers -> master
        comm += 1
        f1x, f1y = master.operator_xy(z.x, z.y)
        drift_x, drift_y = fx - f1x, fy - f1y
        v = SplitPoint(z.x - gamma * drift_x, z.y - gamma * drift_y)
        u = solve_local_subproblem(master, v, gamma, problem.set_x, problem.set_y,
                                   iters=tuning.inner_iters, step=tuning.inner_step,
                                   start=z)
        liters += tuning.inner_iters
        fux, fuy = problem.mean_operator_xy(u.x, u.y)   # workers -> master, trial point
        comm += 1
        f1ux, f1uy = master.operator_xy(u.x, u.y)
        wx = u.x + gamma * (drift_x - (fux - f1ux))
        wy = u.y + gamma * (drift_y - (fuy - f1uy))
        if not (np.all(np.isfinite(wx)) and np.all(np.isfinite(wy))):
            raise DivergenceError("master-sliding iterate is non-finite", k)
        z = SplitPoint(*problem.project_xy(wx, wy))     # broadcast
        comm += 1
        if keep_u_history:
            rec.trace.u_history.append(u)
        if rec.record(k, comm, liters, z):
            break
    rec.trace.final = z
    rec.trace.validate()
    return rec.trace


def run_gossip_sliding(problem: NetworkProblem, gossip: GossipMatrix,
                       tuning: TuningParameters, rounds: int, seed: int, *,
                       z0: Optional[SplitPoint] = None, callback: Optional[Callback] = None,
                       keep_u_history: bool = False,
                       record_wall_time: bool = False) -> RunTrace:
    """Mesh-network similarity sliding with accelerated gossip.

    Per round: operator rows are averaged by accelerated gossip (H0 + 1
    exchanges), a uniformly random node solves its proximal subproblem,
    the trial point is spread by gossip from that single node (H1 + 1),
    operator values at the spread points are averaged again (H0 + 1), the
    corrected point is spread once more (H1 + 1) and every node projects.
    The communication counter therefore advances by
    2 (H0 + 1) + 2 (H1 + 1) per round.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if tuning.gossip_h0 is None or tuning.gossip_h1 is None:
        raise ValueError("gossip budgets are missing from the tuning")
    m = problem.n_agents
    if gossip.n_agents != m:
        raise ValueError("gossip matrix size does not match the agent count")
    dx, dy = problem.dim_x, problem.dim_y
    gamma = tuning.gamma
    h0, h1 = tuning.gossip_h0, tuning.gossip_h1
    rng = np.random.default_rng(seed)

    start = z0 if z0 is not None else problem.initial_point()
    zs = np.tile(np.concatenate([start.x, start.y]), (m, 1))

    def op_rows(rows):
        out = np.empty_like(rows)
        for i, agent in enumerate(problem.agents):
            gx, gy = agent.operator_xy(rows[i, :dx], rows[i, dx:])
            out[i, :dx] = gx
            out[i, dx:] = gy
        return out

    def project_rows(rows):
        out = np.empty_like(rows)
        for i in range(m):
            px, py = problem.project_xy(rows[i, :dx], rows[i, dx:])
            out[i, :dx] = px
            out[i, dx:] = py
        return out

    def nodes_of(rows):
        return [SplitPoint(rows[i, :dx], rows[i, dx:]) for i in range(m)]

    def mean_of(rows):
        v = rows.mean(axis=0)
        return SplitPoint(v[:dx], v[dx:])

    rec = _Recorder("gossip_sliding", callback, record_wall_time)
    if keep_u_history:
        rec.trace.u_history = []
    comm = 0
    liters = 0
    rec.record(0, comm, liters, mean_of(zs), nodes_of(zs))
    for k in range(1, rounds + 1):
        f_rows = op_rows(zs)
        fbar = acc_gossip(f_rows, gossip, h0)
        comm += h0 + 1
        mk = int(rng.integers(m))
        local = problem.agents[mk]
        drift = fbar[mk] - f_rows[mk]
        v = SplitPoint(zs[mk, :dx] - gamma * drift[:dx], zs[mk, dx:] - gamma * drift[dx:])
        z_mk = SplitPoint(zs[mk, :dx], zs[mk, dx:])
        u_tilde = solve_local_subproblem(local, v, gamma, problem.set_x, problem.set_y,
                                         iters=tuning.inner_iters, step=tuning.inner_step,
                                         start=z_mk)
        liters += tuning.inner_iters
        spread = np.zeros_like(zs)
        spread[mk] = u_tilde.to_array()
        u_rows = m * acc_gossip(spread, gossip, h1)
        comm += h1 + 1
        fbar_half = acc_gossip(op_rows(u_rows), gossip, h0)
        comm += h0 + 1
        fu_x, fu_y = local.operator_xy(u_tilde.x, u_tilde.y)
        correction = drift - fbar_half[mk] + np.concatenate([fu_x, fu_y])
        z_tilde = u_tilde.to_array() + gamma * correction
        if not np.all(np.isfinite(z_tilde)):
            raise DivergenceError("gossip-sliding iterate is non-finite", k)
        spread = np.zeros_like(zs)
        spread[mk] = z_tilde
        zs = project_rows(m * acc_gossip(spread, gossip, h1))
        comm += h1 + 1
        if keep_u_history:
            rec.trace.u_history.append(u_tilde)
        if rec.record(k, comm, liters, mean_of(zs), nodes_of(zs)):
            break
    rec.trace.final = mean_of(zs)
    rec.trace.final_nodes = nodes_of(zs)
    rec.trace.validate()
    return rec.trace


# ---------------------------------------------------------------------------
# Extragradient baselines
# ---------------------------------------------------------------------------


def run_baseline(kind: str, problem: NetworkProblem, step: float, rounds: int, *,
                 gossip: Optional[GossipMatrix] = None,
                 z0: Optional[SplitPoint] = None, callback: Optional[Callback] = None,
                 state_probe: Optional[Callable] = None,
                 record_wall_time: bool = False) -> RunTrace:
    """Extragradient baselines.

    ``egd_centralized`` runs extragradient on the mean operator; every
    operator evaluation costs one gather plus one broadcast (2 exchanges,
    so 4 per iteration).  ``egd_decentralized`` is the diffusion variant:
    each half-step takes a local operator step and mixes the result once
    with W (2 exchanges per iteration); on a complete graph with uniform
    weights it reproduces the centralized trajectory exactly.
    ``egd_gradient_tracking`` additionally maintains tracker rows
    s <- W s + F(z+) - F(z) that are used in place of the local operator
    values; iterate and tracker mixings give 4 exchanges per iteration.

    ``state_probe``, when given, is called as probe(round, node_rows,
    tracker_rows) after every iteration of a decentralized kind (trackers
    are None without gradient tracking); it exists for verification.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"kind must be one of {BASELINE_KINDS}, got {kind!r}")
    if step <= 0:
        raise ValueError("step must be positive")
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if kind != "egd_centralized" and gossip is None:
        raise ValueError(f"{kind} needs a gossip matrix")

    start = z0 if z0 is not None else problem.initial_point()
    rec = _Recorder(kind, callback, record_wall_time)
    comm = 0
    liters = 0

    if kind == "egd_centralized":
        x, y = start.x, start.y
        rec.record(0, comm, liters, SplitPoint(x, y))
        for k in range(1, rounds + 1):
            gx, gy = problem.mean_operator_xy(x, y)
            comm += 2
            hx, hy = problem.project_xy(x - step * gx, y - step * gy)
            gx, gy = problem.mean_operator_xy(hx, hy)
            comm += 2
            x, y = problem.project_xy(x - step * gx, y - step * gy)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise DivergenceError("centralized extragradient diverged", k)
            liters += 1
            if rec.record(k, comm, liters, SplitPoint(x, y)):
                break
        rec.trace.final = SplitPoint(x, y)
        rec.trace.validate()
        return rec.trace

    m = problem.n_agents
    if gossip.n_agents != m:
        raise ValueError("gossip matrix size does not match the agent count")
    dx = problem.dim_x
    w = gossip.matrix

    def op_rows(rows):
        out = np.empty_like(rows)
        for i, agent in enumerate(problem.agents):
            gx, gy = agent.operator_xy(rows[i, :dx], rows[i, dx:])
            out[i, :dx] = gx
            out[i, dx:] = gy
        return out

    def project_rows(rows):
        out = np.empty_like(rows)
        for i in range(m):
            px, py = problem.project_xy(rows[i, :dx], rows[i, dx:])
            out[i, :dx] = px
            out[i, dx:] = py
        return out

    def nodes_of(rows):
        return [SplitPoint(rows[i, :dx], rows[i, dx:]) for i in range(m)]

    def mean_of(rows):
        v = rows.mean(axis=0)
        return SplitPoint(v[:dx], v[dx:])

    zs = np.tile(np.concatenate([start.x, start.y]), (m, 1))
    rec.record(0, comm, liters, mean_of(zs), nodes_of(zs))

    if kind == "egd_decentralized":
        for k in range(1, rounds + 1):
            half = project_rows(w @ (zs - step * op_rows(zs)))
            comm += 1
            zs_new = project_rows(w @ (zs - step * op_rows(half)))
            comm += 1
            if not np.all(np.isfinite(zs_new)):
                raise DivergenceError("decentralized extragradient diverged", k)
            zs = zs_new
            liters += 2
            if state_probe is not None:
                state_probe(k, zs, None)
            if rec.record(k, comm, liters, mean_of(zs), nodes_of(zs)):
                break
    else:
        fz = op_rows(zs)
        trackers = fz.copy()
        for k in range(1, rounds + 1):
            half = project_rows(w @ (zs - step * trackers))
            comm += 1
            f_half = op_rows(half)
            trackers_half = w @ trackers + f_half - fz
            comm += 1
            zs_new = project_rows(w @ (zs - step * trackers_half))
            comm += 1
            f_new = op_rows(zs_new)
            trackers = w @ trackers_half + f_new - f_half
            comm += 1
            if not np.all(np.isfinite(zs_new)):
                raise DivergenceError("gradient-tracking extragradient diverged", k)
            zs, fz = zs_new, f_new
            liters += 2
            if state_probe is not None:
                state_probe(k, zs, trackers)
            if rec.record(k, comm, liters, mean_of(zs), nodes_of(zs)):
                break

    rec.trace.final = mean_of(zs)
    rec.trace.final_nodes = nodes_of(zs)
    rec.trace.validate()
    return rec.trace


# ---------------------------------------------------------------------------
# Convex-concave regularization
# ---------------------------------------------------------------------------


class _RegularizedProblem(LocalProblem):
    """Base loss plus coeff/2 ||x - x0||^2 - coeff/2 ||y - y0||^2."""

    def __init__(self, base: LocalProblem, coeff: float, anchor: SplitPoint):
        self.base = base
        self.coeff = coeff
        self.anchor = anchor
        self.dim_x = base.dim_x
        self.dim_y = base.dim_y
        self.constant_hessian = base.constant_hessian

    def value(self, x, y):
        c = self.coeff / 2.0
        return self.base.value(x, y) \
            + c * float(np.sum((x - self.anchor.x) ** 2)) \
            - c * float(np.sum((y - self.anchor.y) ** 2))

    def operator_xy(self, x, y):
        gx, gy = self.base.operator_xy(x, y)
        return gx + self.coeff * (x - self.anchor.x), gy + self.coeff * (y - self.anchor.y)

    def hessian_blocks(self, x, y):
        blocks = self.base.hessian_blocks(x, y)
        if blocks is None:
            return None
        hxx, hxy, hyy = blocks
        eye_x = self.coeff * np.eye(self.dim_x)
        eye_y = self.coeff * np.eye(self.dim_y)
        return hxx + eye_x, hxy, hyy - eye_y

    def _fingerprint_parts(self):
        return (np.array([self.coeff]), self.anchor.x, self.anchor.y) \
            + tuple(self.base._fingerprint_parts())


def regularize_convex_concave(problem: NetworkProblem, constants: ProblemConstants,
                              epsilon: float, *, anchor: Optional[SplitPoint] = None):
    """Shift a convex-concave problem into the strongly-monotone regime.

    Every agent gains eps/(4 omega^2) ||x - x0||^2 - eps/(4 omega^2) ||y - y0||^2,
    making the network eps/(2 omega^2)-strongly monotone while leaving the
    similarity untouched (the added blocks are identical across agents).
    Requires compact constraint sets.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    omega = problem.domain_diameter()
    coeff = epsilon / (2.0 * omega ** 2)
    if anchor is None:
        anchor = problem.initial_point()
    agents = [_RegularizedProblem(a, coeff, anchor) for a in problem.agents]
    regularized = NetworkProblem(agents, problem.set_x, problem.set_y)
    new_constants = ProblemConstants(
        L=constants.L + coeff,
        mu=coeff,
        delta=constants.delta,
        G=constants.G,
        omega=omega,
        mu_safe=coeff,
    )
    return regularized, new_constants


def averaged_iterate(trace: RunTrace) -> SplitPoint:
    """Coordinate-wise mean of the recorded subproblem outputs."""
    if not trace.u_history:
        raise ValueError("the trace has no recorded subproblem outputs")
    total = trace.u_history[0]
    for u in trace.u_history[1:]:
        total = total + u
    return total * (1.0 / len(trace.u_history))

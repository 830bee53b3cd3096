"""Concrete problem families.

Two families carry the benchmark suite: robust linear regression (with
closed-form estimates of smoothness, strong convexity and cross-dataset
similarity) and a bilinear chain instance whose coordinate-propagation
structure makes it the worst case for communication-limited solvers.  A
generic quadratic saddle family is provided for controlled tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import mpmath
import numpy as np
import scipy.sparse as sp

from .core import (
    ConstraintSet,
    DimensionMismatchError,
    LocalProblem,
    NetworkProblem,
    ProblemConstants,
    assemble_operator_jacobian,
    finite_difference_jacobian,
    spectral_norm,
)
from .network import Topology, build_topology

__all__ = [
    "QuadraticSaddleProblem",
    "RobustRegressionProblem",
    "HardInstance",
    "build_robust_regression",
    "estimate_regression_constants",
    "estimate_similarity",
    "node_vs_mean_similarity",
    "build_hard_instance",
    "hard_instance_min_dimension",
    "approx_solution_ybar",
    "hard_instance_dual_solution",
    "ybar_approximation_gap",
    "build_quadratic_network",
    "measure_quadratic_constants",
]


def _is_sparse(m) -> bool:
    return sp.issparse(m)


def _matvec(op, v: np.ndarray) -> np.ndarray:
    if np.isscalar(op):
        return op * v
    return np.asarray(op @ v)


def _rmatvec(op, v: np.ndarray) -> np.ndarray:
    if np.isscalar(op):
        return op * v
    return np.asarray(op.T @ v)


def _to_dense(op, n: int, m: int) -> np.ndarray:
    if np.isscalar(op):
        out = np.zeros((n, m))
        np.fill_diagonal(out, op)
        return out
    if _is_sparse(op):
        return op.toarray()
    return np.asarray(op, dtype=float)


class QuadraticSaddleProblem(LocalProblem):
    """f(x, y) = x'Px/2 - y'Qy/2 + x'Cy + a'x + b'y.

    P and Q may be given as scalars (meaning that multiple of the identity);
    C may be dense or sparse.  The saddle operator is the affine map
    F(z) = (Px + Cy + a,  Qy - C'x - b).
    """

    constant_hessian = True

    def __init__(self, p, q, c, a: Optional[np.ndarray] = None, b: Optional[np.ndarray] = None,
                 dim_x: Optional[int] = None, dim_y: Optional[int] = None):
        if np.isscalar(c):
            raise ValueError("coupling block C must be a matrix")
        self.p = p
        self.q = q
        self.c = c
        self.dim_x = int(c.shape[0]) if dim_x is None else dim_x
        self.dim_y = int(c.shape[1]) if dim_y is None else dim_y
        self.a = np.zeros(self.dim_x) if a is None else np.asarray(a, dtype=float)
        self.b = np.zeros(self.dim_y) if b is None else np.asarray(b, dtype=float)
        if self.a.shape != (self.dim_x,) or self.b.shape != (self.dim_y,):
            raise DimensionMismatchError("linear terms do not match block dimensions")

    def value(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(
            0.5 * x @ _matvec(self.p, x)
            - 0.5 * y @ _matvec(self.q, y)
            + x @ _matvec(self.c, y)
            + self.a @ x
            + self.b @ y
        )

    def operator_xy(self, x: np.ndarray, y: np.ndarray):
        gx = _matvec(self.p, x) + _matvec(self.c, y) + self.a
        gy = _matvec(self.q, y) - _rmatvec(self.c, x) - self.b
        return gx, gy

    def hessian_blocks(self, x: np.ndarray = None, y: np.ndarray = None):
        return (
            _to_dense(self.p, self.dim_x, self.dim_x),
            _to_dense(self.c, self.dim_x, self.dim_y),
            -_to_dense(self.q, self.dim_y, self.dim_y),
        )

    def affine_map(self):
        """Return (J, g) with F(z) = J z + g, J assembled dense."""
        hxx, hxy, hyy = self.hessian_blocks()
        jac = assemble_operator_jacobian(hxx, hxy, hyy)
        g = np.concatenate([self.a, -self.b])
        return jac, g

    def _fingerprint_parts(self):
        return (
            _to_dense(self.p, self.dim_x, self.dim_x).ravel(),
            _to_dense(self.q, self.dim_y, self.dim_y).ravel(),
            _to_dense(self.c, self.dim_x, self.dim_y).ravel(),
            self.a,
            self.b,
        )


class RobustRegressionProblem(LocalProblem):
    """Robust linear regression loss of one agent.

    g(w, r) = ||Xw + 1 r'w - y||^2 / (2N) + lam ||w||^2 / 2 - beta ||r||^2 / 2,
    where w are the model weights and r is the adversarial feature shift.
    The feasible region is the product of the balls ||w|| <= radius_w and
    ||r|| <= radius_r.
    """

    def __init__(self, data, labels, lam: float, beta: float,
                 radius_w: float, radius_r: float):
        labels = np.asarray(labels, dtype=float).ravel()
        if not _is_sparse(data):
            data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise DimensionMismatchError("data must be a 2-d matrix")
        if data.shape[0] != labels.shape[0]:
            raise DimensionMismatchError(
                f"{data.shape[0]} rows of data vs {labels.shape[0]} labels"
            )
        if data.shape[0] < 1:
            raise ValueError("need at least one data point")
        for name, val in (("lam", lam), ("beta", beta),
                          ("radius_w", radius_w), ("radius_r", radius_r)):
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")
        self.data = data
        self.labels = labels
        self.lam = float(lam)
        self.beta = float(beta)
        self.radius_w = float(radius_w)
        self.radius_r = float(radius_r)
        self.n_samples = data.shape[0]
        self.dim_x = data.shape[1]
        self.dim_y = data.shape[1]
        # cached aggregates used by the operator and the constant estimates
        self.col_sums = np.asarray(data.sum(axis=0)).ravel()
        self.label_sum = float(labels.sum())
        self.data_t_labels = np.asarray(data.T @ labels).ravel()

    def constraint_sets(self):
        d = self.dim_x
        return (ConstraintSet.ball(np.zeros(d), self.radius_w),
                ConstraintSet.ball(np.zeros(d), self.radius_r))

    def value(self, w: np.ndarray, r: np.ndarray) -> float:
        resid = np.asarray(self.data @ w).ravel() + (r @ w) - self.labels
        return float(
            0.5 * resid @ resid / self.n_samples
            + 0.5 * self.lam * w @ w
            - 0.5 * self.beta * r @ r
        )

    def operator_xy(self, w: np.ndarray, r: np.ndarray):
        n = self.n_samples
        xw = np.asarray(self.data @ w).ravel()
        s = float(xw.sum() - self.label_sum)          # 1'(Xw - y)
        rw = float(r @ w)
        gw = (np.asarray(self.data.T @ xw).ravel() + rw * self.col_sums
              - self.data_t_labels + s * r) / n + rw * r + self.lam * w
        grad_r = rw * w + (s / n) * w - self.beta * r
        return gw, -grad_r

    def hessian_blocks(self, w: np.ndarray, r: np.ndarray):
        n = self.n_samples
        d = self.dim_x
        gram = _to_dense(self.data.T @ self.data, d, d)
        s = float(np.asarray(self.data @ w).ravel().sum() - self.label_sum)
        hww = (gram + np.outer(self.col_sums, r) + np.outer(r, self.col_sums)) / n \
            + np.outer(r, r) + self.lam * np.eye(d)
        hwr = (np.outer(self.col_sums, w) + s * np.eye(d)) / n \
            + float(r @ w) * np.eye(d) + np.outer(r, w)
        hrr = np.outer(w, w) - self.beta * np.eye(d)
        return hww, hwr, hrr

    def _fingerprint_parts(self):
        if _is_sparse(self.data):
            m = self.data.tocsr()
            data_parts = (m.data, m.indices.astype(float), m.indptr.astype(float))
        else:
            data_parts = (self.data.ravel(),)
        return data_parts + (self.labels,
                             np.array([self.lam, self.beta, self.radius_w, self.radius_r]))


def build_robust_regression(data, labels, lam: float, beta: float,
                            radius_w: float, radius_r: float) -> RobustRegressionProblem:
    """Validating constructor for one agent's robust regression loss."""
    return RobustRegressionProblem(data, labels, lam, beta, radius_w, radius_r)


def estimate_regression_constants(problem: RobustRegressionProblem) -> ProblemConstants:
    """Closed-form smoothness and strong-convexity estimates.

    Block-wise operator-norm bounds over the feasible balls give
    L = max(L_ww, L_wr, L_rr).  Two strong-convexity conventions are
    reported: ``mu`` = max(lam, beta) and the conservative
    ``mu_safe`` = min(lam, beta).  The similarity field is left at zero;
    it is a property of a pair of agents, not of one loss.
    """
    n = problem.n_samples
    rw, rr = problem.radius_w, problem.radius_r
    gram = _to_dense(problem.data.T @ problem.data, problem.dim_x, problem.dim_x) / n
    col_norm = float(np.linalg.norm(problem.col_sums))
    l_ww = float(np.linalg.eigvalsh(gram)[-1]) + rr ** 2 + 2.0 * rr * col_norm / n + problem.lam
    l_wr = 2.0 * col_norm * rw / n + abs(problem.label_sum) / n + 2.0 * rw * rr
    l_rr = rw ** 2 + problem.beta
    omega = 2.0 * math.hypot(rw, rr)
    return ProblemConstants(
        L=max(l_ww, l_wr, l_rr),
        mu=max(problem.lam, problem.beta),
        delta=0.0,
        omega=omega,
        mu_safe=min(problem.lam, problem.beta),
    )


def estimate_similarity(a: RobustRegressionProblem, b: RobustRegressionProblem) -> float:
    """Dataset-level similarity bound between two regression losses.

    delta_ww compares the normalised Gram matrices plus a column-mean term
    scaled by the noise radius, delta_wr is the column-mean term scaled by
    the weight radius, and the rr blocks are identical by construction.
    """
    if a.dim_x != b.dim_x:
        raise DimensionMismatchError("datasets have different feature dimensions")
    if (a.radius_w, a.radius_r) != (b.radius_w, b.radius_r):
        raise ValueError("similarity estimate requires matching ball radii")
    d = a.dim_x
    gram_diff = _to_dense(a.data.T @ a.data, d, d) / a.n_samples \
        - _to_dense(b.data.T @ b.data, d, d) / b.n_samples
    col_diff = a.col_sums / a.n_samples - b.col_sums / b.n_samples
    col_term = float(np.linalg.norm(col_diff))
    delta_ww = spectral_norm(gram_diff) + 2.0 * col_term * a.radius_r
    delta_wr = 2.0 * col_term * a.radius_w
    return max(delta_ww, delta_wr)


def _sample_feasible(constraint: ConstraintSet, dim: int, rng: np.random.Generator) -> np.ndarray:
    if constraint.is_whole_space:
        return rng.standard_normal(dim)
    direction = rng.standard_normal(dim)
    direction /= max(np.linalg.norm(direction), 1e-30)
    radius = constraint.radius * rng.uniform() ** (1.0 / dim)
    return constraint.center + radius * direction


def _hessian_blocks_or_fd(agent: LocalProblem, x: np.ndarray, y: np.ndarray):
    blocks = agent.hessian_blocks(x, y)
    if blocks is not None:
        return blocks
    dx = agent.dim_x

    def field(v):
        gx, gy = agent.operator_xy(v[:dx], v[dx:])
        return np.concatenate([gx, gy])

    jac = finite_difference_jacobian(field, np.concatenate([x, y]))
    return jac[:dx, :dx], jac[:dx, dx:], -jac[dx:, dx:]


def node_vs_mean_similarity(problem: NetworkProblem, samples: int = 16, seed: int = 0) -> float:
    """Largest spectral-norm gap between local and mean Hessian blocks.

    Exact (single evaluation) when every agent has a constant Hessian;
    otherwise the bound is sampled at ``samples`` random feasible points.
    """
    if all(a.constant_hessian for a in problem.agents):
        points = [(np.zeros(problem.dim_x), np.zeros(problem.dim_y))]
    else:
        rng = np.random.default_rng(seed)
        points = [
            (_sample_feasible(problem.set_x, problem.dim_x, rng),
             _sample_feasible(problem.set_y, problem.dim_y, rng))
            for _ in range(samples)
        ]
    worst = 0.0
    for x, y in points:
        blocks = [_hessian_blocks_or_fd(a, x, y) for a in problem.agents]
        means = [sum(bs[i] for bs in blocks) / problem.n_agents for i in range(3)]
        for bs in blocks:
            for i in range(3):
                worst = max(worst, spectral_norm(bs[i] - means[i]))
    return worst


# ---------------------------------------------------------------------------
# Bilinear chain instance for communication lower-bound experiments
# ---------------------------------------------------------------------------


def _bidiagonal(d: int, even_super: float, odd_super: float) -> np.ndarray:
    """Identity plus a superdiagonal whose entries alternate row by row."""
    m = np.eye(d)
    for i in range(d - 1):
        m[i, i + 1] = even_super if i % 2 == 0 else odd_super
    return m


@dataclass(frozen=True)
class HardInstance:
    """Worst-case bilinear chain problem over a line graph.

    The first ``p`` nodes carry one bidiagonal coupling pattern, the last
    ``p`` nodes carry the complementary pattern plus a linear pull on the
    first coordinate, and the interior nodes are purely quadratic.  Any
    method that only combines local operator outputs and neighbour exchanges
    can activate at most one new coordinate per ``l`` communication rounds.
    """

    n_agents: int
    mu: float
    delta: float
    dim: int
    p: int
    l: int
    roles: Tuple[str, ...]
    a1: np.ndarray
    a2: np.ndarray
    alpha: float
    q: float
    network: NetworkProblem
    topology: Topology

    def ybar(self) -> np.ndarray:
        """Geometric tail approximation of the dual solution."""
        i = np.arange(1, self.dim + 1, dtype=float)
        return self.q ** i / (1.0 - self.q)

    def ybar_error_bound(self) -> float:
        return self.q ** (self.dim + 1) / (self.alpha * (1.0 - self.q))

    def dual_solution(self) -> np.ndarray:
        return hard_instance_dual_solution(self.dim, self.alpha)

    def solution(self):
        """Exact saddle point, from the dual solve plus x-stationarity."""
        from .core import SplitPoint

        y_star = self.dual_solution()
        a = 0.5 * (self.a1 + self.a2)
        x_star = -(self.delta / (64.0 * self.mu)) * (a @ y_star)
        return SplitPoint(x_star, y_star)


def _hard_alpha_q(mu: float, delta: float):
    alpha = (64.0 * mu / delta) ** 2
    q = 0.5 * (2.0 + alpha - math.sqrt(alpha * alpha + 4.0 * alpha))
    return alpha, q


def build_hard_instance(n_agents: int, mu: float, delta: float, dim: int) -> HardInstance:
    """Distribute the bilinear chain construction over a line graph."""
    if n_agents < 3:
        raise ValueError("the construction needs at least 3 agents")
    if not (mu > 0 and delta > 0):
        raise ValueError("mu and delta must be positive")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    p = math.ceil(n_agents / 32)
    a1 = _bidiagonal(dim, 0.0, -2.0)
    a2 = _bidiagonal(dim, -2.0, 0.0)
    quad = (p / n_agents) * 16.0 * mu       # coefficient of ||x||^2 and -||y||^2
    pq = 2.0 * quad                          # the corresponding Hessian scale
    pull = delta ** 2 / (128.0 * mu)
    e1 = np.zeros(dim)
    e1[0] = 1.0

    c1 = sp.csr_matrix((delta / 4.0) * a1)
    c2 = sp.csr_matrix((delta / 4.0) * a2)
    c3 = sp.csr_matrix((dim, dim))
    roles = []
    agents = []
    for m in range(n_agents):
        if m >= n_agents - p:
            roles.append("f1")
            agents.append(QuadraticSaddleProblem(pq, pq, c1, b=pull * e1))
        elif m < p:
            roles.append("f2")
            agents.append(QuadraticSaddleProblem(pq, pq, c2))
        else:
            roles.append("f3")
            agents.append(QuadraticSaddleProblem(pq, pq, c3))
    network = NetworkProblem(agents, ConstraintSet.whole_space(), ConstraintSet.whole_space())
    topology = build_topology("line", n_agents)
    l = (n_agents - p) - (p - 1)            # edge distance between the two end groups
    alpha, q = _hard_alpha_q(mu, delta)
    return HardInstance(
        n_agents=n_agents, mu=mu, delta=delta, dim=dim, p=p, l=l,
        roles=tuple(roles), a1=a1, a2=a2, alpha=alpha, q=q,
        network=network, topology=topology,
    )


def hard_instance_min_dimension(comm_rounds: int, mu: float, delta: float) -> int:
    """Smallest block dimension for which the decay floor argument is valid."""
    if comm_rounds < 1:
        raise ValueError("comm_rounds must be at least 1")
    alpha, q = _hard_alpha_q(mu, delta)
    arg = alpha / (4.0 * math.sqrt(2.0))
    log_term = 2.0 * math.log(arg) / math.log(q)
    return max(math.ceil(log_term), 2 * comm_rounds, 2)


def approx_solution_ybar(dim: int, mu: float, delta: float):
    """Geometric approximation of the dual solution and its error bound."""
    alpha, q = _hard_alpha_q(mu, delta)
    i = np.arange(1, dim + 1, dtype=float)
    ybar = q ** i / (1.0 - q)
    bound = q ** (dim + 1) / (alpha * (1.0 - q))
    return ybar, bound


def hard_instance_dual_solution(dim: int, alpha: float) -> np.ndarray:
    """Solve (A'A + alpha I) y = e1 with the tridiagonal A'A of the chain."""
    a = _bidiagonal(dim, -1.0, -1.0)       # the averaged coupling pattern
    lhs = a.T @ a + alpha * np.eye(dim)
    rhs = np.zeros(dim)
    rhs[0] = 1.0
    return np.linalg.solve(lhs, rhs)


def ybar_approximation_gap(dim: int, alpha, dps: int = 60):
    """||ybar - y*|| and its theoretical bound, in extended precision.

    The bound decays like q^(d+1) and drops below double-precision
    resolution already for moderate dimensions, so the comparison is done
    with mpmath.  Returns a pair of mpf values (gap, bound).
    """
    with mpmath.workdps(dps):
        alpha = mpmath.mpf(alpha)
        q = (2 + alpha - mpmath.sqrt(alpha * alpha + 4 * alpha)) / 2
        # Thomas solve of the tridiagonal system (A'A + alpha I) y = e1,
        # diagonal (1+alpha, 2+alpha, ..., 2+alpha), off-diagonals -1.
        diag = [1 + alpha] + [2 + alpha] * (dim - 1)
        rhs = [mpmath.mpf(1)] + [mpmath.mpf(0)] * (dim - 1)
        cprime = [mpmath.mpf(0)] * dim
        dprime = [mpmath.mpf(0)] * dim
        cprime[0] = -1 / diag[0]
        dprime[0] = rhs[0] / diag[0]
        for i in range(1, dim):
            denom = diag[i] + cprime[i - 1]
            if i < dim - 1:
                cprime[i] = -1 / denom
            dprime[i] = (rhs[i] + dprime[i - 1]) / denom
        y = [mpmath.mpf(0)] * dim
        y[dim - 1] = dprime[dim - 1]
        for i in range(dim - 2, -1, -1):
            y[i] = dprime[i] - cprime[i] * y[i + 1]
        gap_sq = mpmath.mpf(0)
        for i in range(dim):
            diff = q ** (i + 1) / (1 - q) - y[i]
            gap_sq += diff * diff
        gap = mpmath.sqrt(gap_sq)
        bound = q ** (dim + 1) / (alpha * (1 - q))
        return gap, bound


# ---------------------------------------------------------------------------
# Controlled quadratic networks for solver tests
# ---------------------------------------------------------------------------


def build_quadratic_network(n_agents: int, dim: int, mu: float, smoothness: float,
                            coupling: float, heterogeneity: float,
                            seed: int = 0) -> NetworkProblem:
    """Random quadratic saddle network with controlled constants.

    All agents share the diagonal curvature blocks (spectrum in
    [mu, smoothness]), so the strong-monotonicity modulus of the mean
    operator is exactly ``mu``.  The coupling blocks differ across agents
    by ``heterogeneity``-scaled perturbations, which is the only source of
    dissimilarity.
    """
    rng = np.random.default_rng(seed)

    def spd():
        basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eigs = rng.uniform(mu, smoothness, size=dim)
        eigs[0] = mu
        return (basis * eigs) @ basis.T

    p = spd()
    q = spd()
    c_base = coupling * rng.standard_normal((dim, dim)) / math.sqrt(dim)
    agents = []
    for _ in range(n_agents):
        c = c_base + heterogeneity * rng.standard_normal((dim, dim)) / math.sqrt(dim)
        a = rng.standard_normal(dim)
        b = rng.standard_normal(dim)
        agents.append(QuadraticSaddleProblem(p, q, c, a, b))
    return NetworkProblem(agents, ConstraintSet.whole_space(), ConstraintSet.whole_space())


def measure_quadratic_constants(problem: NetworkProblem) -> ProblemConstants:
    """Exact L, mu and delta for constant-Hessian networks."""
    if not all(a.constant_hessian for a in problem.agents):
        raise ValueError("exact constants need constant Hessians")
    blocks = [a.hessian_blocks(None, None) for a in problem.agents]
    mean_xx = sum(b[0] for b in blocks) / problem.n_agents
    mean_yy = sum(b[2] for b in blocks) / problem.n_agents
    mu = min(float(np.linalg.eigvalsh(mean_xx)[0]),
             float(np.linalg.eigvalsh(-mean_yy)[0]))
    big_l = max(
        spectral_norm(assemble_operator_jacobian(*b)) for b in blocks
    )
    delta = node_vs_mean_similarity(problem)
    return ProblemConstants(L=big_l, mu=max(mu, 0.0), delta=delta)

"""Problem-agnostic domain types for saddle-point problems over networks.

A saddle-point problem min_x max_y f(x, y) is handled through the operator
F(z) = (grad_x f, -grad_y f) evaluated at points z = (x, y).  This module
defines the point type, Euclidean constraint sets with closed-form
projections, the abstract local-loss interface, and the network-of-agents
container.  Everything here is immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SplitPoint",
    "ConstraintSet",
    "ProblemConstants",
    "LocalProblem",
    "NetworkProblem",
    "DimensionMismatchError",
    "DomainError",
    "WHOLE_SPACE",
    "EUCLIDEAN_BALL",
    "apply_local_operator",
    "apply_mean_operator",
    "project",
    "finite_difference_jacobian",
    "assemble_operator_jacobian",
    "spectral_norm",
]

WHOLE_SPACE = "whole-space"
EUCLIDEAN_BALL = "euclidean-ball"


class DimensionMismatchError(ValueError):
    """Vector dimensions do not match the problem instance."""


class DomainError(ValueError):
    """Operation undefined for this constraint set (e.g. diameter of R^d)."""


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SplitPoint:
    """A primal-dual pair z = (x, y) with fixed block dimensions.

    Arrays are copied on construction, checked for finiteness and marked
    read-only.  Arithmetic returns new instances.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _readonly(self.x)
        y = _readonly(self.y)
        if x.ndim != 1 or y.ndim != 1:
            raise DimensionMismatchError("x and y must be one-dimensional")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("SplitPoint entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dim_x(self) -> int:
        return self.x.shape[0]

    @property
    def dim_y(self) -> int:
        return self.y.shape[0]

    def __add__(self, other: "SplitPoint") -> "SplitPoint":
        return SplitPoint(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "SplitPoint") -> "SplitPoint":
        return SplitPoint(self.x - other.x, self.y - other.y)

    def __mul__(self, c: float) -> "SplitPoint":
        return SplitPoint(self.x * c, self.y * c)

    __rmul__ = __mul__

    def dot(self, other: "SplitPoint") -> float:
        return float(self.x @ other.x + self.y @ other.y)

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @staticmethod
    def from_array(v: np.ndarray, dim_x: int) -> "SplitPoint":
        return SplitPoint(v[:dim_x], v[dim_x:])

    @staticmethod
    def zeros(dim_x: int, dim_y: int) -> "SplitPoint":
        return SplitPoint(np.zeros(dim_x), np.zeros(dim_y))


@dataclass(frozen=True)
class ConstraintSet:
    """A closed convex set with a closed-form Euclidean projection.

    Two kinds are supported: the whole space and a Euclidean ball
    ``{v : ||v - center|| <= radius}``.
    """

    kind: str
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind == WHOLE_SPACE:
            if self.center is not None or self.radius is not None:
                raise ValueError("whole-space set takes no center or radius")
        elif self.kind == EUCLIDEAN_BALL:
            if self.center is None or self.radius is None:
                raise ValueError("ball set needs a center and a radius")
            if not self.radius > 0:
                raise ValueError("ball radius must be positive")
            object.__setattr__(self, "center", _readonly(self.center))
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise ValueError(f"unknown constraint-set kind {self.kind!r}")

    @staticmethod
    def whole_space() -> "ConstraintSet":
        return ConstraintSet(WHOLE_SPACE)

    @staticmethod
    def ball(center, radius: float) -> "ConstraintSet":
        return ConstraintSet(EUCLIDEAN_BALL, np.asarray(center, dtype=float), radius)

    @property
    def is_whole_space(self) -> bool:
        return self.kind == WHOLE_SPACE

    def diameter(self) -> float:
        if self.is_whole_space:
            raise DomainError("diameter of the whole space is undefined")
        return 2.0 * self.radius

    def project(self, v: np.ndarray) -> np.ndarray:
        """Closest point of the set.  Total on finite inputs."""
        v = np.asarray(v, dtype=float)
        if self.is_whole_space:
            return v
        shifted = v - self.center
        dist = np.linalg.norm(shifted)
        if dist <= self.radius:
            return v
        return self.center + shifted * (self.radius / dist)

    def contains(self, v: np.ndarray, tol: float = 1e-12) -> bool:
        if self.is_whole_space:
            return True
        return float(np.linalg.norm(np.asarray(v) - self.center)) <= self.radius + tol


def project(constraint: ConstraintSet, v: np.ndarray) -> np.ndarray:
    return constraint.project(v)


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness / monotonicity / similarity constants of a network problem.

    ``L`` is a Lipschitz constant valid for every local operator, ``mu`` the
    strong convexity-concavity modulus of the mean loss, ``delta`` a bound on
    the spectral-norm distance between local and mean Hessian blocks.  ``G``
    bounds the local operator norms at the solution (convex-concave mode only)
    and ``omega`` is the diameter of the feasible set when it is compact.
    ``mu_safe`` carries an alternative, more conservative modulus when the
    estimation procedure reports two conventions.
    """

    L: float
    mu: float
    delta: float
    G: Optional[float] = None
    omega: Optional[float] = None
    mu_safe: Optional[float] = None

    def __post_init__(self):
        slack = 1e-9 * max(1.0, abs(self.L))
        if not (self.L + slack >= self.delta >= 0.0):
            raise ValueError(f"need L >= delta >= 0, got L={self.L}, delta={self.delta}")
        if not (self.L + slack >= self.mu >= 0.0):
            raise ValueError(f"need L >= mu >= 0, got L={self.L}, mu={self.mu}")


class LocalProblem:
    """One agent's loss, accessed through its saddle operator.

    Subclasses provide ``value`` and ``operator_xy`` (the pair
    ``(grad_x f, -grad_y f)`` evaluated on raw arrays).  Problems with
    analytic second derivatives may expose them through ``hessian_blocks``;
    constant-Hessian (quadratic/bilinear) problems should set
    ``constant_hessian`` and then must match their own operator exactly.
    Implementations must be deterministic and free of internal mutation.
    """

    dim_x: int
    dim_y: int
    constant_hessian: bool = False

    def value(self, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def operator_xy(self, x: np.ndarray, y: np.ndarray):
        """Return ``(grad_x f(x, y), -grad_y f(x, y))`` as two arrays."""
        raise NotImplementedError

    def operator(self, z: SplitPoint) -> SplitPoint:
        gx, gy = self.operator_xy(z.x, z.y)
        return SplitPoint(gx, gy)

    def hessian_blocks(self, x: np.ndarray, y: np.ndarray):
        """Return ``(d2f/dxx, d2f/dxy, d2f/dyy)`` or None when not analytic."""
        return None

    def fingerprint(self) -> bytes:
        """Stable digest of the problem data, used for result caching."""
        h = hashlib.sha256()
        h.update(type(self).__name__.encode())
        for part in self._fingerprint_parts():
            h.update(np.ascontiguousarray(np.atleast_1d(np.asarray(part, dtype=float))).tobytes())
        return h.digest()

    def _fingerprint_parts(self) -> Sequence:
        raise NotImplementedError


class NetworkProblem:
    """An ordered collection of agents sharing dimensions and constraints."""

    def __init__(self, agents: Sequence[LocalProblem], set_x: ConstraintSet, set_y: ConstraintSet):
        agents = tuple(agents)
        if len(agents) < 1:
            raise ValueError("a network problem needs at least one agent")
        dx, dy = agents[0].dim_x, agents[0].dim_y
        for a in agents:
            if (a.dim_x, a.dim_y) != (dx, dy):
                raise DimensionMismatchError("all agents must share block dimensions")
        self.agents = agents
        self.set_x = set_x
        self.set_y = set_y
        self.dim_x = dx
        self.dim_y = dy

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def _check(self, z: SplitPoint):
        if (z.dim_x, z.dim_y) != (self.dim_x, self.dim_y):
            raise DimensionMismatchError(
                f"point has blocks ({z.dim_x}, {z.dim_y}), problem expects "
                f"({self.dim_x}, {self.dim_y})"
            )

    def local_operator(self, m: int, z: SplitPoint) -> SplitPoint:
        if not 0 <= m < self.n_agents:
            raise IndexError(f"agent index {m} out of range [0, {self.n_agents})")
        self._check(z)
        return self.agents[m].operator(z)

    def mean_operator(self, z: SplitPoint) -> SplitPoint:
        self._check(z)
        gx, gy = self.mean_operator_xy(z.x, z.y)
        return SplitPoint(gx, gy)

    def mean_operator_xy(self, x: np.ndarray, y: np.ndarray):
        gx = np.zeros(self.dim_x)
        gy = np.zeros(self.dim_y)
        for a in self.agents:
            ax, ay = a.operator_xy(x, y)
            gx += ax
            gy += ay
        gx /= self.n_agents
        gy /= self.n_agents
        return gx, gy

    def mean_value(self, x: np.ndarray, y: np.ndarray) -> float:
        return sum(a.value(x, y) for a in self.agents) / self.n_agents

    def project(self, z: SplitPoint) -> SplitPoint:
        """Project the two blocks independently (Z = X x Y)."""
        return SplitPoint(self.set_x.project(z.x), self.set_y.project(z.y))

    def project_xy(self, x: np.ndarray, y: np.ndarray):
        return self.set_x.project(x), self.set_y.project(y)

    def domain_diameter(self) -> float:
        """Diameter of X x Y; raises DomainError on unbounded sets."""
        dx = self.set_x.diameter()
        dy = self.set_y.diameter()
        return float(np.hypot(dx, dy))

    def initial_point(self) -> SplitPoint:
        """Deterministic feasible start: ball centers, zero on the whole space."""
        x0 = np.zeros(self.dim_x) if self.set_x.is_whole_space else self.set_x.center.copy()
        y0 = np.zeros(self.dim_y) if self.set_y.is_whole_space else self.set_y.center.copy()
        return SplitPoint(x0, y0)

    def fingerprint(self) -> bytes:
        h = hashlib.sha256()
        for a in self.agents:
            h.update(a.fingerprint())
        for s in (self.set_x, self.set_y):
            h.update(s.kind.encode())
            if not s.is_whole_space:
                h.update(np.ascontiguousarray(s.center).tobytes())
                h.update(np.float64(s.radius).tobytes())
        return h.digest()


def apply_local_operator(problem: NetworkProblem, m: int, z: SplitPoint) -> SplitPoint:
    """Evaluate agent ``m``'s operator (grad_x f_m, -grad_y f_m) at z."""
    return problem.local_operator(m, z)


def apply_mean_operator(problem: NetworkProblem, z: SplitPoint) -> SplitPoint:
    """Evaluate the arithmetic mean of all local operators at z."""
    return problem.mean_operator(z)


def finite_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], v: np.ndarray,
                               eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector field, column by column."""
    v = np.asarray(v, dtype=float)
    f0 = np.asarray(func(v))
    jac = np.empty((f0.shape[0], v.shape[0]))
    for j in range(v.shape[0]):
        step = np.zeros_like(v)
        step[j] = eps
        jac[:, j] = (np.asarray(func(v + step)) - np.asarray(func(v - step))) / (2 * eps)
    return jac


def assemble_operator_jacobian(hxx: np.ndarray, hxy: np.ndarray, hyy: np.ndarray) -> np.ndarray:
    """Jacobian of F = (grad_x f, -grad_y f) from the Hessian blocks of f."""
    top = np.hstack([hxx, hxy])
    bottom = np.hstack([-hxy.T, -hyy])
    return np.vstack([top, bottom])


def spectral_norm(mat) -> float:
    """Largest singular value; exact symmetric path when applicable."""
    m = np.asarray(mat, dtype=float)
    if m.shape[0] == m.shape[1] and np.allclose(m, m.T, atol=1e-13, rtol=0.0):
        return float(np.max(np.abs(np.linalg.eigvalsh(m))))
    return float(np.linalg.norm(m, 2))

"""Abstract control system interface, parameter sets, and trajectory rollout.

A ControlSystem bundles per-step dynamics, policy, and cost functions with
their analytic partial derivatives. Disturbance realizations are drawn once
at construction from a seeded generator, so an instance is a deterministic
function of (t, x, u) thereafter; the same instance can therefore be
resimulated from step 0 with a different parameter, which is what the
oracle module relies on.
"""

from __future__ import annotations

import abc
import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, StateBlowup

DEFAULT_BLOWUP_CAP = 1e8


# ---------------------------------------------------------------------------
# Parameter sets


class ParameterSet(abc.ABC):
    """Closed convex subset of R^d with a Euclidean projection."""

    dim: int

    @abc.abstractmethod
    def project(self, theta: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a point of the set (uniform where that is well-defined)."""

    def contains(self, theta: np.ndarray, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.linalg.norm(self.project(theta) - theta) <= tol)

    def _check_dim(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionMismatch(
                f"parameter has shape {theta.shape}, set dimension is {self.dim}"
            )
        return theta


class WholeSpace(ParameterSet):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def project(self, theta):
        return self._check_dim(theta).copy()

    def sample(self, rng):
        return rng.standard_normal(self.dim)

    def __repr__(self):
        return f"WholeSpace({self.dim})"


class Box(ParameterSet):
    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box bounds must satisfy lo <= hi elementwise")
        self.dim = self.lo.size

    def project(self, theta):
        return np.clip(self._check_dim(theta), self.lo, self.hi)

    def sample(self, rng):
        return rng.uniform(self.lo, self.hi)

    def __repr__(self):
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"


class Ball(ParameterSet):
    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        self.dim = self.center.size

    def project(self, theta):
        theta = self._check_dim(theta)
        delta = theta - self.center
        norm = np.linalg.norm(delta)
        if norm <= self.radius:
            return theta.copy()
        return self.center + delta * (self.radius / norm)

    def sample(self, rng):
        direction = rng.standard_normal(self.dim)
        direction /= max(np.linalg.norm(direction), 1e-300)
        r = self.radius * rng.uniform() ** (1.0 / self.dim)
        return self.center + r * direction

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


def project(pset: ParameterSet, theta: np.ndarray) -> np.ndarray:
    """Euclidean projection of theta onto the set."""
    return pset.project(theta)


# ---------------------------------------------------------------------------
# Jacobians and trajectories


@dataclass
class StepJacobians:
    """All six partial-derivative blocks at a visited (x_t, u_t, theta_t).

    Gradient rows of the scalar cost are stored as 1-D arrays: df_dx has
    shape (n,) and df_du shape (m,).
    """

    dg_dx: np.ndarray  # (n, n)
    dg_du: np.ndarray  # (n, m)
    dpi_dx: np.ndarray  # (m, n)
    dpi_dtheta: np.ndarray  # (m, d)
    df_dx: np.ndarray  # (n,)
    df_du: np.ndarray  # (m,)

    def closed_loop(self) -> np.ndarray:
        """d x_{t+1} / d x_t along the closed loop: dg_dx + dg_du @ dpi_dx."""
        return self.dg_dx + self.dg_du @ self.dpi_dx

    def dcost_dx_closed(self) -> np.ndarray:
        """d c_t / d x_t along the closed loop: df_dx + df_du @ dpi_dx."""
        return self.df_dx + self.df_du @ self.dpi_dx

    def validate(self, n: int, m: int, d: int) -> None:
        expected = {
            "dg_dx": (n, n),
            "dg_du": (n, m),
            "dpi_dx": (m, n),
            "dpi_dtheta": (m, d),
            "df_dx": (n,),
            "df_du": (m,),
        }
        for name, shape in expected.items():
            block = getattr(self, name)
            if block.shape != shape:
                raise DimensionMismatch(f"{name} has shape {block.shape}, expected {shape}")
            if not np.all(np.isfinite(block)):
                raise ValueError(f"{name} contains non-finite entries")


@dataclass
class Trajectory:
    """Time-indexed record of a closed-loop run of length T.

    states[t], actions[t], thetas[t], costs[t] describe step t; final_state
    is x_T. jacobians and grads are filled only when requested/recorded.
    """

    states: np.ndarray  # (T, n)
    actions: np.ndarray  # (T, m)
    thetas: np.ndarray  # (T, d)
    costs: np.ndarray  # (T,)
    final_state: np.ndarray  # (n,)
    jacobians: list[StepJacobians] | None = None
    grads: np.ndarray | None = None  # (T, d), recorded by the online runners
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.costs.shape[0]

    @property
    def total_cost(self) -> float:
        return float(np.sum(self.costs))


# ---------------------------------------------------------------------------
# Control system interface


class ControlSystem(abc.ABC):
    """The (dynamics, cost, policy) triple queried one step at a time.

    Implementations expose dims (n, m, d), the initial state x0, the
    parameter set, per-step evaluations, and the six Jacobian blocks at any
    visited point. Evaluating twice at identical (t, x, theta) must return
    identical results: all randomness is fixed at construction.
    """

    n: int
    m: int
    d: int
    x0: np.ndarray
    theta_set: ParameterSet

    @abc.abstractmethod
    def policy(self, t: int, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def dynamics(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def cost(self, t: int, x: np.ndarray, u: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def jacobians(self, t: int, x: np.ndarray, theta: np.ndarray) -> StepJacobians:
        ...

    def clone(self) -> "ControlSystem":
        """Independent copy sharing the same frozen disturbance realization."""
        return copy.deepcopy(self)

    def step(self, t: int, x: np.ndarray, theta: np.ndarray):
        """Evaluate one closed-loop step: returns (u, cost, next_state)."""
        u = self.policy(t, x, theta)
        c = self.cost(t, x, u)
        x_next = self.dynamics(t, x, u)
        return u, c, x_next


# ---------------------------------------------------------------------------
# Rollout and Jacobian validation


def rollout(
    system: ControlSystem,
    theta_seq,
    x0: np.ndarray | None = None,
    T: int | None = None,
    with_jacobians: bool = False,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> Trajectory:
    """Run the closed loop under a given parameter sequence.

    theta_seq may be a (T, d) array, a list of vectors, or a single (d,)
    vector held constant. Raises StateBlowup once the state norm exceeds
    blowup_cap, which is the loud instability signal.
    """
    theta_seq = np.asarray(theta_seq, dtype=float)
    if theta_seq.ndim == 1:
        if T is None:
            raise ValueError("T is required when a single theta is given")
        theta_seq = np.tile(theta_seq, (T, 1))
    if T is None:
        T = theta_seq.shape[0]
    if theta_seq.shape[0] < T or theta_seq.shape[1] != system.d:
        raise DimensionMismatch(
            f"theta sequence has shape {theta_seq.shape}, need at least ({T}, {system.d})"
        )

    x = np.array(system.x0 if x0 is None else x0, dtype=float)
    states = np.empty((T, system.n))
    actions = np.empty((T, system.m))
    costs = np.empty(T)
    jacs: list[StepJacobians] | None = [] if with_jacobians else None

    for t in range(T):
        if np.linalg.norm(x) > blowup_cap:
            raise StateBlowup(t, float(np.linalg.norm(x)), blowup_cap)
        theta = theta_seq[t]
        u = system.policy(t, x, theta)
        states[t] = x
        actions[t] = u
        costs[t] = system.cost(t, x, u)
        if jacs is not None:
            jacs.append(system.jacobians(t, x, theta))
        x = system.dynamics(t, x, u)

    return Trajectory(
        states=states,
        actions=actions,
        thetas=theta_seq[:T].copy(),
        costs=costs,
        final_state=x,
        jacobians=jacs,
    )


@dataclass
class JacobianReport:
    """Per-block relative errors of analytic vs central-difference Jacobians."""

    errors: dict[str, float]
    rel_tol: float

    @property
    def passed(self) -> bool:
        return all(e <= self.rel_tol for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    def failing_blocks(self) -> list[str]:
        return [k for k, v in self.errors.items() if v > self.rel_tol]


def check_jacobians(
    system: ControlSystem,
    t: int,
    x: np.ndarray,
    theta: np.ndarray,
    h: float = 1e-6,
    rel_tol: float = 1e-5,
) -> JacobianReport:
    """Validate the analytic Jacobian blocks by central finite differences.

    Relative error per block is |analytic - fd| / (1 + |analytic|). Very
    small h (around 1e-13) is dominated by cancellation and will report
    degraded precision; that is a property of finite differences, not of
    the analytic derivatives.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    jac = system.jacobians(t, x, theta)
    jac.validate(system.n, system.m, system.d)
    u = system.policy(t, x, theta)

    def central(f, z0, out_shape):
        cols = []
        for i in range(z0.size):
            zp = z0.copy()
            zm = z0.copy()
            zp[i] += h
            zm[i] -= h
            cols.append((np.asarray(f(zp), dtype=float) - np.asarray(f(zm), dtype=float)) / (2 * h))
        fd = np.stack(cols, axis=-1)
        return fd.reshape(out_shape)

    fd_blocks = {
        "dg_dx": central(lambda z: system.dynamics(t, z, u), x, (system.n, system.n)),
        "dg_du": central(lambda z: system.dynamics(t, x, z), u, (system.n, system.m)),
        "dpi_dx": central(lambda z: system.policy(t, z, theta), x, (system.m, system.n)),
        "dpi_dtheta": central(lambda z: system.policy(t, x, z), theta, (system.m, system.d)),
        "df_dx": central(lambda z: system.cost(t, z, u), x, (system.n,)),
        "df_du": central(lambda z: system.cost(t, x, z), u, (system.m,)),
    }

    errors = {}
    for name, fd in fd_blocks.items():
        analytic = getattr(jac, name)
        errors[name] = float(
            np.linalg.norm(analytic - fd) / (1.0 + np.linalg.norm(analytic))
        )
    return JacobianReport(errors=errors, rel_tol=rel_tol)

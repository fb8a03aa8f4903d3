"""Streaming gradient-based policy selection with an O(B)-memory buffer.

The selector maintains a ring of state-sensitivity matrices
M_b = dx_t / dtheta_{t-b} for b = 1..B-1. One closed-loop Jacobian per step
updates the whole ring, so the per-step cost gradient truncated to the last
B parameters is assembled from a single policy evaluation plus O(B) small
matrix products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteGradient, StateBlowup
from .system import (
    ControlSystem,
    ParameterSet,
    StepJacobians,
    Trajectory,
    DEFAULT_BLOWUP_CAP,
)

DEFAULT_BUFFER_LENGTH = 32


def default_buffer_length(T: int, rho_hat: float | None = None) -> int:
    """Buffer length ceil(0.5 ln T / ln(1/rho_hat)), or 32 without an estimate."""
    if rho_hat is None:
        return DEFAULT_BUFFER_LENGTH
    if not 0.0 < rho_hat < 1.0:
        raise ValueError("rho_hat must lie in (0, 1)")
    return max(1, math.ceil(0.5 * math.log(T) / math.log(1.0 / rho_hat)))


@dataclass
class GapsConfig:
    """Learning rate, buffer length, initial parameter, and constraint set."""

    eta: float
    B: int
    theta0: np.ndarray
    set: ParameterSet

    def __post_init__(self):
        self.theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.B < 1:
            raise ValueError("buffer length B must be >= 1")
        if self.theta0.shape != (self.set.dim,):
            raise DimensionMismatch(
                f"theta0 has shape {self.theta0.shape}, set dimension is {self.set.dim}"
            )


@dataclass
class GapsState:
    """Current parameter plus the ring of sensitivities dx_t/dtheta_{t-b}.

    buffer[b-1] holds the (n, d) matrix for lag b; its length is
    min(B - 1, t).
    """

    t: int
    theta: np.ndarray
    buffer: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def initial(cls, config: GapsConfig) -> "GapsState":
        return cls(t=0, theta=config.theta0.copy(), buffer=[])


def gaps_step(
    state: GapsState, jac: StepJacobians, config: GapsConfig
) -> tuple[np.ndarray, GapsState]:
    """One online update from the Jacobians of the step just taken.

    Returns (G_t, next_state): the truncated cost gradient with respect to
    the last min(B, t+1) parameters, and the advanced state whose theta is
    the projected gradient step. Projection is applied to the parameter
    only; the sensitivity ring is never corrected for it, since the stored
    partials treat past parameters as free variables along the visited
    sequence.
    """
    d = config.set.dim
    if state.theta.shape != (d,):
        raise DimensionMismatch(f"theta has shape {state.theta.shape}, expected ({d},)")
    if len(state.buffer) != min(config.B - 1, state.t):
        raise DimensionMismatch(
            f"buffer holds {len(state.buffer)} entries at t={state.t}, "
            f"expected {min(config.B - 1, state.t)}"
        )

    # Gradient: the lag-0 term acts through the policy directly; every older
    # lag acts only through the current state.
    grad = jac.df_du @ jac.dpi_dtheta
    if state.buffer:
        dc_dx = jac.dcost_dx_closed()
        grad = grad + dc_dx @ sum(state.buffer)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"gradient at t={state.t} contains NaN/Inf")

    # Ring update: push the new lag-1 sensitivity, age the rest, drop lag B-1.
    new_buffer: list[np.ndarray] = []
    if config.B > 1:
        A_cl = jac.closed_loop()
        new_buffer.append(jac.dg_du @ jac.dpi_dtheta)
        for M in state.buffer[: config.B - 2]:
            new_buffer.append(A_cl @ M)

    theta_next = config.set.project(state.theta - config.eta * grad)
    return grad, GapsState(t=state.t + 1, theta=theta_next, buffer=new_buffer)


def run_gaps(
    system: ControlSystem,
    config: GapsConfig,
    T: int,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> Trajectory:
    """Run the closed loop for T steps, adapting theta online.

    Each step observes x_t, acts with the current theta_t, records the stage
    cost, and feeds the visited-point Jacobians to the buffer update. The
    returned trajectory records theta_t and G_t per step.
    """
    state = GapsState.initial(config)
    x = np.array(system.x0, dtype=float)

    states = np.empty((T, system.n))
    actions = np.empty((T, system.m))
    thetas = np.empty((T, system.d))
    costs = np.empty(T)
    grads = np.empty((T, system.d))

    for t in range(T):
        if np.linalg.norm(x) > blowup_cap:
            raise StateBlowup(t, float(np.linalg.norm(x)), blowup_cap)
        theta = state.theta
        u = system.policy(t, x, theta)
        states[t] = x
        actions[t] = u
        thetas[t] = theta
        costs[t] = system.cost(t, x, u)
        jac = system.jacobians(t, x, theta)
        grads[t], state = gaps_step(state, jac, config)
        x = system.dynamics(t, x, u)

    return Trajectory(
        states=states,
        actions=actions,
        thetas=thetas,
        costs=costs,
        final_state=x,
        grads=grads,
    )

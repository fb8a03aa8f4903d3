"""Exact surrogate costs and gradients by resimulation.

The surrogate cost of a parameter at time t is the stage cost the system
would have incurred at t had that parameter been used from step 0, under the
same frozen disturbance realization. These O(t)-per-query references are
what the streaming selector is validated against.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import GapsConfig
from .errors import StateBlowup
from .system import ControlSystem, Trajectory, DEFAULT_BLOWUP_CAP


# Interval for instability checks inside the O(t) resimulation loops. The
# bounded per-step growth of any sane system keeps intermediate values finite
# between checks; a final finiteness check backstops pathological cases.
_CHECK_EVERY = 16


def _check_state(x: np.ndarray, tau: int, blowup_cap: float) -> None:
    norm = float(np.linalg.norm(x))
    if norm > blowup_cap or not np.isfinite(norm):
        raise StateBlowup(tau, norm, blowup_cap)


def _resimulate(system: ControlSystem, theta: np.ndarray, t: int, blowup_cap: float):
    """States x_hat_0..x_hat_t of the constant-theta rollout (same code path
    as the streaming loop: policy, cost, dynamics queried step by step)."""
    x = np.array(system.x0, dtype=float)
    for tau in range(t):
        if tau % _CHECK_EVERY == 0:
            _check_state(x, tau, blowup_cap)
        u = system.policy(tau, x, theta)
        x = system.dynamics(tau, x, u)
    _check_state(x, t, blowup_cap)
    return x


def surrogate_cost(
    system: ControlSystem,
    theta: np.ndarray,
    t: int,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> float:
    """Stage cost at time t of the constant-theta trajectory from x0."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = _resimulate(system, theta, t, blowup_cap)
    u = system.policy(t, x, theta)
    return float(system.cost(t, x, u))


def ideal_gradient(
    system: ControlSystem,
    theta: np.ndarray,
    t: int,
    mode: str = "chain",
    fd_step: float | None = None,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> np.ndarray:
    """Exact gradient of the surrogate cost at time t.

    "chain" runs the full-length forward sensitivity recursion along the
    constant-theta rollout (the same recursion as the streaming buffer with
    B = t + 1 and theta frozen). "finite_diff" central-differences the
    surrogate cost with step 1e-6 * (1 + |theta|); it needs theta in the
    interior of the set.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if mode == "chain":
        x = np.array(system.x0, dtype=float)
        S = np.zeros((system.n, system.d))  # dx_tau/dtheta, all lags accumulated
        for tau in range(t):
            if tau % _CHECK_EVERY == 0:
                _check_state(x, tau, blowup_cap)
            jac = system.jacobians(tau, x, theta)
            u = system.policy(tau, x, theta)
            S = jac.closed_loop() @ S + jac.dg_du @ jac.dpi_dtheta
            x = system.dynamics(tau, x, u)
        _check_state(x, t, blowup_cap)
        jac = system.jacobians(t, x, theta)
        return jac.df_du @ jac.dpi_dtheta + jac.dcost_dx_closed() @ S
    if mode == "finite_diff":
        h = fd_step if fd_step is not None else 1e-6 * (1.0 + np.linalg.norm(theta))
        grad = np.empty(system.d)
        for i in range(system.d):
            tp = theta.copy()
            tm = theta.copy()
            tp[i] += h
            tm[i] -= h
            grad[i] = (
                surrogate_cost(system, tp, t, blowup_cap)
                - surrogate_cost(system, tm, t, blowup_cap)
            ) / (2 * h)
        return grad
    raise ValueError(f"unknown mode {mode!r}, expected 'chain' or 'finite_diff'")


def run_ideal_ogd(
    system: ControlSystem,
    config: GapsConfig,
    T: int,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> Trajectory:
    """Projected gradient descent on the exact surrogate gradients.

    Identical closed loop to the streaming runner, but each update uses the
    O(t) resimulated gradient at the current parameter, so the total cost is
    O(T^2): a desk-scale reference, not a deployable algorithm.
    """
    theta = config.theta0.copy()
    x = np.array(system.x0, dtype=float)
    states = np.empty((T, system.n))
    actions = np.empty((T, system.m))
    thetas = np.empty((T, system.d))
    costs = np.empty(T)
    grads = np.empty((T, system.d))

    for t in range(T):
        if np.linalg.norm(x) > blowup_cap:
            raise StateBlowup(t, float(np.linalg.norm(x)), blowup_cap)
        u = system.policy(t, x, theta)
        states[t] = x
        actions[t] = u
        thetas[t] = theta
        costs[t] = system.cost(t, x, u)
        grads[t] = ideal_gradient(system, theta, t, mode="chain", blowup_cap=blowup_cap)
        theta = config.set.project(theta - config.eta * grads[t])
        x = system.dynamics(t, x, u)

    return Trajectory(
        states=states,
        actions=actions,
        thetas=thetas,
        costs=costs,
        final_state=x,
        grads=grads,
    )


class FiniteMemoryGradient(NamedTuple):
    grad: np.ndarray
    policy_evals: int


def finite_memory_gradient(
    system: ControlSystem,
    theta: np.ndarray,
    t: int,
    B: int,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> FiniteMemoryGradient:
    """Truncated-memory estimator that resets the state B steps back.

    Resimulates from the zero state at time t - B with theta held constant
    and accumulates the cost partials with respect to the B most recent
    parameters. Reports the policy-evaluation count (B + 1 per call) for the
    computational comparison against the streaming selector, which needs
    exactly one policy evaluation per step.
    """
    if t < B:
        raise ValueError(f"finite-memory estimator needs t >= B, got t={t}, B={B}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.zeros(system.n)
    S = np.zeros((system.n, system.d))
    policy_evals = 0
    for tau in range(t - B, t):
        if np.linalg.norm(x) > blowup_cap:
            raise StateBlowup(tau, float(np.linalg.norm(x)), blowup_cap)
        jac = system.jacobians(tau, x, theta)
        u = system.policy(tau, x, theta)
        policy_evals += 1
        # The parameter acting at the reset step itself lies outside the
        # B-term memory window, so its injection is skipped.
        S = jac.closed_loop() @ S
        if tau > t - B:
            S = S + jac.dg_du @ jac.dpi_dtheta
        x = system.dynamics(tau, x, u)
    jac = system.jacobians(t, x, theta)
    policy_evals += 1
    grad = jac.df_du @ jac.dpi_dtheta + jac.dcost_dx_closed() @ S
    return FiniteMemoryGradient(grad=grad, policy_evals=policy_evals)

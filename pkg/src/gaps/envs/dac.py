"""Disturbance-action control: linear policy in past disturbances.

u = -K_stb x + sum_i M[i] w_{t-i} on top of a stabilizing state feedback.
The parameter is the stacked (M[1..h]) block, constrained to a Frobenius
ball, which keeps the Euclidean projection closed-form. (The spectral-norm
sum constraint this stands in for has no closed-form projection.)
"""

from __future__ import annotations

import numpy as np

from ..linalg import solve_dare
from ..system import Ball, ControlSystem, StepJacobians


def _per_step(M, T):
    M = np.asarray(M, dtype=float)
    if M.ndim == 2:
        return np.broadcast_to(M, (T,) + M.shape)
    if M.shape[0] < T:
        raise ValueError(f"sequence of length {M.shape[0]} shorter than {T}")
    return M


class DacEnv(ControlSystem):
    def __init__(
        self,
        A,
        B,
        Q,
        R,
        K_stb,
        history: int,
        disturbances: np.ndarray,  # (T, n)
        radius: float,
        x0=None,
    ):
        self.w = np.atleast_2d(np.asarray(disturbances, dtype=float))
        self.T = self.w.shape[0]
        self.A = _per_step(A, self.T)
        self.B = _per_step(B, self.T)
        self.Q = _per_step(Q, self.T)
        self.R = _per_step(R, self.T)
        self.K_stb = _per_step(K_stb, self.T)
        self.h = int(history)
        self.n = self.A.shape[1]
        self.m = self.B.shape[2]
        self.d = self.h * self.m * self.n
        self.theta_set = Ball(np.zeros(self.d), radius)
        self.x0 = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=float)

    def _past_w(self, t: int, lag: int) -> np.ndarray:
        # Disturbances before the start of time are zero.
        return self.w[t - lag] if t - lag >= 0 else np.zeros(self.n)

    def matrices(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(self.h, self.m, self.n)

    def policy(self, t, x, theta):
        Ms = self.matrices(theta)
        u = -self.K_stb[t] @ x
        for i in range(1, self.h + 1):
            u = u + Ms[i - 1] @ self._past_w(t, i)
        return u

    def dynamics(self, t, x, u):
        return self.A[t] @ x + self.B[t] @ u + self.w[t]

    def cost(self, t, x, u):
        return float(x @ self.Q[t] @ x + u @ self.R[t] @ u)

    def jacobians(self, t, x, theta):
        u = self.policy(t, x, theta)
        blocks = [
            np.kron(np.eye(self.m), self._past_w(t, i)[None, :])
            for i in range(1, self.h + 1)
        ]
        return StepJacobians(
            dg_dx=self.A[t],
            dg_du=self.B[t],
            dpi_dx=-self.K_stb[t],
            dpi_dtheta=np.hstack(blocks),
            df_dx=2.0 * self.Q[t] @ x,
            df_du=2.0 * self.R[t] @ u,
        )

    def batch_surrogate_costs(self, thetas: np.ndarray, T: int) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        G = thetas.shape[0]
        Ms = thetas.reshape(G, self.h, self.m, self.n)
        X = np.broadcast_to(self.x0, (G, self.n)).copy()
        out = np.empty((T, G))
        for t in range(T):
            past = np.stack([self._past_w(t, i) for i in range(1, self.h + 1)])
            U = -X @ self.K_stb[t].T + np.einsum("ghmn,hn->gm", Ms, past)
            out[t] = np.einsum("gi,ij,gj->g", X, self.Q[t], X) + np.einsum(
                "gi,ij,gj->g", U, self.R[t], U
            )
            X = X @ self.A[t].T + U @ self.B[t].T + self.w[t]
        return out


def make_dac_env(
    T: int,
    seed: int,
    n: int = 2,
    history: int = 3,
    radius: float = 2.0,
    w_bound: float = 1.0,
) -> DacEnv:
    """LTV system with bounded disturbances under a Riccati stabilizer.

    Disturbances are drawn uniformly from the ball of radius w_bound, so the
    stability-radius bound C * R_M * w_bound / (1 - rho) applies literally.
    The A_t sequence oscillates around a marginally unstable mean to keep
    the problem genuinely time-varying.
    """
    rng = np.random.default_rng(seed)
    # Controllable companion form, slightly unstable, slowly oscillating.
    base = np.eye(n, k=1)
    base[-1] = np.linspace(0.3, 1.0, n)[::-1] * (-1.0) ** np.arange(n)
    base[-1, -1] = 1.05
    A = np.stack([base * (1.0 + 0.05 * np.sin(0.01 * t)) for t in range(T)])
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    B = np.broadcast_to(B, (T, n, 1)).copy()
    Q = np.eye(n)
    R = np.array([[1.0]])
    K = np.stack([solve_dare(A[t], B[t], Q, R).K for t in range(T)])

    direction = rng.standard_normal((T, n))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    w = direction * w_bound * rng.uniform(size=(T, 1)) ** (1.0 / n)
    return DacEnv(A, B, Q, R, K, history, w, radius)

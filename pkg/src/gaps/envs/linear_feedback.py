"""Linear time-varying system under linear state feedback u = -K(theta) x.

The parameter is the flattened gain matrix, so the policy is linear in both
arguments and every Jacobian block is exact. Used as the workhorse for
contraction tests and as the linear sibling of the pendulum environment.
"""

from __future__ import annotations

import numpy as np

from ..system import ControlSystem, ParameterSet, StepJacobians


def _per_step(M: np.ndarray, T: int) -> np.ndarray:
    """Broadcast a constant matrix to (T, ...) or validate a sequence."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 2:
        return np.broadcast_to(M, (T,) + M.shape)
    if M.shape[0] < T:
        raise ValueError(f"matrix sequence of length {M.shape[0]} shorter than T={T}")
    return M


class LinearFeedbackEnv(ControlSystem):
    def __init__(
        self,
        A,
        B,
        Q,
        R,
        disturbances: np.ndarray,
        theta_set: ParameterSet,
        x0=None,
    ):
        self.w = np.atleast_2d(np.asarray(disturbances, dtype=float))
        self.T = self.w.shape[0]
        self.A = _per_step(A, self.T)
        self.B = _per_step(B, self.T)
        self.Q = _per_step(Q, self.T)
        self.R = _per_step(R, self.T)
        self.n = self.A.shape[1]
        self.m = self.B.shape[2]
        if theta_set.dim != self.n * self.m:
            raise ValueError("theta dimension must be n * m (flattened gain)")
        self.d = theta_set.dim
        self.theta_set = theta_set
        self.x0 = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=float)

    def gain(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(self.m, self.n)

    def policy(self, t, x, theta):
        return -self.gain(theta) @ x

    def dynamics(self, t, x, u):
        return self.A[t] @ x + self.B[t] @ u + self.w[t]

    def cost(self, t, x, u):
        return float(x @ self.Q[t] @ x + u @ self.R[t] @ u)

    def jacobians(self, t, x, theta):
        K = self.gain(theta)
        u = -K @ x
        # u_i = -sum_j theta[i*n + j] x_j, so the theta block is -I_m (x) x'.
        dpi_dtheta = -np.kron(np.eye(self.m), x[None, :])
        return StepJacobians(
            dg_dx=self.A[t],
            dg_du=self.B[t],
            dpi_dx=-K,
            dpi_dtheta=dpi_dtheta,
            df_dx=2.0 * self.Q[t] @ x,
            df_du=2.0 * self.R[t] @ u,
        )

    def batch_surrogate_costs(self, thetas: np.ndarray, T: int) -> np.ndarray:
        """Vectorized constant-theta rollouts; entry [t, g] is F_t(theta_g)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        G = thetas.shape[0]
        Ks = thetas.reshape(G, self.m, self.n)
        X = np.broadcast_to(self.x0, (G, self.n)).copy()
        out = np.empty((T, G))
        for t in range(T):
            U = -np.einsum("gij,gj->gi", Ks, X)
            out[t] = np.einsum("gi,ij,gj->g", X, self.Q[t], X) + np.einsum(
                "gi,ij,gj->g", U, self.R[t], U
            )
            X = X @ self.A[t].T + U @ self.B[t].T + self.w[t]
        return out

"""mu-mod + closed-loop-reference-model adaptive autopilot: laws, synthesis, matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_continuous_are, solve_continuous_lyapunov

from .errors import ContractError, SimulationFault, SynthesisError

LYAP_RTOL = 1e-8


def is_hurwitz(A: np.ndarray, margin: float = 0.0) -> bool:
    return bool(np.max(np.linalg.eigvals(A).real) < -margin)


def _check_spd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if not np.allclose(M, M.T):
        raise ContractError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0:
        raise ContractError(f"{name} must be positive definite")
    return M


def solve_lyapunov(A_m: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve A_m^T P + P A_m = -Q for P > 0; A_m must be Hurwitz."""
    A_m = np.asarray(A_m, dtype=float)
    Q = _check_spd(Q, "Q")
    eigs = np.linalg.eigvals(A_m)
    if np.max(eigs.real) >= 0:
        raise SynthesisError(f"A_m is not Hurwitz, eigenvalues: {np.sort(eigs.real)}")
    P = solve_continuous_lyapunov(A_m.T, -Q)
    P = 0.5 * (P + P.T)
    residual = np.linalg.norm(A_m.T @ P + P @ A_m + Q)
    if residual > LYAP_RTOL * np.linalg.norm(Q):
        raise SynthesisError(f"Lyapunov residual too large: {residual:.3e}")
    if np.min(np.linalg.eigvalsh(P)) <= 0:
        raise SynthesisError("Lyapunov solution is not positive definite")
    return P


def lqr_gain(A: np.ndarray, B: np.ndarray, Q_lqr: np.ndarray, R_lqr: np.ndarray) -> np.ndarray:
    """State-feedback gain K_x (n x m) for u = K_x^T x with A + B K_x^T Hurwitz."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q_lqr = _check_spd(Q_lqr, "Q_lqr")
    R_lqr = _check_spd(R_lqr, "R_lqr")
    try:
        P = solve_continuous_are(A, B, Q_lqr, R_lqr)
    except np.linalg.LinAlgError as exc:
        raise SynthesisError(f"Riccati solve failed: {exc}") from exc
    residual = np.linalg.norm(
        A.T @ P + P @ A - P @ B @ np.linalg.solve(R_lqr, B.T @ P) + Q_lqr
    )
    if residual > 1e-8 * max(1.0, np.linalg.norm(Q_lqr)):
        raise SynthesisError(f"Riccati residual too large: {residual:.3e}")
    K_x = -(np.linalg.solve(R_lqr, B.T @ P)).T
    if not is_hurwitz(A + B @ K_x.T):
        raise SynthesisError("LQR closed loop is not Hurwitz")
    return K_x


def match_nominal(A, B, K_x0, C):
    """Reference model and feedforward gains giving unit DC gain on the outputs C x.

    Returns (A_m, B_m, K_r0, K_u0) with K_r0^T = -(C A_m^{-1} B)^{-1},
    B_m = B K_r0^T and K_u0^T = -C A_m^{-1} B (so B_m K_u0^T du == B du).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    K_x0 = np.asarray(K_x0, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    A_m = A + B @ K_x0.T
    if not is_hurwitz(A_m):
        raise SynthesisError(
            f"A + B K_x^T is not Hurwitz, eigenvalues {np.sort(np.linalg.eigvals(A_m).real)}"
        )
    dc = C @ np.linalg.solve(A_m, B)  # C A_m^{-1} B, k x m
    if dc.shape[0] != dc.shape[1]:
        raise SynthesisError("output selection must make C A_m^{-1} B square (k = m)")
    if abs(np.linalg.det(dc)) < 1e-12:
        raise SynthesisError("singular DC-gain matrix; outputs not independently controllable")
    K_r0 = (-np.linalg.inv(dc)).T  # K_r0^T = -(C A_m^{-1} B)^{-1}
    B_m = B @ K_r0.T
    K_u0 = (-dc).T  # K_u0^T = -C A_m^{-1} B, m x k stored
    return A_m, B_m, K_r0, K_u0


def match_anomaly(A, B, lambda_hat, K_x_ta, C):
    """Re-matched (A_m, B_m, K_r, K_u) using the post-anomaly input path B diag(lambda_hat)."""
    lam = np.atleast_1d(np.asarray(lambda_hat, dtype=float))
    if np.any(lam <= 0) or np.any(lam > 1):
        raise ContractError("lambda_hat entries must lie in (0, 1]")
    B_eff = np.asarray(B, dtype=float) * lam[np.newaxis, :]
    return match_nominal(A, B_eff, np.asarray(K_x_ta, dtype=float), C)


@dataclass
class ReferenceModel:
    """Closed-loop reference model x_m' = A_m x_m + B_m (r0 + K_u^T du) - L e."""

    A_m: np.ndarray
    B_m: np.ndarray
    L: np.ndarray
    x_m: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A_m = np.asarray(self.A_m, dtype=float)
        self.B_m = np.asarray(self.B_m, dtype=float)
        n = self.A_m.shape[0]
        L = np.asarray(self.L, dtype=float)
        if L.ndim == 0:
            L = float(L) * np.eye(n)
        self.L = L
        if not is_hurwitz(self.A_m):
            raise SynthesisError("A_m must be Hurwitz")
        if not is_hurwitz(self.A_m + self.L):
            raise SynthesisError("A_m + L must be Hurwitz")
        if np.any(np.diag(self.L) > 0):
            raise ContractError("L entries must be <= 0")
        self.x_m = np.zeros(n) if self.x_m is None else np.asarray(self.x_m, dtype=float)

    def derivative(self, x_m, r0, K_u, du_ad, e):
        return self.A_m @ x_m + self.B_m @ (r0 + K_u.T @ du_ad) - self.L @ e


def crm_step(ref: ReferenceModel, r0, K_u, du_ad, e, dt: float) -> np.ndarray:
    """One RK4 step of the reference model with r0, du_ad, e held over the step."""
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    du_ad = np.atleast_1d(np.asarray(du_ad, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    f = lambda z: ref.derivative(z, r0, K_u, du_ad, e)
    x = ref.x_m
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    ref.x_m = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return ref.x_m


@dataclass
class MuModConfig:
    """Buffer-region input scaling: buffer fraction delta, scaling strength mu."""

    mu: float
    delta: float
    u_max: np.ndarray

    def __post_init__(self):
        if self.mu < 0:
            raise ContractError("mu must be nonnegative")
        if not 0 <= self.delta < 1:
            raise ContractError("delta must lie in [0, 1)")
        self.u_max = np.atleast_1d(np.asarray(self.u_max, dtype=float))
        self.u_max_delta = (1.0 - self.delta) * self.u_max


def mu_mod_limit(u_ad, cfg: MuModConfig) -> np.ndarray:
    """Scale each channel into the buffer region once it exceeds (1-delta) u_max."""
    u_ad = np.atleast_1d(np.asarray(u_ad, dtype=float))
    lim = cfg.u_max_delta
    over = np.abs(u_ad) > lim
    u_c = u_ad.copy()
    if np.any(over):
        u_c[over] = (u_ad[over] + cfg.mu * np.sign(u_ad[over]) * lim[over]) / (1.0 + cfg.mu)
    return u_c


@dataclass
class AdaptiveGains:
    """Adaptive parameters and their learning rates; P solves the Lyapunov equation."""

    K_x: np.ndarray  # n x m
    K_r: np.ndarray  # k x m
    K_u: np.ndarray  # m x k
    d_hat: np.ndarray  # m
    Phi_hat: np.ndarray  # p x m
    Gamma_x: np.ndarray
    Gamma_r: np.ndarray
    Gamma_u: np.ndarray
    Gamma_d: np.ndarray
    Gamma_f: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        for name in ("K_x", "K_r", "K_u", "Phi_hat", "P"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.d_hat = np.atleast_1d(np.asarray(self.d_hat, dtype=float))
        self.Gamma_x = _check_spd(self.Gamma_x, "Gamma_x")
        self.Gamma_r = _check_spd(self.Gamma_r, "Gamma_r")
        self.Gamma_u = _check_spd(self.Gamma_u, "Gamma_u")
        self.Gamma_d = _check_spd(self.Gamma_d, "Gamma_d")
        if self.Phi_hat.shape[0]:
            self.Gamma_f = _check_spd(self.Gamma_f, "Gamma_f")
        else:
            self.Gamma_f = np.zeros((0, 0))
        _check_spd(self.P, "P")


def compute_u_ad(gains: AdaptiveGains, x, r0, fx) -> np.ndarray:
    """u_ad = K_x^T x + K_r^T r0 + d_hat + Phi_hat^T f(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    fx = np.atleast_1d(np.asarray(fx, dtype=float))
    u = gains.K_x.T @ x + gains.K_r.T @ r0 + gains.d_hat
    if fx.size:
        u = u + gains.Phi_hat.T @ fx
    return u


def gain_derivatives(gains: AdaptiveGains, x, r0, fx, du_ad, e, B, B_m):
    """Right-hand sides of the adaptive laws (outer-product convention)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    fx = np.atleast_1d(np.asarray(fx, dtype=float))
    du_ad = np.atleast_1d(np.asarray(du_ad, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    epb = (e @ gains.P) @ B  # e^T P B, length m
    epbm = (e @ gains.P) @ B_m  # e^T P B_m, length k
    dK_x = -gains.Gamma_x @ np.outer(x, epb)
    dK_r = -gains.Gamma_r @ np.outer(r0, epb)
    dd = -gains.Gamma_d @ epb
    if fx.size:
        dPhi = -gains.Gamma_f @ np.outer(fx, epb)
    else:
        dPhi = np.zeros_like(gains.Phi_hat)
    dK_u = gains.Gamma_u @ np.outer(du_ad, epbm)
    return dK_x, dK_r, dK_u, dd, dPhi


def update_gains(gains: AdaptiveGains, x, r0, fx, du_ad, e, B, B_m, dt: float) -> AdaptiveGains:
    """Advance the adaptive laws one step with the regressor inputs held over dt."""
    dK_x, dK_r, dK_u, dd, dPhi = gain_derivatives(gains, x, r0, fx, du_ad, e, B, B_m)
    gains.K_x = gains.K_x + dt * dK_x
    gains.K_r = gains.K_r + dt * dK_r
    gains.K_u = gains.K_u + dt * dK_u
    gains.d_hat = gains.d_hat + dt * dd
    gains.Phi_hat = gains.Phi_hat + dt * dPhi
    for arr in (gains.K_x, gains.K_r, gains.K_u, gains.d_hat, gains.Phi_hat):
        if not np.all(np.isfinite(arr)):
            raise SimulationFault("adaptive gains became non-finite")
    return gains


@dataclass
class PilotDirectives:
    """Supervisory pilot inputs: integer mu, optionally a severity estimate."""

    mu: int
    lambda_hat: Optional[np.ndarray] = None
    t_emit: float = 0.0

    def __post_init__(self):
        if not 1 <= int(self.mu) <= 20:
            raise ContractError("mu must be an integer in [1, 20]")
        self.mu = int(self.mu)
        if self.lambda_hat is not None:
            self.lambda_hat = np.atleast_1d(np.asarray(self.lambda_hat, dtype=float))
            if np.any(self.lambda_hat <= 0) or np.any(self.lambda_hat > 1):
                raise ContractError("lambda_hat entries must lie in (0, 1]")

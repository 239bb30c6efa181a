"""Plant models: saturated LTI state-space and transfer-function forms with anomaly hooks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, SimulationFault

# Anomaly severity -> (label, display color). Loss-of-effectiveness value keys.
SEVERITY_TABLE = {
    0.30: ("Low", "green"),
    0.20: ("Middle", "violet"),
    0.15: ("High", "purple"),
}


def severity_for(lam: float) -> tuple[Optional[str], Optional[str]]:
    for value, (label, color) in SEVERITY_TABLE.items():
        if abs(lam - value) < 1e-12:
            return label, color
    return None, None


@dataclass
class ActuatorModel:
    """Per-channel amplitude limits, optionally rate limits (disabled by default)."""

    u_max: np.ndarray
    rate_max: Optional[np.ndarray] = None

    def __post_init__(self):
        self.u_max = np.atleast_1d(np.asarray(self.u_max, dtype=float))
        if np.any(self.u_max <= 0):
            raise ContractError("actuator amplitude limits must be strictly positive")
        if self.rate_max is not None:
            self.rate_max = np.atleast_1d(np.asarray(self.rate_max, dtype=float))
            if self.rate_max.shape != self.u_max.shape:
                raise ContractError("rate_max shape must match u_max")
            if np.any(self.rate_max <= 0):
                raise ContractError("actuator rate limits must be strictly positive")

    @property
    def m(self) -> int:
        return self.u_max.shape[0]


def saturate(u_c, limits: ActuatorModel, prev=None, dt: Optional[float] = None):
    """Clip each channel to its amplitude limit; rate-limit against prev if configured."""
    u_c = np.atleast_1d(np.asarray(u_c, dtype=float))
    if u_c.shape != limits.u_max.shape:
        raise ContractError(
            f"input dimension {u_c.shape} does not match limits {limits.u_max.shape}"
        )
    u = np.clip(u_c, -limits.u_max, limits.u_max)
    if limits.rate_max is not None and prev is not None:
        if dt is None or dt <= 0:
            raise ContractError("rate limiting requires dt > 0")
        prev = np.atleast_1d(np.asarray(prev, dtype=float))
        du = limits.rate_max * dt
        u = np.clip(u, prev - du, prev + du)
    return u


def _zero_regressor(x: np.ndarray) -> np.ndarray:
    return np.zeros(0)


@dataclass
class StateSpacePlant:
    """dx/dt = A x + B Lambda_f u + d + Phi^T f(x), states as deviations from trim."""

    A: np.ndarray
    B: np.ndarray
    Lambda_f: np.ndarray
    d: Optional[np.ndarray] = None
    Phi: Optional[np.ndarray] = None
    regressor: Callable[[np.ndarray], np.ndarray] = _zero_regressor
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        n, m = self.B.shape
        if self.A.shape != (n, n):
            raise ContractError(f"A must be {n}x{n}, got {self.A.shape}")
        lam = np.asarray(self.Lambda_f, dtype=float)
        if lam.ndim == 2:
            if not np.allclose(lam, np.diag(np.diag(lam))):
                raise ContractError("Lambda_f must be diagonal")
            lam = np.diag(lam)
        if lam.shape != (m,):
            raise ContractError("Lambda_f diagonal must have one entry per input")
        if np.any(lam <= 0) or np.any(lam > 1):
            raise ContractError("Lambda_f entries must lie in (0, 1]")
        self.Lambda_f = lam
        self.d = np.zeros(n) if self.d is None else np.asarray(self.d, dtype=float)
        if self.d.shape != (n,):
            raise ContractError("d must be an n-vector")
        if self.Phi is None:
            self.Phi = np.zeros((0, n))
        else:
            self.Phi = np.asarray(self.Phi, dtype=float)
            if self.Phi.ndim != 2 or self.Phi.shape[1] != n:
                raise ContractError("Phi must be p x n")
        self.x = np.zeros(n) if self.x is None else np.asarray(self.x, dtype=float)
        if self.x.shape != (n,):
            raise ContractError("x must be an n-vector")
        self._applied_events: set[int] = set()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        dx = self.A @ x + self.B @ (self.Lambda_f * u) + self.d
        if self.Phi.shape[0]:
            dx = dx + self.Phi.T @ self.regressor(x)
        return dx

    def step(self, u, dt: float) -> np.ndarray:
        """Advance one fixed RK4 step with the (already saturated) input held over dt."""
        if dt <= 0:
            raise ContractError("dt must be positive")
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.m,):
            raise ContractError("input dimension mismatch")
        x = self.x
        k1 = self.derivative(x, u)
        k2 = self.derivative(x + 0.5 * dt * k1, u)
        k3 = self.derivative(x + 0.5 * dt * k2, u)
        k4 = self.derivative(x + dt * k3, u)
        x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_next)):
            raise SimulationFault("state-space plant state became non-finite")
        self.x = x_next
        return x_next


def output_derivatives(A, b, c, d0, xi, u, count: int) -> np.ndarray:
    """Output derivatives y^(k), k < count, of a realization with the input held at u."""
    ys = np.zeros(count)
    Ak_xi = np.asarray(xi, dtype=float).copy()
    for k in range(count):
        y = float(c @ Ak_xi) if Ak_xi.size else 0.0
        if k == 0:
            y += d0 * u
        elif Ak_xi.size:
            Akb = np.asarray(b, dtype=float).copy()
            for _ in range(k - 1):
                Akb = A @ Akb
            y += float(c @ Akb) * u
        ys[k] = y
        if Ak_xi.size:
            Ak_xi = A @ Ak_xi
    return ys


def match_state(A, b, c, d0, u, y_targets) -> np.ndarray:
    """State of the realization whose output derivatives equal y_targets with input u.

    Uses the observability rows; valid for minimal (observable) realizations.
    """
    order = A.shape[0]
    obs = np.zeros((order, order))
    rhs = np.zeros(order)
    row = np.asarray(c, dtype=float).copy()
    y = np.asarray(y_targets, dtype=float)
    for k in range(order):
        obs[k] = row
        if k == 0:
            g = d0 * u
        else:
            Akb = np.asarray(b, dtype=float).copy()
            for _ in range(k - 1):
                Akb = A @ Akb
            g = float(c @ Akb) * u
        rhs[k] = (y[k] if k < y.size else 0.0) - g
        row = row @ A
    return np.linalg.solve(obs, rhs)


def realize_siso(num: Sequence[float], den: Sequence[float]):
    """Controllable-canonical (A, b, c, d0) for num/den in descending powers, den monic."""
    num = np.trim_zeros(np.asarray(num, dtype=float), "f")
    den = np.trim_zeros(np.asarray(den, dtype=float), "f")
    if den.size == 0:
        raise ContractError("denominator must be nonzero")
    if num.size > den.size:
        raise ContractError("transfer function must be proper (deg num <= deg den)")
    num = num / den[0]
    den = den / den[0]
    order = den.size - 1
    if order == 0:
        return np.zeros((0, 0)), np.zeros(0), np.zeros(0), float(num[0]) if num.size else 0.0
    d0 = 0.0
    if num.size == den.size:
        d0 = num[0]
        num = num[1:] - d0 * den[1:]
    a_asc = den[1:][::-1]  # a0 .. a_{order-1}
    b_asc = np.zeros(order)
    b_asc[: num.size] = num[::-1]
    A = np.zeros((order, order))
    if order > 1:
        A[:-1, 1:] = np.eye(order - 1)
    A[-1, :] = -a_asc
    b = np.zeros(order)
    b[-1] = 1.0
    c = b_asc
    return A, b, c, d0


@dataclass
class TransferFunctionPlant:
    """SISO plant M = num/den * e^(-delay*s) applied to input v, realized in state space.

    The pure delay is a circular buffer of round(delay/dt) input samples; the buffered
    input is held constant within each integration step.
    """

    num: Sequence[float]
    den: Sequence[float]
    delay: float = 0.0
    dt: float = 0.01

    def __post_init__(self):
        if self.delay < 0:
            raise ContractError("delay must be nonnegative")
        if self.dt <= 0:
            raise ContractError("dt must be positive")
        self.A, self.b, self.c, self.d0 = realize_siso(self.num, self.den)
        self.xi = np.zeros(self.order)
        self.n_delay = int(round(self.delay / self.dt))
        self._ring = np.zeros(max(self.n_delay, 1))
        self._ring_pos = 0
        self._u_active = 0.0  # delayed input in effect during the current step
        self._history = np.zeros(0)
        self._applied_events: set[int] = set()

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def output(self) -> float:
        u_del = self._delayed_input()
        return float(self.c @ self.xi + self.d0 * u_del)

    @property
    def output_deriv(self) -> float:
        u_del = self._delayed_input()
        return float(self.c @ (self.A @ self.xi) + (self.c @ self.b) * u_del)

    def output_derivs(self, count: int) -> np.ndarray:
        """Output derivatives d^k M/dt^k for k=0..count-1 with the buffered input held."""
        return output_derivatives(self.A, self.b, self.c, self.d0, self.xi, self._delayed_input(), count)

    def _delayed_input(self) -> float:
        return self._u_active

    def step(self, v: float, dt: Optional[float] = None) -> float:
        """Push input sample v, advance one RK4 step, return the new output M."""
        dt = self.dt if dt is None else dt
        if dt <= 0:
            raise ContractError("dt must be positive")
        if self.n_delay == 0:
            u_del = float(v)
        else:
            u_del = float(self._ring[self._ring_pos % self.n_delay])
            self._ring[self._ring_pos % self.n_delay] = v
            self._ring_pos += 1
        self._u_active = u_del
        self._history = np.append(self._history, v)
        if self._history.size > 4096:
            self._history = self._history[-2048:]
        if self.order:
            xi = self.xi
            f = lambda z: self.A @ z + self.b * u_del
            k1 = f(xi)
            k2 = f(xi + 0.5 * dt * k1)
            k3 = f(xi + 0.5 * dt * k2)
            k4 = f(xi + dt * k3)
            xi_next = xi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(xi_next)):
                raise SimulationFault("transfer-function plant state became non-finite")
            self.xi = xi_next
        return self.output

    def switch_to(self, num, den, delay: float) -> None:
        """Swap the realization, keeping output and derivatives continuous up to the new order."""
        derivs_old = self.output_derivs(min(self.order, 8)) if self.order else np.zeros(0)
        new = TransferFunctionPlant(num, den, delay, self.dt)
        # prefill the delay line with recent input history so the input path is continuous
        if new.n_delay > 0:
            hist = self._history[-new.n_delay:] if self._history.size else np.zeros(0)
            ring = np.zeros(new.n_delay)
            if hist.size:
                ring[-hist.size:] = hist
            new._ring = ring
            new._ring_pos = 0
            new._u_active = float(ring[0])
        else:
            new._u_active = self._u_active
        new._history = self._history.copy()
        new.xi = match_state(new.A, new.b, new.c, new.d0, new._delayed_input(), derivs_old)
        self.num, self.den, self.delay = num, den, delay
        self.A, self.b, self.c, self.d0 = new.A, new.b, new.c, new.d0
        self.xi = new.xi
        self.n_delay = new.n_delay
        self._ring = new._ring
        self._ring_pos = new._ring_pos
        self._u_active = new._u_active


@dataclass
class AnomalyEvent:
    """Scheduled actuator or dynamics anomaly."""

    t_a: float
    kind: str  # "loss_of_effectiveness" | "dynamics_switch"
    lambdas: Optional[np.ndarray] = None
    target: Optional[tuple] = None  # (num, den, delay) for dynamics_switch
    severity: Optional[str] = None
    color: Optional[str] = None
    event_id: int = field(default_factory=lambda: AnomalyEvent._next_id())

    _counter = [0]

    @staticmethod
    def _next_id() -> int:
        AnomalyEvent._counter[0] += 1
        return AnomalyEvent._counter[0]

    def __post_init__(self):
        if self.t_a < 0:
            raise ContractError("anomaly time must be nonnegative")
        if self.kind == "loss_of_effectiveness":
            if self.lambdas is None:
                raise ContractError("loss_of_effectiveness requires lambda entries")
            self.lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
            if np.any(self.lambdas <= 0) or np.any(self.lambdas >= 1):
                raise ContractError("loss-of-effectiveness entries must lie in (0, 1)")
            if self.severity is None:
                self.severity, self.color = severity_for(float(self.lambdas[0]))
            else:
                expected = severity_for(float(self.lambdas[0]))
                if expected[0] is not None and (self.severity, self.color) != expected:
                    raise ContractError(
                        f"severity/color {self.severity}/{self.color} does not match "
                        f"table entry {expected} for lambda={self.lambdas[0]}"
                    )
        elif self.kind == "dynamics_switch":
            if self.target is None:
                raise ContractError("dynamics_switch requires a target transfer function")
        else:
            raise ContractError(f"unknown anomaly kind {self.kind!r}")


def loe_event(t_a: float, lam: float, m: int = 2) -> AnomalyEvent:
    label, color = severity_for(lam)
    return AnomalyEvent(
        t_a=t_a,
        kind="loss_of_effectiveness",
        lambdas=np.full(m, lam),
        severity=label,
        color=color,
    )


def lambda_schedule(events: Sequence[AnomalyEvent], t: float, m: int) -> np.ndarray:
    """Piecewise-constant Lambda_f diagonal at time t: identity before the first anomaly."""
    lam = np.ones(m)
    for ev in sorted(events, key=lambda e: e.t_a):
        if ev.kind != "loss_of_effectiveness":
            continue
        if t >= ev.t_a:
            lam = np.asarray(ev.lambdas, dtype=float).copy()
    return lam


def apply_anomaly(plant, event: AnomalyEvent):
    """Apply an anomaly event to a plant in place. Re-application raises."""
    if event.event_id in plant._applied_events:
        raise ContractError("anomaly event applied twice")
    if event.kind == "loss_of_effectiveness":
        if not isinstance(plant, StateSpacePlant):
            raise ContractError("loss_of_effectiveness applies to state-space plants")
        lam = np.asarray(event.lambdas, dtype=float)
        if lam.shape != (plant.m,):
            raise ContractError("lambda entries must match input count")
        plant.Lambda_f = lam.copy()
    else:
        if not isinstance(plant, TransferFunctionPlant):
            raise ContractError("dynamics_switch applies to transfer-function plants")
        num, den, delay = event.target
        plant.switch_to(num, den, delay)
    plant._applied_events.add(event.event_id)
    return plant

"""Synthetic pilot decision sources: CfM perception trigger, crossover manual control,
supervisory SAP/SUP policies, and the live-human adapter."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import realize_siso
from .errors import CalibrationError, ContractError, RealizationError

# Smoothing/lagging filter on the perception variable (pilot stick bandwidth).
G1_NUM = (2.25,)
G1_DEN = (1.0, 1.5, 2.25)

# Neuromuscular (limb) dynamics on the pilot output.
GNM_NUM = (100.0,)
GNM_DEN = (1.0, 14.14, 100.0)


def window_rms_series(c: np.ndarray, window_steps: int) -> np.ndarray:
    """Trailing-window rms of c: at sample i, rms over the last min(i+1, W) samples."""
    csq = np.asarray(c, dtype=float) ** 2
    csum = np.cumsum(csq)
    n = csq.size
    out = np.empty(n)
    w = window_steps
    for i in range(n):
        if i < w:
            out[i] = math.sqrt(csum[i] / (i + 1))
        else:
            out[i] = math.sqrt((csum[i] - csum[i - w]) / w)
    return out


def monitored_derivative(c: np.ndarray, dt: float, window: float = 10.0) -> np.ndarray:
    """|d/dt| of the trailing-window rms of the capacity series; first sample is 0."""
    w = max(1, int(round(window / dt)))
    rms = window_rms_series(c, w)
    d = np.empty_like(rms)
    d[0] = 0.0
    d[1:] = np.abs(np.diff(rms)) / dt
    return d


def calibrate_perception(nominal_log, window: float = 10.0, warmup: float | None = None) -> tuple[float, float]:
    """Mean and standard deviation of the monitored CfM-rate over an anomaly-free run.

    The first `warmup` seconds (default: the window length) are excluded as rms warm-up.
    """
    c = np.asarray(nominal_log.columns["c"], dtype=float)
    dt = nominal_log.dt
    duration = (c.size - 1) * dt
    if duration < 180.0 - 1e-9:
        raise CalibrationError(f"nominal log too short: {duration:.1f} s < 180 s")
    d = monitored_derivative(c, dt, window)
    skip = int(round((window if warmup is None else warmup) / dt))
    d = d[skip:]
    mu_p = float(np.mean(d))
    sigma_p = float(np.std(d))
    if sigma_p <= 1e-12:
        raise CalibrationError("monitored CfM-rate has (near) zero variance; cannot calibrate")
    return mu_p, sigma_p


@dataclass
class PerceptionState:
    """Latching anomaly detector driven by the standardized CfM-rate."""

    mu_p: float
    sigma_p: float
    xi: np.ndarray = field(default_factory=lambda: np.zeros(2))
    K_t: int = 0
    t_trigger: Optional[float] = None
    F0: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.sigma_p <= 0:
            raise CalibrationError("sigma_p must be positive")
        self._A, self._b, self._c, _ = realize_siso(G1_NUM, G1_DEN)


def perception_step(state: PerceptionState, d_cfm_r_dt: float, dt: float) -> tuple[int, float]:
    """Advance the trigger one step: F standardized, filtered by G1, latched at |F0| >= 1."""
    F = (d_cfm_r_dt - state.mu_p) / (3.0 * state.sigma_p)
    A, b, c = state._A, state._b, state._c
    xi = state.xi
    f = lambda z: A @ z + b * F
    k1 = f(xi)
    k2 = f(xi + 0.5 * dt * k1)
    k3 = f(xi + 0.5 * dt * k2)
    k4 = f(xi + dt * k3)
    state.xi = xi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    state.t += dt
    state.F0 = float(c @ state.xi)
    if state.K_t == 0 and abs(state.F0) >= 1.0:
        state.K_t = 1
        state.t_trigger = state.t
    return state.K_t, state.F0


def _poly_eval(coeffs, s: complex) -> complex:
    out = 0.0 + 0.0j
    for c in coeffs:
        out = out * s + c
    return out


def plant_freq_response(num, den, delay: float, w: float) -> complex:
    s = 1j * w
    return _poly_eval(num, s) / _poly_eval(den, s) * np.exp(-delay * s)


@dataclass
class PilotRealization:
    """Realized crossover compensator g * N(s)/D(s) * e^(-tau_h s) followed by G_nm."""

    num: np.ndarray
    den: np.ndarray
    gain: float
    tau_h: float
    mode: str
    omega_c: float
    tau_e: float
    plant: tuple  # (num, den, delay) it was matched against

    def __post_init__(self):
        A, b, c, d0 = realize_siso(self.gain * np.asarray(self.num), self.den)
        self.A, self.b, self.c, self.d0 = A, b, c, d0
        self.Ag, self.bg, self.cg, _ = realize_siso(GNM_NUM, GNM_DEN)
        self.xi = np.zeros(self.A.shape[0])
        self.xi_g = np.zeros(2)

    def freq_response(self, w: float) -> complex:
        s = 1j * w
        return (
            self.gain
            * _poly_eval(self.num, s)
            / _poly_eval(self.den, s)
            * np.exp(-self.tau_h * s)
        )

    def open_loop(self, w: float) -> complex:
        return self.freq_response(w) * plant_freq_response(*self.plant, w)


@dataclass
class CrossoverPilot:
    """Crossover-model manual controller: Y_h Y_p = w_c e^(-tau_e s) / s near w_c."""

    omega_c: float = 2.0
    tau_e: float = 0.3
    rolloff_factor: float = 10.0

    def __post_init__(self):
        if self.omega_c <= 0:
            raise ContractError("crossover frequency must be positive")
        if self.tau_e < 0:
            raise ContractError("effective delay must be nonnegative")

    def realize(self, plant_num, plant_den, plant_delay: float = 0.0) -> PilotRealization:
        """Form Y_h = w_c e^(-tau_e s)/(s Y_p), rolled off to a proper realization.

        Excess zeros are absorbed by first-order poles at rolloff_factor*w_c; gain and
        the pilot's own delay are then set so the crossover magnitude/phase conditions
        hold exactly at w_c for the continuous design.
        """
        p_num = np.trim_zeros(np.asarray(plant_num, dtype=float), "f")
        p_den = np.trim_zeros(np.asarray(plant_den, dtype=float), "f")
        num_h = p_den.copy()
        den_h = np.polymul([1.0, 0.0], p_num)
        while num_h.size > 1 and den_h.size > 1 and num_h[-1] == 0.0 and den_h[-1] == 0.0:
            num_h = num_h[:-1]
            den_h = den_h[:-1]
        excess = (num_h.size - 1) - (den_h.size - 1)
        if excess < 0:
            mode = "lag"
        elif excess == 0 and num_h.size == 1:
            mode = "gain"
        else:
            mode = "lead"
        w_r = self.rolloff_factor * self.omega_c
        for _ in range(max(excess, 0)):
            den_h = np.polymul(den_h, [1.0 / w_r, 1.0])
        wc = self.omega_c
        s = 1j * wc
        target = -1j * np.exp(-1j * wc * self.tau_e) / plant_freq_response(
            plant_num, plant_den, plant_delay, wc
        )
        R = _poly_eval(num_h, s) / _poly_eval(den_h, s)
        gain = abs(target) / abs(R)
        tau_h = (np.angle(R) - np.angle(target)) / wc
        if tau_h < -1e-12:
            raise RealizationError(
                f"crossover phase condition infeasible: required pilot delay {tau_h:.4f} s < 0 "
                f"(plant delay {plant_delay} s exceeds the effective delay budget)"
            )
        return PilotRealization(
            num=num_h,
            den=den_h,
            gain=float(gain),
            tau_h=float(max(tau_h, 0.0)),
            mode=mode,
            omega_c=wc,
            tau_e=self.tau_e,
            plant=(tuple(np.asarray(plant_num, float)), tuple(np.asarray(plant_den, float)), plant_delay),
        )


@dataclass
class SupervisoryPolicy:
    """SAP/SUP supervisory pilot: mu from a severity lookup, SAP also estimates severity."""

    variant: str
    mu_table: dict
    reaction_mean: float = 1.0
    reaction_spread: float = 0.0
    estimate_error: float = 0.2

    def __post_init__(self):
        if self.variant not in ("SAP", "SUP"):
            raise ContractError("variant must be SAP or SUP")
        for label, mu in self.mu_table.items():
            if not 1 <= int(mu) <= 20:
                raise ContractError(f"mu for severity {label} outside [1, 20]")


def estimate_with_error(lam: float, err: float, rng: np.random.Generator) -> float:
    """Severity estimate off by err in absolute value, seeded sign.

    The negative sign is only drawn when it leaves a meaningful effectiveness
    (>= 0.05); otherwise the error is applied upward. Clamped to (0.01, 1].
    """
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if lam - err < 0.05:
        sign = 1.0
    return float(np.clip(lam + sign * err, 0.01, 1.0))


def supervisory_decide(policy: SupervisoryPolicy, event, rng: np.random.Generator):
    """Directives emitted at event time plus a drawn reaction delay.

    SAP attaches a severity estimate carrying the configured absolute error with a
    seeded sign (see estimate_with_error). SUP never attaches an estimate.
    """
    from .adaptive import PilotDirectives

    if event.severity not in policy.mu_table:
        raise ContractError(f"no trained mu for severity {event.severity!r}")
    delay = policy.reaction_mean
    if policy.reaction_spread > 0:
        delay += policy.reaction_spread * (2.0 * rng.random() - 1.0)
    mu = int(policy.mu_table[event.severity])
    lam_hat = None
    if policy.variant == "SAP":
        lam_hat = np.full(
            event.lambdas.shape, estimate_with_error(float(event.lambdas[0]), policy.estimate_error, rng)
        )
    return PilotDirectives(mu=mu, lambda_hat=lam_hat, t_emit=event.t_a + delay)


def total_reaction_time(t_rt: float, delta_t: float) -> float:
    """Elapsed time from anomaly onset to the take-over action."""
    return t_rt + delta_t


@dataclass
class HumanCommand:
    kind: str  # TakeOver | Stick | MuInput | SeverityEstimate | Pause | Resume
    value: Optional[float] = None
    t_receipt: float = 0.0
    applied_step: Optional[int] = None


class HumanAdapter:
    """Exposes the synthetic-pilot decision interface backed by a live command queue.

    Commands are timestamped at ingestion and applied at the next step boundary in
    arrival order; reaction times are measured from the alert to the receipt time.
    """

    def __init__(self):
        self._queue: deque[HumanCommand] = deque()
        self.connected = True
        self.t_alert: Optional[float] = None
        self.t_takeover_receipt: Optional[float] = None

    def push(self, command: HumanCommand) -> None:
        self._queue.append(command)

    def drain(self) -> list[HumanCommand]:
        out = list(self._queue)
        self._queue.clear()
        return out

    def note_alert(self, t: float) -> None:
        if self.t_alert is None:
            self.t_alert = t

    def note_takeover(self, t_receipt: float) -> None:
        if self.t_takeover_receipt is None:
            self.t_takeover_receipt = t_receipt

    @property
    def reaction_time(self) -> Optional[float]:
        if self.t_alert is None or self.t_takeover_receipt is None:
            return None
        return self.t_takeover_receipt - self.t_alert

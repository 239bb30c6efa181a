"""Scalar performance metrics computed from run logs (trapezoidal quadrature, 100 Hz grid)."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .errors import ContractError, MetricError


def _grid_index(t: float, dt: float, n: int, name: str) -> int:
    i = int(round(t / dt))
    if i < 0 or i >= n:
        raise MetricError(f"{name}={t} outside the logged range")
    return i


def trapz_window(y: np.ndarray, dt: float, a: float, b: float) -> float:
    """Trapezoidal integral of y over [a, b] on the fixed grid."""
    n = y.shape[0]
    ia = _grid_index(a, dt, n, "window start")
    ib = _grid_index(b, dt, n, "window end")
    if ib <= ia:
        raise MetricError(f"empty metric window [{a}, {b}]")
    return float(np.trapezoid(y[ia : ib + 1], dx=dt))


def windowed_rms(e: np.ndarray, dt: float, a: float, b: float) -> float:
    """sqrt of the mean of e^2 over [a, b]; vector series use the squared norm."""
    e = np.asarray(e, dtype=float)
    sq = e * e if e.ndim == 1 else np.sum(e * e, axis=1)
    return float(np.sqrt(trapz_window(sq, dt, a, b) / (b - a)))


def cfm_series(u: np.ndarray, u_max) -> np.ndarray:
    """Normalized remaining capacity min_i (1 - |u_i|/u_max_i) per step."""
    u = np.asarray(u, dtype=float)
    u_max = np.atleast_1d(np.asarray(u_max, dtype=float))
    if u.ndim == 1:
        u = u[:, np.newaxis]
    if u.shape[1] != u_max.shape[0]:
        raise ContractError("u columns must match u_max entries")
    if np.any(np.abs(u) > u_max[np.newaxis, :] * (1 + 1e-12)):
        raise ContractError("cfm_series expects the post-saturation input")
    c = 1.0 - np.abs(u) / u_max[np.newaxis, :]
    return np.min(c, axis=1)


def cfm_normalized(
    cmin: np.ndarray, dt: float, t_a: float, T: float, delta: float, u_max
) -> tuple[float, float]:
    """(CfM, CfM^R): rms of the min-capacity over [t_a, T], normalized by max_i(delta u_max_i)."""
    u_max = np.atleast_1d(np.asarray(u_max, dtype=float))
    cfm_r = windowed_rms(np.asarray(cmin, dtype=float), dt, t_a, T)
    cfm_d = float(np.max(delta * u_max))
    if cfm_d <= 0:
        raise MetricError("desired CfM is zero; delta and u_max must be positive")
    return cfm_r / cfm_d, cfm_r


def gcd(xm_out: np.ndarray, r0: np.ndarray, dt: float, a: float, b: float) -> float:
    """rms(commanded outputs of x_m minus r0) / rms(r0) over the interval of interest."""
    r0 = np.asarray(r0, dtype=float)
    denom = windowed_rms(r0, dt, a, b)
    if denom == 0.0:
        raise MetricError("rms(r0) is zero over the interval; GCD undefined")
    return windowed_rms(np.asarray(xm_out, dtype=float) - r0, dt, a, b) / denom


def e_rms(e: np.ndarray, dt: float, t_a: float, T_p: float) -> float:
    """sqrt((1/T_p) * integral of e^2 over [t_a, T_p])."""
    return float(np.sqrt(trapz_window(np.asarray(e, float) ** 2, dt, t_a, T_p) / T_p))


def bumpless_rho(e: np.ndarray, dt: float, t_a: float) -> float:
    """Post- minus pre-anomaly rms over 10 s windows with the written normalizations
    1/(t_a+10) and 1/t_a."""
    e = np.asarray(e, dtype=float)
    if t_a <= 0:
        raise MetricError("bumpless metric needs t_a > 0")
    after = trapz_window(e * e, dt, t_a, t_a + 10.0)
    before = trapz_window(e * e, dt, t_a - 10.0, t_a)
    return float(np.sqrt(after / (t_a + 10.0)) - np.sqrt(before / t_a))


def bumpless_rho_windowed(e: np.ndarray, dt: float, t_a: float) -> float:
    """Window-length-normalized variant of the bumpless metric (10 s rms difference)."""
    e = np.asarray(e, dtype=float)
    return windowed_rms(e, dt, t_a, t_a + 10.0) - windowed_rms(e, dt, t_a - 10.0, t_a)


def gamma_metric(e_i: np.ndarray, dt: float, t_a1: float, T: float) -> tuple[float, float, float]:
    """(gamma, RMSE-, RMSE+): post-anomaly minus pre-anomaly windowed rms of one output."""
    e_i = np.asarray(e_i, dtype=float)
    rmse_minus = windowed_rms(e_i, dt, 0.0, t_a1)
    rmse_plus = windowed_rms(e_i, dt, t_a1, T)
    return rmse_plus - rmse_minus, rmse_minus, rmse_plus


@dataclass
class MetricsReport:
    """All scalar metrics for one run; fields not applicable to the run family are None."""

    family: Optional[str] = None
    variant: Optional[str] = None
    e_rms: Optional[float] = None
    cfm: Optional[float] = None
    cfm_r: Optional[float] = None
    min_cfm: Optional[float] = None
    gcd: Optional[float] = None
    rho: Optional[float] = None
    rho_windowed: Optional[float] = None
    gamma: Optional[dict] = None
    rmse_minus: Optional[dict] = None
    rmse_plus: Optional[dict] = None
    t_rt: Optional[float] = None
    t_trt: Optional[float] = None
    t_trigger: Optional[float] = None
    windows: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)

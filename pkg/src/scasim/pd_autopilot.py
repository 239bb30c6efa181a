"""Fixed-gain PD autopilot for nominal tracking of the SISO plant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SynthesisError


def closed_loop_roots(kp: float, kr: float, num, den) -> np.ndarray:
    """Roots of den(s) - (kp + kr s) num(s): the loop u = kp (M - M_cmd) + kr M'."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    fb = np.polymul([kr, kp], num)
    char = np.polysub(den, fb)
    return np.roots(char)


@dataclass
class PdGains:
    """u = K_p (M - M_cmd) + K_r M'. Stability on the given nominal plant is checked."""

    kp: float
    kr: float
    num: tuple = (1.0,)
    den: tuple = (1.0, 10.0, 0.0)

    def __post_init__(self):
        roots = closed_loop_roots(self.kp, self.kr, self.num, self.den)
        if np.max(roots.real) >= 0:
            raise SynthesisError(
                f"PD gains do not stabilize the nominal plant, roots {np.sort(roots.real)}"
            )


def synthesize_pd(a: float, zeta: float = 0.7, wn: float = 2.0) -> PdGains:
    """Gains for Y_p = 1/(s(s+a)) placing the closed loop at damping zeta, frequency wn."""
    if a <= 0 or zeta <= 0 or wn <= 0:
        raise ContractError("a, zeta and wn must be positive")
    kp = -wn * wn
    kr = a - 2.0 * zeta * wn
    return PdGains(kp=kp, kr=kr, num=(1.0,), den=(1.0, a, 0.0))


def pd_control(gains: PdGains, M: float, M_cmd: float, M_dot: float) -> float:
    for v in (M, M_cmd, M_dot):
        if not np.isfinite(v):
            raise ContractError("PD inputs must be finite")
    return gains.kp * (M - M_cmd) + gains.kr * M_dot

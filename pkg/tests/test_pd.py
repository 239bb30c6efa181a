"""PD autopilot synthesis and behavior."""

import cmath

import numpy as np
import pytest

from scasim.dynamics import TransferFunctionPlant
from scasim.errors import SynthesisError
from scasim.pd_autopilot import PdGains, closed_loop_roots, pd_control, synthesize_pd


def test_zero_error_zero_output():
    g = synthesize_pd(10.0)
    assert pd_control(g, 1.5, 1.5, 0.0) == 0.0


def test_direct_substitution():
    g = PdGains(kp=-1.0, kr=0.0, num=(1.0,), den=(1.0, 10.0, 0.0))
    assert pd_control(g, 2.0, 0.0, 0.0) == -2.0


def test_synthesis_places_target_poles():
    g = synthesize_pd(10.0, zeta=0.7, wn=2.0)
    roots = closed_loop_roots(g.kp, g.kr, g.num, g.den)
    target = np.roots([1.0, 2.0 * 0.7 * 2.0, 4.0])
    np.testing.assert_allclose(sorted(roots.real), sorted(target.real), atol=1e-10)


def test_all_roots_left_half_plane():
    for a in (5.0, 7.0, 10.0):
        g = synthesize_pd(a)
        roots = closed_loop_roots(g.kp, g.kr, g.num, g.den)
        assert np.max(roots.real) < 0


def test_unstable_gains_rejected():
    with pytest.raises(SynthesisError):
        PdGains(kp=1.0, kr=0.0, num=(1.0,), den=(1.0, 10.0, 0.0))


def test_superposition():
    g = synthesize_pd(10.0)
    a = pd_control(g, 1.0, 0.3, 0.2)
    b = pd_control(g, -0.5, 0.1, -0.7)
    both = pd_control(g, 0.5, 0.4, -0.5)
    assert both == pytest.approx(a + b, abs=1e-12)


def test_tracking_error_matches_frequency_response():
    """Steady sinusoid tracking error amplitude vs the analytic closed-loop response."""
    a, w = 10.0, 0.25
    g = synthesize_pd(a)
    dt = 0.01
    plant = TransferFunctionPlant((1.0,), (1.0, a, 0.0), 0.0, dt=dt)
    errs, ts = [], []
    t = 0.0
    for i in range(12000):
        m_cmd = 0.5 * np.sin(w * t)
        e = m_cmd - plant.output
        u = pd_control(g, plant.output, m_cmd, plant.output_deriv)
        plant.step(u)
        t += dt
        if t > 60.0:
            errs.append(e)
    amp_sim = (max(errs) - min(errs)) / 2.0
    s = 1j * w
    yp = 1.0 / (s * (s + a))
    h = -g.kp * yp / (1.0 - (g.kp + g.kr * s) * yp)
    amp_exact = 0.5 * abs(1.0 - h)
    assert amp_sim == pytest.approx(amp_exact, rel=0.02)
    # low-frequency tracking stays tight on the nominal plant
    assert amp_sim < 0.1

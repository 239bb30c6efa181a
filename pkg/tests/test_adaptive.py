"""Adaptive-control synthesis and law behavior."""

import numpy as np
import pytest

from scasim.adaptive import (
    AdaptiveGains,
    MuModConfig,
    PilotDirectives,
    ReferenceModel,
    compute_u_ad,
    crm_step,
    gain_derivatives,
    is_hurwitz,
    lqr_gain,
    match_anomaly,
    match_nominal,
    mu_mod_limit,
    solve_lyapunov,
    update_gains,
)
from scasim.errors import ContractError, SynthesisError


def random_hurwitz(rng, n):
    """-SPD + skew construction: numerical range in the open left half plane."""
    M = rng.normal(size=(n, n))
    spd = M @ M.T + n * np.eye(n)
    S = rng.normal(size=(n, n))
    return -spd + (S - S.T)


def make_gains(n=4, m=2, k=2, p=2, gamma=10.0, P=None, rng=None):
    if P is None:
        P = np.eye(n)
    if rng is None:
        K_x, K_r, K_u = np.zeros((n, m)), np.zeros((k, m)), np.zeros((m, k))
        d_hat, Phi_hat = np.zeros(m), np.zeros((p, m))
    else:
        K_x, K_r, K_u = rng.normal(size=(n, m)), rng.normal(size=(k, m)), rng.normal(size=(m, k))
        d_hat, Phi_hat = rng.normal(size=m), rng.normal(size=(p, m))
    return AdaptiveGains(
        K_x=K_x, K_r=K_r, K_u=K_u, d_hat=d_hat, Phi_hat=Phi_hat,
        Gamma_x=gamma * np.eye(n), Gamma_r=gamma * np.eye(k), Gamma_u=gamma * np.eye(m),
        Gamma_d=gamma * np.eye(m), Gamma_f=gamma * np.eye(p), P=P,
    )


class TestComputeUad:
    def test_all_zero(self):
        g = make_gains()
        u = compute_u_ad(g, np.ones(4), np.ones(2), np.ones(2))
        assert np.all(u == 0.0)

    def test_feedforward_passthrough(self):
        g = make_gains()
        g.K_r = np.eye(2)
        r0 = np.array([0.4, -1.2])
        np.testing.assert_allclose(compute_u_ad(g, np.zeros(4), r0, np.zeros(2)), r0)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(7)
        g = make_gains(rng=rng)
        x, r0, fx = rng.normal(size=4), rng.normal(size=2), rng.normal(size=2)
        u = compute_u_ad(g, x, r0, fx)
        for i in range(2):
            expected = g.d_hat[i]
            expected += sum(g.K_x[j, i] * x[j] for j in range(4))
            expected += sum(g.K_r[j, i] * r0[j] for j in range(2))
            expected += sum(g.Phi_hat[j, i] * fx[j] for j in range(2))
            assert u[i] == pytest.approx(expected, abs=1e-12)


class TestMuMod:
    def setup_method(self):
        self.u_max = np.array([3.0])
        self.lim = 2.25  # (1 - 0.25) * 3

    def test_mu_zero_is_identity(self):
        cfg = MuModConfig(mu=0.0, delta=0.25, u_max=self.u_max)
        assert mu_mod_limit([3.0], cfg)[0] == 3.0

    def test_mu_one(self):
        cfg = MuModConfig(mu=1.0, delta=0.25, u_max=self.u_max)
        assert mu_mod_limit([3.0], cfg)[0] == pytest.approx((3.0 + 2.25) / 2.0)

    def test_mu_infinity_limit(self):
        cfg = MuModConfig(mu=1e12, delta=0.25, u_max=self.u_max)
        assert mu_mod_limit([3.0], cfg)[0] == pytest.approx(2.25, abs=1e-9)

    def test_interior_untouched(self):
        cfg = MuModConfig(mu=5.0, delta=0.25, u_max=self.u_max)
        assert mu_mod_limit([2.0], cfg)[0] == 2.0

    def test_strict_monotonicity_in_buffer(self):
        mus = np.linspace(0.0, 40.0, 20)
        outs = [
            mu_mod_limit([3.0], MuModConfig(mu=m, delta=0.25, u_max=self.u_max))[0]
            for m in mus
        ]
        assert all(b < a for a, b in zip(outs, outs[1:]))
        assert all(o >= 2.25 for o in outs)

    def test_negative_channel(self):
        cfg = MuModConfig(mu=1.0, delta=0.25, u_max=self.u_max)
        assert mu_mod_limit([-3.0], cfg)[0] == pytest.approx(-(3.0 + 2.25) / 2.0)


class TestCrm:
    def test_reduces_to_open_loop_reference(self):
        A_m = -np.eye(2)
        B_m = np.eye(2)
        ref_closed = ReferenceModel(A_m=A_m, B_m=B_m, L=-5.0, x_m=np.array([1.0, 0.0]))
        ref_open = ReferenceModel(A_m=A_m, B_m=B_m, L=0.0, x_m=np.array([1.0, 0.0]))
        r0 = np.array([0.5, -0.5])
        K_u = np.zeros((2, 2))
        # e = 0 and du = 0: the L term drops, both models advance identically
        a = crm_step(ref_closed, r0, K_u, np.zeros(2), np.zeros(2), 0.01)
        b = crm_step(ref_open, r0, K_u, np.zeros(2), np.zeros(2), 0.01)
        np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_saturation_degrades_reference(self):
        A_m = -np.eye(2)
        B_m = np.eye(2)
        K_u = np.eye(2)
        r0 = np.array([1.0, 1.0])
        nominal = ReferenceModel(A_m=A_m, B_m=B_m, L=-1.0)
        degraded = ReferenceModel(A_m=A_m, B_m=B_m, L=-1.0)
        for _ in range(200):
            crm_step(nominal, r0, K_u, np.zeros(2), np.zeros(2), 0.01)
            crm_step(degraded, r0, K_u, np.array([-0.4, 0.0]), np.zeros(2), 0.01)
        diff = np.linalg.norm(nominal.x_m - degraded.x_m)
        assert diff > 1e-3


class TestUpdateGains:
    def test_zero_error_freezes(self):
        rng = np.random.default_rng(3)
        g = make_gains(rng=rng)
        before = {k: getattr(g, k).copy() for k in ("K_x", "K_r", "K_u", "d_hat", "Phi_hat")}
        update_gains(
            g, rng.normal(size=4), rng.normal(size=2), rng.normal(size=2),
            rng.normal(size=2), np.zeros(4), rng.normal(size=(4, 2)), rng.normal(size=(4, 2)),
            dt=0.01,
        )
        for k, v in before.items():
            np.testing.assert_array_equal(getattr(g, k), v)

    def test_only_bias_terms_update(self):
        g = make_gains()
        e = np.array([1.0, -1.0, 0.5, 0.0])
        B = np.ones((4, 2))
        fx = np.array([0.3, -0.7])  # regressor value at x = 0
        update_gains(g, np.zeros(4), np.zeros(2), fx, np.zeros(2), e, B, B, dt=0.01)
        assert np.all(g.K_x == 0.0)
        assert np.all(g.K_r == 0.0)
        assert np.all(g.K_u == 0.0)
        assert np.any(g.d_hat != 0.0)
        assert np.any(g.Phi_hat != 0.0)

    def test_single_step_outer_product_oracle(self):
        rng = np.random.default_rng(11)
        n, m, k, p = 4, 2, 2, 2
        P = np.eye(n) + 0.1 * np.ones((n, n))
        P = 0.5 * (P + P.T)
        g = make_gains(P=P, rng=rng)
        x, r0, fx = rng.normal(size=n), rng.normal(size=k), rng.normal(size=p)
        du, e = rng.normal(size=m), rng.normal(size=n)
        B, B_m = rng.normal(size=(n, m)), rng.normal(size=(n, k))
        dK_x, dK_r, dK_u, dd, dPhi = gain_derivatives(g, x, r0, fx, du, e, B, B_m)
        epb = np.array([sum(e[a] * P[a, b] * B[b, j] for a in range(n) for b in range(n)) for j in range(m)])
        epbm = np.array([sum(e[a] * P[a, b] * B_m[b, j] for a in range(n) for b in range(n)) for j in range(k)])
        for i in range(n):
            for j in range(m):
                expected = -sum(g.Gamma_x[i, a] * x[a] * epb[j] for a in range(n))
                assert dK_x[i, j] == pytest.approx(expected, abs=1e-12)
        for i in range(k):
            for j in range(m):
                expected = -sum(g.Gamma_r[i, a] * r0[a] * epb[j] for a in range(k))
                assert dK_r[i, j] == pytest.approx(expected, abs=1e-12)
        for i in range(m):
            for j in range(k):
                expected = sum(g.Gamma_u[i, a] * du[a] * epbm[j] for a in range(m))
                assert dK_u[i, j] == pytest.approx(expected, abs=1e-12)
        for i in range(m):
            expected = -sum(g.Gamma_d[i, a] * epb[a] for a in range(m))
            assert dd[i] == pytest.approx(expected, abs=1e-12)
        for i in range(p):
            for j in range(m):
                expected = -sum(g.Gamma_f[i, a] * fx[a] * epb[j] for a in range(p))
                assert dPhi[i, j] == pytest.approx(expected, abs=1e-12)


class TestLyapunov:
    def test_identity_case(self):
        P = solve_lyapunov(-np.eye(2), 2.0 * np.eye(2))
        np.testing.assert_allclose(P, np.eye(2), atol=1e-12)

    def test_scalar_closed_form(self):
        a, q = 3.0, 5.0
        P = solve_lyapunov(np.array([[-a]]), np.array([[q]]))
        assert P[0, 0] == pytest.approx(q / (2 * a), rel=1e-12)

    def test_random_residuals(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = rng.integers(2, 6)
            A_m = random_hurwitz(rng, n)
            Q = np.eye(n)
            P = solve_lyapunov(A_m, Q)
            res = np.linalg.norm(A_m.T @ P + P @ A_m + Q)
            assert res <= 1e-8 * np.linalg.norm(Q)
            assert np.min(np.linalg.eigvalsh(P)) > 0

    def test_not_hurwitz_reports_eigs(self):
        with pytest.raises(SynthesisError, match="eigenvalues"):
            solve_lyapunov(np.eye(2), np.eye(2))


class TestLqr:
    def test_scalar(self):
        K = lqr_gain(np.array([[0.0]]), np.array([[1.0]]), np.eye(1), np.eye(1))
        assert K[0, 0] == pytest.approx(-1.0, rel=1e-10)

    def test_closed_loop_hurwitz_and_residual(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            n, m = 4, 2
            A = rng.normal(size=(n, n))
            B = rng.normal(size=(n, m))
            K = lqr_gain(A, B, np.eye(n), np.eye(m))
            assert is_hurwitz(A + B @ K.T)


class TestMatching:
    def test_scalar_case(self):
        A = np.array([[-1.0]])
        B = np.array([[1.0]])
        A_m, B_m, K_r0, K_u0 = match_nominal(A, B, np.zeros((1, 1)), np.eye(1))
        assert K_r0[0, 0] == pytest.approx(1.0)
        assert B_m[0, 0] == pytest.approx(1.0)
        assert K_u0[0, 0] == pytest.approx(1.0)

    def test_dc_tracking(self):
        rng = np.random.default_rng(21)
        n, m = 4, 2
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        C = np.zeros((m, n))
        C[0, 0] = 1.0
        C[1, 3] = 1.0
        K_x0 = lqr_gain(A, B, np.eye(n), np.eye(m))
        A_m, B_m, K_r0, K_u0 = match_nominal(A, B, K_x0, C)
        r0 = np.array([0.7, -0.3])
        ref = ReferenceModel(A_m=A_m, B_m=B_m, L=0.0)
        for _ in range(40000):
            crm_step(ref, r0, K_u0, np.zeros(m), np.zeros(n), 0.01)
        np.testing.assert_allclose(C @ ref.x_m, r0, atol=1e-6)

    def test_dc_gain_identity_oracle(self):
        rng = np.random.default_rng(33)
        n, m = 4, 2
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        C = rng.normal(size=(m, n))
        K_x0 = lqr_gain(A, B, np.eye(n), np.eye(m))
        A_m, B_m, _, _ = match_nominal(A, B, K_x0, C)
        dc = C @ np.linalg.solve(-A_m, B_m)  # frequency response at w = 0
        np.testing.assert_allclose(dc, np.eye(m), atol=1e-10)

    def test_ku_injects_input_deficit(self):
        # B_m K_u^T du must equal B du: the reference degrades by the physical shortfall
        rng = np.random.default_rng(41)
        n, m = 4, 2
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        C = np.vstack([np.eye(m), np.zeros((n - m, m))]).T
        K_x0 = lqr_gain(A, B, np.eye(n), np.eye(m))
        _, B_m, _, K_u0 = match_nominal(A, B, K_x0, C)
        du = rng.normal(size=m)
        np.testing.assert_allclose(B_m @ (K_u0.T @ du), B @ du, atol=1e-10)

    def test_anomaly_identity_reduction(self):
        rng = np.random.default_rng(55)
        n, m = 4, 2
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        C = np.zeros((m, n))
        C[0, 1], C[1, 2] = 1.0, 1.0
        K_x0 = lqr_gain(A, B, np.eye(n), np.eye(m))
        nom = match_nominal(A, B, K_x0, C)
        anom = match_anomaly(A, B, np.ones(m), K_x0, C)
        for a, b in zip(nom, anom):
            np.testing.assert_array_equal(a, b)

    def test_anomaly_scalar_kr_doubles(self):
        A = np.array([[-1.0]])
        B = np.array([[1.0]])
        _, _, K_r_nom, _ = match_nominal(A, B, np.zeros((1, 1)), np.eye(1))
        _, _, K_r_half, _ = match_anomaly(A, B, [0.5], np.zeros((1, 1)), np.eye(1))
        assert K_r_half[0, 0] == pytest.approx(2.0 * K_r_nom[0, 0])

    def test_lambda_hat_validation(self):
        with pytest.raises(ContractError):
            match_anomaly(np.eye(2), np.eye(2), [0.0, 0.5], np.zeros((2, 2)), np.eye(2))


class TestPilotDirectives:
    def test_range(self):
        PilotDirectives(mu=1)
        PilotDirectives(mu=20)
        with pytest.raises(ContractError):
            PilotDirectives(mu=0)
        with pytest.raises(ContractError):
            PilotDirectives(mu=25)

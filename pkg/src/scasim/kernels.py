"""Hot closed-loop stepping kernels. All functions are numba-jitted unless the
SCASIM_NUMBA=0 fallback is active, in which case the identical code runs under
CPython. Kernels use explicit scalar loops so both backends execute the same
arithmetic in the same order."""

import math

import numpy as np

from ._accel import njit

# chunk return reasons
REASON_END = 0  # reached requested boundary
REASON_DONE = 1  # final log row written
REASON_TRIGGER = 2  # perception trigger latched this step
REASON_FAULT = 3  # non-finite state detected

# --- SCA1 index maps -------------------------------------------------------
I1_STEP = 0
I1_NTOTAL = 1
I1_ND = 2  # plant input delay steps
I1_RINGPOS = 3
I1_NH = 4  # pilot input delay steps
I1_HRINGPOS = 5
I1_ACTIVE = 6  # 0 autopilot, 1 synthetic pilot, 2 human stick
I1_PERC = 7
I1_TRIG_EN = 8
I1_KT = 9
I1_TRIGSTEP = 10
I1_CSQ_COUNT = 11
I1_CSQ_POS = 12
I1_WINDOW = 13
I1_ARM_STEP = 14

F1_DT = 0
F1_UMAX = 1
F1_KP = 2
F1_KR = 3
F1_MUP = 4
F1_SIGP = 5
F1_CSQSUM = 6
F1_PREVCFMR = 7
F1_STICK = 8
F1_PILOT_D = 9
F1_RATE_MAX = 10  # <= 0 disables rate limiting
F1_UPREV = 11

# SCA1 log columns
C1_T = 0
C1_M = 1
C1_MDOT = 2
C1_MCMD = 3
C1_E = 4
C1_URAW = 5
C1_U = 6
C1_C = 7
C1_F = 8
C1_F0 = 9
C1_KT = 10
C1_ACTIVE = 11
C1_V = 12
SCA1_COLS = 13
SCA1_COLUMN_NAMES = (
    "t", "M", "Mdot", "Mcmd", "e", "u_raw", "u", "c", "F", "F0", "kt", "active", "v",
)

# --- SCA2 index maps -------------------------------------------------------
I2_STEP = 0
I2_NTOTAL = 1
I2_REG = 2
I2_MUMOD = 3
I2_USEKU = 4
I2_USEL = 5
I2_ADAPT = 6

F2_DT = 0
F2_MU = 1
F2_DELTA = 2


@njit(cache=True)
def _cmd_eval(amp, w, ph, t):
    s = 0.0
    for j in range(amp.size):
        s += amp[j] * math.sin(w[j] * t + ph[j])
    return s


@njit(cache=True)
def _sca1_stage(
    t, xi_p, xi_h, xi_g, u_held, e_held,
    plant_A, plant_b, plant_c,
    pilot_A, pilot_b, pilot_c, pilot_d,
    gnm_A, gnm_b, gnm_c,
    cmd_amp, cmd_w, cmd_ph,
    nd, nh, active, stick, kp, kr, u_max, du_max, u_prev,
):
    n_p = xi_p.size
    n_h = xi_h.size
    M = 0.0
    for a in range(n_p):
        M += plant_c[a] * xi_p[a]
    Mdot = 0.0
    for a in range(n_p):
        s = 0.0
        for b in range(n_p):
            s += plant_A[a, b] * xi_p[b]
        Mdot += plant_c[a] * s
    Mcmd = _cmd_eval(cmd_amp, cmd_w, cmd_ph, t)
    dxi_h = np.zeros(n_h)
    dxi_g = np.zeros(2)
    v = 0.0
    if active == 0:
        u_raw = kp * (M - Mcmd) + kr * Mdot
    elif active == 2:
        u_raw = stick
    else:
        e_in = e_held if nh > 0 else (Mcmd - M)
        yh = pilot_d * e_in
        for a in range(n_h):
            yh += pilot_c[a] * xi_h[a]
        v = gnm_c[0] * xi_g[0] + gnm_c[1] * xi_g[1]
        u_raw = v
        for a in range(n_h):
            s = pilot_b[a] * e_in
            for b in range(n_h):
                s += pilot_A[a, b] * xi_h[b]
            dxi_h[a] = s
        for a in range(2):
            dxi_g[a] = gnm_A[a, 0] * xi_g[0] + gnm_A[a, 1] * xi_g[1] + gnm_b[a] * yh
    u = u_raw
    if du_max > 0.0:
        lo = u_prev - du_max
        hi = u_prev + du_max
        if u > hi:
            u = hi
        elif u < lo:
            u = lo
    if u > u_max:
        u = u_max
    elif u < -u_max:
        u = -u_max
    u_p = u_held if nd > 0 else u
    dxi_p = np.zeros(n_p)
    for a in range(n_p):
        s = plant_b[a] * u_p
        for b in range(n_p):
            s += plant_A[a, b] * xi_p[b]
        dxi_p[a] = s
    return dxi_p, dxi_h, dxi_g, u_raw, u, M, Mdot, Mcmd, v


@njit(cache=True)
def sca1_chunk(
    iv, fv,
    plant_A, plant_b, plant_c, xi_p, plant_ring,
    pilot_A, pilot_b, pilot_c, xi_h, pilot_ring,
    gnm_A, gnm_b, gnm_c, xi_g,
    g1_A, g1_b, g1_c, xi_g1,
    cmd_amp, cmd_w, cmd_ph,
    csq_ring, log, i_end,
):
    dt = fv[F1_DT]
    u_max = fv[F1_UMAX]
    i = iv[I1_STEP]
    reason = REASON_END
    while i < i_end:
        t = i * dt
        nd = iv[I1_ND]
        nh = iv[I1_NH]
        active = iv[I1_ACTIVE]
        u_held = plant_ring[iv[I1_RINGPOS] % nd] if nd > 0 else 0.0
        e_held = pilot_ring[iv[I1_HRINGPOS] % nh] if nh > 0 else 0.0
        stick = fv[F1_STICK]
        kp = fv[F1_KP]
        kr = fv[F1_KR]
        pd_ = fv[F1_PILOT_D]
        du_max = fv[F1_RATE_MAX] * dt
        u_prev = fv[F1_UPREV]

        dp1, dh1, dg1, u_raw, u, M, Mdot, Mcmd, v = _sca1_stage(
            t, xi_p, xi_h, xi_g, u_held, e_held,
            plant_A, plant_b, plant_c, pilot_A, pilot_b, pilot_c, pd_,
            gnm_A, gnm_b, gnm_c, cmd_amp, cmd_w, cmd_ph,
            nd, nh, active, stick, kp, kr, u_max, du_max, u_prev,
        )
        fv[F1_UPREV] = u
        c = 1.0 - abs(u) / u_max

        F = 0.0
        if iv[I1_PERC] == 1:
            W = iv[I1_WINDOW]
            pos = iv[I1_CSQ_POS]
            cnt = iv[I1_CSQ_COUNT]
            if cnt >= W:
                fv[F1_CSQSUM] -= csq_ring[pos]
            else:
                iv[I1_CSQ_COUNT] = cnt + 1
            csq_ring[pos] = c * c
            fv[F1_CSQSUM] += c * c
            iv[I1_CSQ_POS] = (pos + 1) % W
            ssum = fv[F1_CSQSUM]
            if ssum < 0.0:
                ssum = 0.0
            cfmr = math.sqrt(ssum / iv[I1_CSQ_COUNT])
            if i == 0:
                dmon = 0.0
            else:
                dmon = abs(cfmr - fv[F1_PREVCFMR]) / dt
            fv[F1_PREVCFMR] = cfmr
            F = (dmon - fv[F1_MUP]) / (3.0 * fv[F1_SIGP])

        F0 = g1_c[0] * xi_g1[0] + g1_c[1] * xi_g1[1]
        log[i, C1_T] = t
        log[i, C1_M] = M
        log[i, C1_MDOT] = Mdot
        log[i, C1_MCMD] = Mcmd
        log[i, C1_E] = Mcmd - M
        log[i, C1_URAW] = u_raw
        log[i, C1_U] = u
        log[i, C1_C] = c
        log[i, C1_F] = F
        log[i, C1_F0] = F0
        log[i, C1_KT] = iv[I1_KT]
        log[i, C1_ACTIVE] = active
        log[i, C1_V] = v

        if i == iv[I1_NTOTAL] - 1:
            i += 1
            reason = REASON_DONE
            break

        n_p = xi_p.size
        n_h = xi_h.size
        x2p = np.empty(n_p)
        x2h = np.empty(n_h)
        x2g = np.empty(2)
        for a in range(n_p):
            x2p[a] = xi_p[a] + 0.5 * dt * dp1[a]
        for a in range(n_h):
            x2h[a] = xi_h[a] + 0.5 * dt * dh1[a]
        for a in range(2):
            x2g[a] = xi_g[a] + 0.5 * dt * dg1[a]
        dp2, dh2, dg2, _, _, _, _, _, _ = _sca1_stage(
            t + 0.5 * dt, x2p, x2h, x2g, u_held, e_held,
            plant_A, plant_b, plant_c, pilot_A, pilot_b, pilot_c, pd_,
            gnm_A, gnm_b, gnm_c, cmd_amp, cmd_w, cmd_ph,
            nd, nh, active, stick, kp, kr, u_max, du_max, u_prev,
        )
        for a in range(n_p):
            x2p[a] = xi_p[a] + 0.5 * dt * dp2[a]
        for a in range(n_h):
            x2h[a] = xi_h[a] + 0.5 * dt * dh2[a]
        for a in range(2):
            x2g[a] = xi_g[a] + 0.5 * dt * dg2[a]
        dp3, dh3, dg3, _, _, _, _, _, _ = _sca1_stage(
            t + 0.5 * dt, x2p, x2h, x2g, u_held, e_held,
            plant_A, plant_b, plant_c, pilot_A, pilot_b, pilot_c, pd_,
            gnm_A, gnm_b, gnm_c, cmd_amp, cmd_w, cmd_ph,
            nd, nh, active, stick, kp, kr, u_max, du_max, u_prev,
        )
        for a in range(n_p):
            x2p[a] = xi_p[a] + dt * dp3[a]
        for a in range(n_h):
            x2h[a] = xi_h[a] + dt * dh3[a]
        for a in range(2):
            x2g[a] = xi_g[a] + dt * dg3[a]
        dp4, dh4, dg4, _, _, _, _, _, _ = _sca1_stage(
            t + dt, x2p, x2h, x2g, u_held, e_held,
            plant_A, plant_b, plant_c, pilot_A, pilot_b, pilot_c, pd_,
            gnm_A, gnm_b, gnm_c, cmd_amp, cmd_w, cmd_ph,
            nd, nh, active, stick, kp, kr, u_max, du_max, u_prev,
        )
        sixth = dt / 6.0
        for a in range(n_p):
            xi_p[a] += sixth * (dp1[a] + 2.0 * dp2[a] + 2.0 * dp3[a] + dp4[a])
        for a in range(n_h):
            xi_h[a] += sixth * (dh1[a] + 2.0 * dh2[a] + 2.0 * dh3[a] + dh4[a])
        for a in range(2):
            xi_g[a] += sixth * (dg1[a] + 2.0 * dg2[a] + 2.0 * dg3[a] + dg4[a])

        fault = False
        for a in range(n_p):
            if not math.isfinite(xi_p[a]):
                fault = True

        trigger_fired = False
        if iv[I1_PERC] == 1:
            g1 = np.empty(2)
            g2 = np.empty(2)
            g3 = np.empty(2)
            g4 = np.empty(2)
            for a in range(2):
                g1[a] = g1_A[a, 0] * xi_g1[0] + g1_A[a, 1] * xi_g1[1] + g1_b[a] * F
            for a in range(2):
                g2[a] = (
                    g1_A[a, 0] * (xi_g1[0] + 0.5 * dt * g1[0])
                    + g1_A[a, 1] * (xi_g1[1] + 0.5 * dt * g1[1])
                    + g1_b[a] * F
                )
            for a in range(2):
                g3[a] = (
                    g1_A[a, 0] * (xi_g1[0] + 0.5 * dt * g2[0])
                    + g1_A[a, 1] * (xi_g1[1] + 0.5 * dt * g2[1])
                    + g1_b[a] * F
                )
            for a in range(2):
                g4[a] = (
                    g1_A[a, 0] * (xi_g1[0] + dt * g3[0])
                    + g1_A[a, 1] * (xi_g1[1] + dt * g3[1])
                    + g1_b[a] * F
                )
            for a in range(2):
                xi_g1[a] += sixth * (g1[a] + 2.0 * g2[a] + 2.0 * g3[a] + g4[a])
            f0n = g1_c[0] * xi_g1[0] + g1_c[1] * xi_g1[1]
            if iv[I1_TRIG_EN] == 1 and iv[I1_KT] == 0 and abs(f0n) >= 1.0 and i + 1 >= iv[I1_ARM_STEP]:
                iv[I1_KT] = 1
                iv[I1_TRIGSTEP] = i + 1
                trigger_fired = True

        if nd > 0:
            plant_ring[iv[I1_RINGPOS] % nd] = u
            iv[I1_RINGPOS] += 1
        if nh > 0:
            pilot_ring[iv[I1_HRINGPOS] % nh] = Mcmd - M
            iv[I1_HRINGPOS] += 1
        i += 1
        if fault:
            reason = REASON_FAULT
            break
        if trigger_fired:
            reason = REASON_TRIGGER
            break
    iv[I1_STEP] = i
    return reason


@njit(cache=True)
def _regressor_eval(x, reg_id, out):
    if reg_id == 1:
        a = x[1]
        den = 1.0 + a * a
        out[0] = a * abs(a) / den
        out[1] = a * a * a / (den * den)


@njit(cache=True)
def _r0_eval(t, knots_t, knots_v, out):
    nk = knots_t.size
    k = out.size
    if t <= knots_t[0]:
        for j in range(k):
            out[j] = knots_v[0, j]
        return
    if t >= knots_t[nk - 1]:
        for j in range(k):
            out[j] = knots_v[nk - 1, j]
        return
    lo = 0
    for idx in range(nk - 1):
        if t < knots_t[idx + 1]:
            lo = idx
            break
    t0 = knots_t[lo]
    t1 = knots_t[lo + 1]
    a = (t - t0) / (t1 - t0)
    for j in range(k):
        out[j] = knots_v[lo, j] * (1.0 - a) + knots_v[lo + 1, j] * a


@njit(cache=True)
def sca2_chunk(
    iv, fv,
    A, B, d_vec, Phi, Am, Bm, L, P, C,
    Gx, Gr, Gu, Gd, Gf, lam, u_max, lamhat,
    x, xm, Kx, Kr, Ku, dhat, Phihat,
    knots_t, knots_v, log, i_end,
):
    dt = fv[F2_DT]
    n = x.size
    m = u_max.size
    k = Bm.shape[1]
    p = Phihat.shape[0]
    reg_id = iv[I2_REG]
    # log column offsets: t | x | xm | r0 | y | e | u_ad | u_c | u | cmin mu lam | lamhat | active
    o_x = 1
    o_xm = o_x + n
    o_r0 = o_xm + n
    o_y = o_r0 + k
    o_e = o_y + k
    o_uad = o_e + k
    o_uc = o_uad + m
    o_u = o_uc + m
    o_cmin = o_u + m
    o_mu = o_cmin + 1
    o_lam = o_mu + 1
    o_lamhat = o_lam + 1
    o_active = o_lamhat + m

    i = iv[I2_STEP]
    reason = REASON_END

    r0 = np.empty(k)
    fx = np.empty(max(p, 1))
    u_ad = np.empty(m)
    u_c = np.empty(m)
    u = np.empty(m)
    du = np.empty(m)
    e = np.empty(n)
    epb = np.empty(m)
    epbm = np.empty(k)
    xs = np.empty(n)
    xms = np.empty(n)
    dx_a = np.empty((4, n))
    dxm_a = np.empty((4, n))
    aKx = np.zeros((n, m))
    aKr = np.zeros((k, m))
    aKu = np.zeros((m, k))
    adh = np.zeros(m)
    aPh = np.zeros((max(p, 1), m))

    while i < i_end:
        t = i * dt
        mu = fv[F2_MU]
        delta = fv[F2_DELTA]
        use_mumod = iv[I2_MUMOD] == 1
        use_ku = iv[I2_USEKU] == 1
        use_l = iv[I2_USEL] == 1
        adapt = iv[I2_ADAPT] == 1

        if adapt:
            for a in range(n):
                for b in range(m):
                    aKx[a, b] = 0.0
            for a in range(k):
                for b in range(m):
                    aKr[a, b] = 0.0
            for a in range(m):
                for b in range(k):
                    aKu[a, b] = 0.0
            for a in range(m):
                adh[a] = 0.0
            for a in range(p):
                for b in range(m):
                    aPh[a, b] = 0.0

        for stage in range(4):
            if stage == 0:
                ts = t
                for a in range(n):
                    xs[a] = x[a]
                    xms[a] = xm[a]
            elif stage == 1:
                ts = t + 0.5 * dt
                for a in range(n):
                    xs[a] = x[a] + 0.5 * dt * dx_a[0, a]
                    xms[a] = xm[a] + 0.5 * dt * dxm_a[0, a]
            elif stage == 2:
                ts = t + 0.5 * dt
                for a in range(n):
                    xs[a] = x[a] + 0.5 * dt * dx_a[1, a]
                    xms[a] = xm[a] + 0.5 * dt * dxm_a[1, a]
            else:
                ts = t + dt
                for a in range(n):
                    xs[a] = x[a] + dt * dx_a[2, a]
                    xms[a] = xm[a] + dt * dxm_a[2, a]

            _r0_eval(ts, knots_t, knots_v, r0)
            if p > 0:
                _regressor_eval(xs, reg_id, fx)
            for j in range(m):
                s = dhat[j]
                for a in range(n):
                    s += Kx[a, j] * xs[a]
                for a in range(k):
                    s += Kr[a, j] * r0[a]
                for a in range(p):
                    s += Phihat[a, j] * fx[a]
                u_ad[j] = s
            for j in range(m):
                lim = (1.0 - delta) * u_max[j]
                val = u_ad[j]
                if use_mumod and abs(val) > lim:
                    sgn = 1.0 if val > 0.0 else -1.0
                    val = (val + mu * sgn * lim) / (1.0 + mu)
                u_c[j] = val
                if val > u_max[j]:
                    val = u_max[j]
                elif val < -u_max[j]:
                    val = -u_max[j]
                u[j] = val
                du[j] = val - u_ad[j]
            for a in range(n):
                e[a] = xs[a] - xms[a]
            # plant derivative
            for a in range(n):
                s = d_vec[a]
                for b in range(n):
                    s += A[a, b] * xs[b]
                for b in range(m):
                    s += B[a, b] * lam[b] * u[b]
                for b in range(p):
                    s += Phi[b, a] * fx[b]
                dx_a[stage, a] = s
            # reference model derivative
            for a in range(n):
                s = 0.0
                for b in range(n):
                    s += Am[a, b] * xms[b]
                for b in range(k):
                    rterm = r0[b]
                    if use_ku:
                        for cidx in range(m):
                            rterm += Ku[cidx, b] * du[cidx]
                    s += Bm[a, b] * rterm
                if use_l:
                    for b in range(n):
                        s -= L[a, b] * e[b]
                dxm_a[stage, a] = s
            if adapt:
                wt = 2.0 if stage == 1 or stage == 2 else 1.0
                for j in range(m):
                    s = 0.0
                    for a in range(n):
                        for b in range(n):
                            s += e[a] * P[a, b] * B[b, j]
                    epb[j] = s
                for j in range(k):
                    s = 0.0
                    for a in range(n):
                        for b in range(n):
                            s += e[a] * P[a, b] * Bm[b, j]
                    epbm[j] = s
                for a in range(n):
                    for j in range(m):
                        s = 0.0
                        for b in range(n):
                            s += Gx[a, b] * xs[b]
                        aKx[a, j] += wt * (-s * epb[j])
                for a in range(k):
                    for j in range(m):
                        s = 0.0
                        for b in range(k):
                            s += Gr[a, b] * r0[b]
                        aKr[a, j] += wt * (-s * epb[j])
                for a in range(m):
                    for j in range(k):
                        s = 0.0
                        for b in range(m):
                            s += Gu[a, b] * du[b]
                        aKu[a, j] += wt * (s * epbm[j])
                for a in range(m):
                    s = 0.0
                    for b in range(m):
                        s += Gd[a, b] * epb[b]
                    adh[a] += wt * (-s)
                for a in range(p):
                    s = 0.0
                    for b in range(p):
                        s += Gf[a, b] * fx[b]
                    for j in range(m):
                        aPh[a, j] += wt * (-s * epb[j])

            if stage == 0:
                # log the pre-step snapshot with stage-1 algebraic values
                log[i, 0] = t
                for a in range(n):
                    log[i, o_x + a] = x[a]
                    log[i, o_xm + a] = xm[a]
                cmin = 1.0
                for j in range(m):
                    cj = 1.0 - abs(u[j]) / u_max[j]
                    if cj < cmin:
                        cmin = cj
                for a in range(k):
                    log[i, o_r0 + a] = r0[a]
                    y = 0.0
                    for b in range(n):
                        y += C[a, b] * x[b]
                    log[i, o_y + a] = y
                    log[i, o_e + a] = r0[a] - y
                for j in range(m):
                    log[i, o_uad + j] = u_ad[j]
                    log[i, o_uc + j] = u_c[j]
                    log[i, o_u + j] = u[j]
                log[i, o_cmin] = cmin
                log[i, o_mu] = mu
                log[i, o_lam] = lam[0]
                for j in range(m):
                    log[i, o_lamhat + j] = lamhat[j]
                log[i, o_active] = 0.0
                if i == iv[I2_NTOTAL] - 1:
                    break

        if i == iv[I2_NTOTAL] - 1:
            i += 1
            reason = REASON_DONE
            break

        sixth = dt / 6.0
        for a in range(n):
            x[a] += sixth * (dx_a[0, a] + 2.0 * dx_a[1, a] + 2.0 * dx_a[2, a] + dx_a[3, a])
            xm[a] += sixth * (dxm_a[0, a] + 2.0 * dxm_a[1, a] + 2.0 * dxm_a[2, a] + dxm_a[3, a])
        if adapt:
            for a in range(n):
                for j in range(m):
                    Kx[a, j] += sixth * aKx[a, j]
            for a in range(k):
                for j in range(m):
                    Kr[a, j] += sixth * aKr[a, j]
            for a in range(m):
                for j in range(k):
                    Ku[a, j] += sixth * aKu[a, j]
            for a in range(m):
                dhat[a] += sixth * adh[a]
            for a in range(p):
                for j in range(m):
                    Phihat[a, j] += sixth * aPh[a, j]

        fault = False
        for a in range(n):
            if not math.isfinite(x[a]) or not math.isfinite(xm[a]):
                fault = True
        i += 1
        if fault:
            reason = REASON_FAULT
            break
    iv[I2_STEP] = i
    return reason


def sca2_column_names(n: int, m: int, k: int) -> list:
    names = ["t"]
    names += [f"x{a}" for a in range(n)]
    names += [f"xm{a}" for a in range(n)]
    names += [f"r0_{a}" for a in range(k)]
    names += [f"y{a}" for a in range(k)]
    names += [f"e{a}" for a in range(k)]
    names += [f"uad{j}" for j in range(m)]
    names += [f"uc{j}" for j in range(m)]
    names += [f"u{j}" for j in range(m)]
    names += ["c", "mu", "lam"]
    names += [f"lamhat{j}" for j in range(m)]
    names += ["active"]
    return names

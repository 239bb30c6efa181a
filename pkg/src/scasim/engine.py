"""Closed-loop engines: build kernel state from a scenario config, drive the stepping
kernels between event boundaries, collect the run log. One engine instance owns one run."""

from __future__ import annotations

import math

import numpy as np

from . import kernels as K
from ._accel import BACKEND
from .adaptive import lqr_gain, match_anomaly, match_nominal, solve_lyapunov
from .dynamics import match_state, output_derivatives, realize_siso, severity_for
from .errors import ConfigError, SynthesisError
from .pilots import G1_DEN, G1_NUM, GNM_DEN, GNM_NUM, CrossoverPilot, estimate_with_error
from .runlog import RunLog, config_hash

REGRESSOR_IDS = {"none": 0, "pitch_quadratic": 1}
REGRESSOR_DIMS = {"none": 0, "pitch_quadratic": 2}


def _column_dict(log2d: np.ndarray, names, n: int) -> dict:
    return {name: np.ascontiguousarray(log2d[:n, j]) for j, name in enumerate(names)}


class _EngineBase:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.dt = float(cfg["dt"])
        self.duration = float(cfg["duration"])
        self.n_total = int(round(self.duration / self.dt)) + 1
        self.seed = int(cfg.get("seed", 0))
        self.rng = np.random.default_rng(self.seed)
        self.events: list[dict] = []
        self.actions: dict[int, list] = {}
        self.status = "idle"
        self.fault_step = None

    def _event(self, step: int, etype: str, **payload) -> dict:
        ev = {"step": int(step), "t": round(step * self.dt, 10), "type": etype}
        ev.update(payload)
        self.events.append(ev)
        return ev

    def _schedule(self, step: int, action, *args) -> None:
        self.actions.setdefault(int(step), []).append((action, args))

    def _apply_actions(self, step: int) -> None:
        while step in self.actions:
            for action, args in self.actions.pop(step):
                action(*args)

    def _next_boundary(self, i: int) -> int:
        future = [s for s in self.actions if s > i]
        return min(future) if future else self.n_total

    @property
    def step_index(self) -> int:
        raise NotImplementedError

    def chunk(self, i_end: int) -> int:
        raise NotImplementedError

    def advance_to(self, i_target: int) -> None:
        """Advance the engine to step i_target, honoring event boundaries."""
        while self.step_index < i_target and self.status not in ("complete", "faulted"):
            i = self.step_index
            self._apply_actions(i)
            boundary = min(self._next_boundary(i), i_target)
            reason = self.chunk(boundary)
            if reason == K.REASON_DONE:
                self.status = "complete"
            elif reason == K.REASON_FAULT:
                self.fault_step = self.step_index
                self._event(self.step_index, "fault")
                self.status = "faulted"
            elif reason == K.REASON_TRIGGER:
                self._on_trigger(self.step_index)

    def run(self) -> None:
        self.status = "running"
        self.advance_to(self.n_total)

    def step_once(self) -> None:
        self.advance_to(self.step_index + 1)

    def _on_trigger(self, step: int) -> None:
        pass


class Sca1Engine(_EngineBase):
    """Take-over architecture: PD autopilot, dynamics-switch anomaly, crossover pilot."""

    def __init__(self, cfg: dict):
        super().__init__(cfg)
        dt = self.dt
        plant = cfg["plant"]
        self.plant_before = (tuple(plant["num"]), tuple(plant["den"]), float(plant.get("delay", 0.0)))
        after = plant["after"]
        self.plant_after = (tuple(after["num"]), tuple(after["den"]), float(after.get("delay", 0.0)))
        self.u_max = float(cfg["actuator"]["u_max"][0])
        rate = cfg["actuator"].get("rate_max")
        self.rate_max = float(rate[0]) if rate else 0.0

        self.iv = np.zeros(16, dtype=np.int64)
        self.fv = np.zeros(16, dtype=np.float64)
        self.fv[K.F1_DT] = dt
        self.fv[K.F1_UMAX] = self.u_max
        ap = cfg["autopilot"]
        self.fv[K.F1_KP] = float(ap["kp"])
        self.fv[K.F1_KR] = float(ap["kr"])
        self.fv[K.F1_RATE_MAX] = self.rate_max

        perception = cfg.get("perception", {})
        self.perception_window = float(perception.get("window", 10.0))
        mu_p = perception.get("mu_p")
        sigma_p = perception.get("sigma_p")
        self.calibrating = mu_p is None or sigma_p is None
        self.fv[K.F1_MUP] = 0.0 if self.calibrating else float(mu_p)
        self.fv[K.F1_SIGP] = 1.0 if self.calibrating else float(sigma_p)
        self.iv[K.I1_PERC] = 1
        self.iv[K.I1_TRIG_EN] = 0 if self.calibrating else 1
        w_steps = max(1, int(round(self.perception_window / dt)))
        self.iv[K.I1_WINDOW] = w_steps
        arm = float(perception.get("arm_time", 2.0 * self.perception_window))
        self.iv[K.I1_ARM_STEP] = int(round(arm / dt))
        self.csq_ring = np.zeros(w_steps)

        self.iv[K.I1_NTOTAL] = self.n_total

        A, b, c, d0 = realize_siso(*self.plant_before[:2])
        if d0 != 0.0 or (c.size and abs(c @ b) > 1e-12):
            raise ConfigError("SCA1 plant must have relative degree >= 2")
        self.plant_A, self.plant_b, self.plant_c = A, b, c
        self.xi_p = np.zeros(A.shape[0])
        cmds = cfg["commands"]
        amp = np.asarray(cmds["amp"], dtype=float)
        w = np.asarray(cmds["omega"], dtype=float)
        ph = np.asarray(cmds.get("phase", [0.0] * amp.size), dtype=float)
        # start trimmed on the command: output and rate match M_cmd(0)
        m0 = float(np.sum(amp * np.sin(ph)))
        mdot0 = float(np.sum(amp * w * np.cos(ph)))
        self.xi_p = match_state(A, b, c, 0.0, 0.0, np.array([m0, mdot0]))
        self.plant_ring = np.zeros(1)
        self.iv[K.I1_ND] = int(round(self.plant_before[2] / dt))
        if self.iv[K.I1_ND] > 0:
            self.plant_ring = np.zeros(self.iv[K.I1_ND])

        # pilot arrays start empty; realized at engagement
        self.pilot_A = np.zeros((0, 0))
        self.pilot_b = np.zeros(0)
        self.pilot_c = np.zeros(0)
        self.xi_h = np.zeros(0)
        self.pilot_ring = np.zeros(1)
        ga, gb, gc, _ = realize_siso(GNM_NUM, GNM_DEN)
        self.gnm_A, self.gnm_b, self.gnm_c = ga, gb, gc
        self.xi_g = np.zeros(2)
        fa, fb, fc, _ = realize_siso(G1_NUM, G1_DEN)
        self.g1_A, self.g1_b, self.g1_c = fa, fb, fc
        self.xi_g1 = np.zeros(2)

        cmds = cfg["commands"]
        self.cmd_amp = np.asarray(cmds["amp"], dtype=float)
        self.cmd_w = np.asarray(cmds["omega"], dtype=float)
        self.cmd_ph = np.asarray(cmds.get("phase", [0.0] * len(cmds["amp"])), dtype=float)

        self.log2d = np.full((self.n_total, K.SCA1_COLS), np.nan)

        pilot_cfg = cfg.get("pilot", {})
        self.pilot_kind = pilot_cfg.get("kind", "none")
        self.omega_c = float(pilot_cfg.get("omega_c", 2.0))
        self.tau_e = float(pilot_cfg.get("tau_e", 0.3))
        reaction = pilot_cfg.get("reaction", {})
        mean = float(reaction.get("mean", 1.0))
        spread = float(reaction.get("spread", 0.0))
        self.t_rt = mean + (spread * (2.0 * self.rng.random() - 1.0) if spread > 0 else 0.0)
        self.identify_delay = float(pilot_cfg.get("identify_delay", 0.8))
        self.startle_hold = float(pilot_cfg.get("startle_hold", 0.7))

        anomaly = cfg.get("anomaly")
        self.t_a = None
        self.perceived_plant = "before"
        self.pilot_engaged = False
        self.trigger_step = None
        self.alert_step = None
        self.takeover_step = None
        self.stick_mode = False

        if anomaly is not None:
            self.t_a = float(anomaly["t_a"])
            step_a = int(round(self.t_a / dt))
            self._schedule(step_a, self._apply_plant_switch)
            policy = cfg.get("alert", {}).get("policy", "none")
            self.alert_policy = policy
            if policy in ("late", "exact"):
                delta_t = float(cfg["alert"]["delta_t"])
                self._schedule(int(round((self.t_a + delta_t) / dt)), self._fire_alert)
        else:
            self.alert_policy = "none"

    # --- event actions ----------------------------------------------------
    def _apply_plant_switch(self) -> None:
        i = self.step_index
        num, den, delay = self.plant_after
        A2, b2, c2, d02 = realize_siso(num, den)
        u_active = self.plant_ring[self.iv[K.I1_RINGPOS] % self.iv[K.I1_ND]] if self.iv[K.I1_ND] > 0 else (
            self.log2d[i - 1, K.C1_U] if i > 0 else 0.0
        )
        derivs = output_derivatives(
            self.plant_A, self.plant_b, self.plant_c, 0.0, self.xi_p, u_active, min(self.xi_p.size, 8)
        )
        nd2 = int(round(delay / self.dt))
        ring2 = np.zeros(max(nd2, 1))
        if nd2 > 0:
            hist = self.log2d[max(0, i - nd2) : i, K.C1_U]
            hist = hist[np.isfinite(hist)]
            if hist.size:
                ring2[nd2 - hist.size :] = hist
        u_new = ring2[0] if nd2 > 0 else u_active
        xi2 = match_state(A2, b2, c2, d02, u_new, derivs)
        self.plant_A, self.plant_b, self.plant_c = A2, b2, c2
        self.xi_p = xi2
        self.plant_ring = ring2
        self.iv[K.I1_ND] = nd2
        self.iv[K.I1_RINGPOS] = 0
        self._event(i, "anomaly", kind="dynamics_switch",
                    target={"num": [float(v) for v in num], "den": [float(v) for v in den],
                            "delay": delay},
                    severity=self.cfg.get("anomaly", {}).get("severity"))

    def _fire_alert(self) -> None:
        if self.alert_step is not None:
            return
        i = self.step_index
        self.alert_step = i
        self._event(i, "alert", policy=self.alert_policy, t_s=round(i * self.dt, 10),
                    delta_t=round(i * self.dt - (self.t_a or 0.0), 10))
        if self.pilot_kind == "crossover":
            takeover = i + max(1, int(round(self.t_rt / self.dt)))
            self._schedule(takeover, self._engage_pilot)

    def _realize(self, which: str):
        plant = self.plant_before if which == "before" else self.plant_after
        pilot = CrossoverPilot(omega_c=self.omega_c, tau_e=self.tau_e)
        return pilot.realize(*plant)

    def _engage_pilot(self) -> None:
        if self.pilot_engaged:
            return
        i = self.step_index
        self.pilot_engaged = True
        # a pilot who has perceived and assessed the anomaly takes the stick where
        # it is; a surprised pilot holds a neutral stick through the startle before
        # effective control begins
        prepared = self.perceived_plant == "after"
        self.takeover_step = i
        t_rt = i * self.dt - (self.alert_step * self.dt if self.alert_step is not None else i * self.dt)
        self._event(i, "takeover", source="synthetic", t_rt=round(t_rt, 10),
                    t_trt=round(i * self.dt - (self.t_a or 0.0), 10),
                    matched_plant=self.perceived_plant, prepared=bool(prepared))
        if prepared:
            self._begin_manual(i, handoff=True)
        else:
            self.iv[K.I1_ACTIVE] = 2
            self.fv[K.F1_STICK] = 0.0
            self._schedule(i + max(1, int(round(self.startle_hold / self.dt))), self._begin_manual)

    def _begin_manual(self, i=None, handoff=False) -> None:
        i = self.step_index if i is None else i
        real = self._realize(self.perceived_plant)
        self._install_pilot(real, i, preserve_output=False)
        if handoff and i > 0:
            u_prev = float(self.log2d[i - 1, K.C1_U])
            self.xi_g = np.linalg.solve(
                np.vstack([self.gnm_c, self.gnm_c @ self.gnm_A]), np.array([u_prev, 0.0])
            )
        self.iv[K.I1_ACTIVE] = 1

    def _install_pilot(self, real, i: int, preserve_output: bool) -> None:
        nh = int(round(real.tau_h / self.dt))
        ring = np.zeros(max(nh, 1))
        if nh > 0:
            hist = self.log2d[max(0, i - nh) : i, K.C1_E]
            hist = hist[np.isfinite(hist)]
            if hist.size:
                ring[nh - hist.size :] = hist
        e_new = ring[0] if nh > 0 else (self.log2d[i - 1, K.C1_E] if i > 0 else 0.0)
        if preserve_output:
            e_old = (
                self.pilot_ring[self.iv[K.I1_HRINGPOS] % self.iv[K.I1_NH]]
                if self.iv[K.I1_NH] > 0
                else (self.log2d[i - 1, K.C1_E] if i > 0 else 0.0)
            )
            y_derivs = output_derivatives(
                self.pilot_A, self.pilot_b, self.pilot_c, self.fv[K.F1_PILOT_D],
                self.xi_h, e_old, max(real.A.shape[0], 1),
            )
            xi_new = match_state(real.A, real.b, real.c, real.d0, e_new, y_derivs) if real.A.shape[0] else np.zeros(0)
        else:
            xi_new = np.zeros(real.A.shape[0])
        self.pilot_A = real.A
        self.pilot_b = real.b
        self.pilot_c = real.c
        self.fv[K.F1_PILOT_D] = real.d0
        self.xi_h = xi_new
        self.pilot_ring = ring
        self.iv[K.I1_NH] = nh
        self.iv[K.I1_HRINGPOS] = 0
        self._event(i, "pilot_realized", plant=self.perceived_plant, mode=real.mode,
                    tau_h=round(real.tau_h, 10), order=int(real.A.shape[0]))

    def _on_trigger(self, step: int) -> None:
        self.trigger_step = int(self.iv[K.I1_TRIGSTEP])
        self._event(self.trigger_step, "trigger", t_trigger=round(self.trigger_step * self.dt, 10))
        if self.alert_policy == "cfm_based" and self.alert_step is None:
            self._schedule(self.trigger_step, self._fire_alert)
        # the pilot identifies the changed dynamics only after watching them for a while
        self._schedule(self.trigger_step + max(1, int(round(self.identify_delay / self.dt))),
                       self._complete_identification)

    def _complete_identification(self) -> None:
        if self.perceived_plant == "after":
            return
        self.perceived_plant = "after"
        self._event(self.step_index, "identified", plant="after")
        if self.pilot_engaged and not self.stick_mode:
            self._rerealize_pilot()

    def _rerealize_pilot(self) -> None:
        real = self._realize(self.perceived_plant)
        self._install_pilot(real, self.step_index, preserve_output=True)

    # --- kernel plumbing ----------------------------------------------------
    @property
    def step_index(self) -> int:
        return int(self.iv[K.I1_STEP])

    def chunk(self, i_end: int) -> int:
        return K.sca1_chunk(
            self.iv, self.fv,
            self.plant_A, self.plant_b, self.plant_c, self.xi_p, self.plant_ring,
            self.pilot_A, self.pilot_b, self.pilot_c, self.xi_h, self.pilot_ring,
            self.gnm_A, self.gnm_b, self.gnm_c, self.xi_g,
            self.g1_A, self.g1_b, self.g1_c, self.xi_g1,
            self.cmd_amp, self.cmd_w, self.cmd_ph,
            self.csq_ring, self.log2d, i_end,
        )

    # --- human commands -----------------------------------------------------
    def apply_command(self, kind: str, value=None) -> None:
        self._event(self.step_index, "command", kind=kind,
                    value=None if value is None else float(value))
        if kind == "TakeOver":
            if not self.pilot_engaged:
                self.pilot_engaged = True
                self.stick_mode = True
                self.iv[K.I1_ACTIVE] = 2
                i = self.step_index
                t_alert = self.alert_step * self.dt if self.alert_step is not None else None
                self._event(i, "takeover", source="human",
                            t_rt=None if t_alert is None else round(i * self.dt - t_alert, 10),
                            t_trt=None if self.t_a is None else round(i * self.dt - self.t_a, 10))
        elif kind == "Stick":
            self.fv[K.F1_STICK] = float(value)
        else:
            raise ConfigError(f"command {kind!r} not valid for an SCA1 session")

    def finish(self) -> RunLog:
        n = self.step_index if self.status == "faulted" else self.n_total
        header = {
            "family": "sca1",
            "name": self.cfg.get("name", "sca1"),
            "config": self.cfg,
            "config_hash": config_hash(self.cfg),
            "seed": self.seed,
            "dt": self.dt,
            "n_steps": int(n),
            "backend": BACKEND,
            "u_max": [self.u_max],
            "t_a": self.t_a,
            "calibrating": self.calibrating,
        }
        log = RunLog(header=header, columns=_column_dict(self.log2d, K.SCA1_COLUMN_NAMES, n),
                     events=sorted(self.events, key=lambda e: e["step"]))
        return log


class Sca2Engine(_EngineBase):
    """Supervisory architecture: mu-mod + CRM adaptive autopilot, LOE anomalies."""

    def __init__(self, cfg: dict):
        super().__init__(cfg)
        plant = cfg["plant"]
        self.A = np.asarray(plant["A"], dtype=float)
        self.B = np.asarray(plant["B"], dtype=float)
        n, m = self.B.shape
        self.n, self.m = n, m
        self.d_vec = np.asarray(plant.get("d", np.zeros(n)), dtype=float)
        reg_name = plant.get("regressor", "none")
        if reg_name not in REGRESSOR_IDS:
            raise ConfigError(f"unknown regressor {reg_name!r}")
        self.p = REGRESSOR_DIMS[reg_name]
        Phi = plant.get("Phi")
        self.Phi = np.asarray(Phi, dtype=float) if Phi is not None else np.zeros((self.p, n))
        if self.Phi.shape != (self.p, n):
            raise ConfigError("Phi must be p x n for the configured regressor")

        out = cfg["outputs"]
        select = out.get("select")
        if select is not None:
            C = np.zeros((len(select), n))
            for row, idx in enumerate(select):
                C[row, int(idx)] = 1.0
        else:
            C = np.asarray(out["C"], dtype=float)
        self.C = C
        self.k = C.shape[0]
        self.labels = list(out.get("labels", [f"y{j}" for j in range(self.k)]))

        self.u_max = np.asarray(cfg["actuator"]["u_max"], dtype=float)
        ap = cfg["autopilot"]
        self.kind = ap["kind"]
        if self.kind not in ("adaptive", "mu_mod_fixed", "adaptive_plain", "optimal"):
            raise ConfigError(f"unknown SCA2 autopilot kind {self.kind!r}")
        self.delta = float(ap.get("delta", 0.25))
        gam = ap.get("gamma", {})

        def g_of(key, dim):
            val = gam.get(key, 10.0)
            if np.ndim(val) == 0:
                return float(val) * np.eye(dim)
            return np.diag(np.asarray(val, dtype=float))

        self.Gx = g_of("x", n)
        self.Gr = g_of("r", self.k)
        self.Gu = g_of("u", m)
        self.Gd = g_of("d", m)
        self.Gf = g_of("f", max(self.p, 1))
        q_lyap = ap.get("q_lyap", 1.0)
        if np.ndim(q_lyap) == 0:
            self.Q_lyap = float(q_lyap) * np.eye(n)
        elif np.ndim(q_lyap) == 1:
            self.Q_lyap = np.diag(np.asarray(q_lyap, dtype=float))
        else:
            self.Q_lyap = np.asarray(q_lyap, float)
        q_lqr = ap.get("q_lqr", [1.0] * n)
        r_lqr = ap.get("r_lqr", [1.0] * m)
        Q_lqr = np.diag(np.asarray(q_lqr, dtype=float)) if np.ndim(q_lqr) == 1 else np.asarray(q_lqr, float)
        R_lqr = np.diag(np.asarray(r_lqr, dtype=float)) if np.ndim(r_lqr) == 1 else np.asarray(r_lqr, float)
        ell = ap.get("l_gain", 5.0)
        ell_diag = np.full(n, float(ell)) if np.ndim(ell) == 0 else np.asarray(ell, dtype=float)

        K_x0 = lqr_gain(self.A, self.B, Q_lqr, R_lqr)
        A_m, B_m, K_r0, K_u0 = match_nominal(self.A, self.B, K_x0, self.C)
        self.Am = A_m
        self.Bm = B_m
        self.L = -np.diag(ell_diag)
        self.P = solve_lyapunov(A_m, self.Q_lyap)
        self._p_norm0 = float(np.linalg.norm(self.P, 2))
        self._gammas0 = None  # captured below once gain matrices exist

        self.Kx = K_x0.copy()
        self.Kr = K_r0.copy()
        self.Ku = K_u0.copy()
        self.dhat = np.asarray(ap.get("d_hat0", np.zeros(m)), dtype=float)
        self.Phihat = np.zeros((max(self.p, 1), m))
        self.x = np.asarray(cfg.get("x0", np.zeros(n)), dtype=float)
        self.xm = self.x.copy()

        self.lam = np.ones(m)
        self.lamhat = np.full(m, np.nan)

        self.iv = np.zeros(8, dtype=np.int64)
        self.fv = np.zeros(8, dtype=np.float64)
        self.fv[K.F2_DT] = self.dt
        self.fv[K.F2_DELTA] = self.delta
        self.iv[K.I2_NTOTAL] = self.n_total
        self.iv[K.I2_REG] = REGRESSOR_IDS[reg_name]
        if self.kind == "adaptive":
            self.fv[K.F2_MU] = float(ap.get("mu0", 1.0))
            self.iv[K.I2_MUMOD] = 1
            self.iv[K.I2_USEKU] = 1
            self.iv[K.I2_USEL] = 1
            self.iv[K.I2_ADAPT] = 1
        elif self.kind == "mu_mod_fixed":
            self.fv[K.F2_MU] = float(ap["mu_fixed"])
            self.iv[K.I2_MUMOD] = 1
            self.iv[K.I2_USEKU] = 1
            self.iv[K.I2_USEL] = 1
            self.iv[K.I2_ADAPT] = 1
        elif self.kind == "adaptive_plain":
            self.fv[K.F2_MU] = 0.0
            self.iv[K.I2_MUMOD] = 0
            self.iv[K.I2_USEKU] = 0
            self.iv[K.I2_USEL] = 1
            self.iv[K.I2_ADAPT] = 1
        else:  # optimal: frozen gains, open-loop reference for display only
            self.fv[K.F2_MU] = 0.0
            self.iv[K.I2_MUMOD] = 0
            self.iv[K.I2_USEKU] = 0
            self.iv[K.I2_USEL] = 0
            self.iv[K.I2_ADAPT] = 0

        cmds = cfg["commands"]
        self.knots_t = np.asarray(cmds["t"], dtype=float)
        self.knots_v = np.asarray(cmds["values"], dtype=float)
        if self.knots_v.shape != (self.knots_t.size, self.k):
            raise ConfigError("command knots must be (len(t), k)")

        names = K.sca2_column_names(n, m, self.k)
        self.column_names = names
        self.log2d = np.full((self.n_total, len(names)), np.nan)

        # anomaly schedule
        self.anomalies = []
        for a in cfg.get("anomalies", []):
            lam = float(a["lambda"])
            t_a = float(a["t_a"])
            label, color = severity_for(lam)
            self.anomalies.append({"t_a": t_a, "lambda": lam, "severity": label, "color": color})
            self._schedule(int(round(t_a / self.dt)), self._apply_loe, lam, label, color)
        self.t_a1 = self.anomalies[0]["t_a"] if self.anomalies else None

        pilot = cfg.get("pilot", {})
        self.pilot_kind = pilot.get("kind", "none")
        self.estimate_error = float(pilot.get("estimate_error", 0.2))
        if self.pilot_kind in ("sap", "sup"):
            table = pilot.get("mu_table")
            if table is None:
                raise ConfigError("supervisory pilot requires a mu_table")
            reaction = pilot.get("reaction", {})
            mean = float(reaction.get("mean", 1.0))
            spread = float(reaction.get("spread", 0.0))
            for a in self.anomalies:
                delay = mean + (spread * (2.0 * self.rng.random() - 1.0) if spread > 0 else 0.0)
                if a["severity"] not in table:
                    raise ConfigError(f"no trained mu for severity {a['severity']!r}")
                mu_val = int(table[a["severity"]])
                lam_hat = None
                if self.pilot_kind == "sap":
                    lam_hat = estimate_with_error(a["lambda"], self.estimate_error, self.rng)
                step = int(round((a["t_a"] + delay) / self.dt))
                self._schedule(step, self._apply_directives, mu_val, lam_hat, "synthetic")

    # --- event actions ----------------------------------------------------
    def _apply_loe(self, lam: float, label, color) -> None:
        i = self.step_index
        self.lam[:] = lam
        self._event(i, "anomaly", kind="loss_of_effectiveness", **{"lambda": lam},
                    severity=label, color=color)
        self._event(i, "alert", policy="severity_color", severity=label, color=color)

    def _apply_directives(self, mu_val: int, lam_hat, source: str) -> None:
        i = self.step_index
        self.fv[K.F2_MU] = float(mu_val)
        self._event(i, "mu_input", mu=int(mu_val), source=source)
        if lam_hat is not None:
            self.lamhat[:] = lam_hat
            self._event(i, "severity_estimate", lambda_hat=float(lam_hat), source=source)
            self._rematch(np.full(self.m, lam_hat))

    def _rematch(self, lam_hat_vec: np.ndarray) -> None:
        i = self.step_index
        try:
            A_m, B_m, K_r, K_u = match_anomaly(self.A, self.B, lam_hat_vec, self.Kx, self.C)
            P = solve_lyapunov(A_m, self.Q_lyap)
        except SynthesisError as exc:
            self._event(i, "rematch_rejected", reason=str(exc))
            return
        # the learning rates are calibrated against the nominal P; keep the
        # Gamma * P product scale invariant when P is re-solved
        if self._gammas0 is None:
            self._gammas0 = [g.copy() for g in (self.Gx, self.Gr, self.Gu, self.Gd, self.Gf)]
        scale = self._p_norm0 / float(np.linalg.norm(P, 2))
        soft = math.sqrt(scale)
        for target, base, s in zip(
            (self.Gx, self.Gr, self.Gu, self.Gd, self.Gf),
            self._gammas0,
            (soft, 1.0, scale, 1.0, soft),
        ):
            if target.size:
                np.copyto(target, base * s)
        np.copyto(self.Am, A_m)
        np.copyto(self.Bm, B_m)
        np.copyto(self.P, P)
        np.copyto(self.Kr, K_r)
        np.copyto(self.Ku, K_u)
        self._event(i, "rematch", lambda_hat=[float(v) for v in lam_hat_vec])

    # --- kernel plumbing ----------------------------------------------------
    @property
    def step_index(self) -> int:
        return int(self.iv[K.I2_STEP])

    def chunk(self, i_end: int) -> int:
        return K.sca2_chunk(
            self.iv, self.fv,
            self.A, self.B, self.d_vec, self.Phi, self.Am, self.Bm, self.L, self.P, self.C,
            self.Gx, self.Gr, self.Gu, self.Gd, self.Gf, self.lam, self.u_max, self.lamhat,
            self.x, self.xm, self.Kx, self.Kr, self.Ku, self.dhat, self.Phihat,
            self.knots_t, self.knots_v, self.log2d, i_end,
        )

    # --- human commands -----------------------------------------------------
    def apply_command(self, kind: str, value=None) -> None:
        self._event(self.step_index, "command", kind=kind,
                    value=None if value is None else (value if isinstance(value, str) else float(value)))
        if kind == "MuInput":
            mu = int(value)
            if not 1 <= mu <= 20:
                raise ConfigError("mu input outside the 1..20 range")
            self.fv[K.F2_MU] = float(mu)
            self._event(self.step_index, "mu_input", mu=mu, source="human")
        elif kind == "SeverityEstimate":
            label = str(value)
            lam_by_label = {"Low": 0.30, "Middle": 0.20, "High": 0.15}
            if label not in lam_by_label:
                raise ConfigError(f"unknown severity label {label!r}")
            lam_hat = estimate_with_error(lam_by_label[label], self.estimate_error, self.rng)
            self.lamhat[:] = lam_hat
            self._event(self.step_index, "severity_estimate", lambda_hat=lam_hat, source="human")
            self._rematch(np.full(self.m, lam_hat))
        elif kind in ("TakeOver", "Stick"):
            raise ConfigError("the autopilot is always in control of an SCA2 session")
        else:
            raise ConfigError(f"command {kind!r} not valid for an SCA2 session")

    def finish(self) -> RunLog:
        n = self.step_index if self.status == "faulted" else self.n_total
        header = {
            "family": "sca2",
            "name": self.cfg.get("name", "sca2"),
            "config": self.cfg,
            "config_hash": config_hash(self.cfg),
            "seed": self.seed,
            "dt": self.dt,
            "n_steps": int(n),
            "backend": BACKEND,
            "u_max": [float(v) for v in self.u_max],
            "delta": self.delta,
            "t_a1": self.t_a1,
            "variant": self.cfg.get("variant", self.kind),
            "labels": self.labels,
            "autopilot_kind": self.kind,
        }
        return RunLog(header=header, columns=_column_dict(self.log2d, self.column_names, n),
                      events=sorted(self.events, key=lambda e: e["step"]))


def make_engine(cfg: dict):
    family = cfg.get("family")
    if family == "sca1":
        return Sca1Engine(cfg)
    if family == "sca2":
        return Sca2Engine(cfg)
    raise ConfigError(f"unknown scenario family {family!r}")

import { describe, expect, it } from "vitest";
import { CockpitModel, RingSeries } from "../src/model.js";
import { FramePayload } from "../src/protocol.js";

function frame(seq: number, t: number, extra: Partial<FramePayload> = {}): FramePayload {
  return { t, seq, cmd: [1.0], out: [0.9], cfm: 0.8, gcd: 0.1, active: 0, kt: 0, mu: 1, delta: 0.25, ...extra };
}

describe("ring series", () => {
  it("drops samples older than the window", () => {
    const s = new RingSeries(10);
    for (let t = 0; t <= 30; t += 1) s.push(t, [t]);
    expect(s.samples[0].t).toBeGreaterThanOrEqual(20);
    expect(s.latest()!.t).toBe(30);
  });
});

describe("cockpit model", () => {
  it("displays mu only after acknowledgement", () => {
    const m = new CockpitModel("SCA2");
    m.requestMu(7, 10);
    expect(m.displayedMu).toBeNull();
    m.ackMu(7, 11);
    expect(m.displayedMu).toBe(7);
    expect(m.muRoundTripFrames()).toBe(1);
  });

  it("confirms mu through telemetry frames too", () => {
    const m = new CockpitModel("SCA2");
    m.requestMu(9, 5);
    m.applyFrame(frame(6, 0.3, { mu: 9 }));
    expect(m.displayedMu).toBe(9);
    expect(m.muRoundTripFrames()).toBe(1);
  });

  it("colors anomaly markers by severity", () => {
    const m = new CockpitModel("SCA2");
    m.applyEvent({ type: "anomaly", t: 32.0, severity: "Middle" });
    m.applyEvent({ type: "anomaly", t: 68.0, severity: "High" });
    expect(m.markers.map((x) => x.color)).toEqual(["violet", "purple"]);
    expect(m.toneRequests).toContain("anomaly");
  });

  it("keeps the buffer line at the session delta", () => {
    const m = new CockpitModel("SCA2");
    m.applyFrame(frame(0, 0.0, { delta: 0.25 }));
    expect(m.bufferDelta).toBe(0.25);
  });

  it("refuses stick input while the autopilot is in control", () => {
    const sca2 = new CockpitModel("SCA2");
    expect(sca2.stickEnabled).toBe(false);
    expect(sca2.canSendStick()).toBe(false);
    expect(sca2.stickNotice).toMatch(/autopilot/);
    const sca1 = new CockpitModel("SCA1");
    expect(sca1.canSendStick()).toBe(false); // not before take-over
    sca1.applyEvent({ type: "takeover", t: 52.0 });
    expect(sca1.canSendStick()).toBe(true);
  });

  it("raises the alert banner and tone on SCA1 alerts", () => {
    const m = new CockpitModel("SCA1");
    m.applyEvent({ type: "alert", t: 51.1, policy: "cfm_based" });
    expect(m.alertActive).toBe(true);
    expect(m.toneRequests).toContain("takeover-alert");
  });
});

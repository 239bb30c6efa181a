// Cockpit state derived purely from the frame/event streams; DOM-free so the
// behavior is unit-testable. A refresh rebuilds everything from the streams.

import { FramePayload, severityColor } from "./protocol.js";

export interface Marker {
  t: number;
  color: string;
  severity: string | null;
  label: string;
}

export interface ChartSample {
  t: number;
  values: number[];
}

export class RingSeries {
  samples: ChartSample[] = [];

  constructor(readonly windowSeconds: number) {}

  push(t: number, values: number[]): void {
    this.samples.push({ t, values });
    const cutoff = t - this.windowSeconds;
    while (this.samples.length && this.samples[0].t < cutoff) this.samples.shift();
  }

  latest(): ChartSample | null {
    return this.samples.length ? this.samples[this.samples.length - 1] : null;
  }
}

export type Mode = "SCA1" | "SCA2";

export class CockpitModel {
  mode: Mode;
  // displayed mu must always equal the last *acknowledged* MuInput
  displayedMu: number | null = null;
  requestedMu: number | null = null;
  muAckedAtFrame: number | null = null;
  muRequestedAtFrame: number | null = null;
  stickEnabled: boolean;
  stickNotice: string | null = null;
  takenOver = false;
  status = "connecting";
  alertActive = false;
  cfm = new RingSeries(60);
  tracking = new RingSeries(60);
  gcd = new RingSeries(60);
  markers: Marker[] = [];
  bufferDelta: number | null = null;
  lastFrame: FramePayload | null = null;
  toneRequests: string[] = [];

  constructor(mode: Mode) {
    this.mode = mode;
    this.stickEnabled = mode === "SCA1";
    if (mode === "SCA2") this.stickNotice = "control disabled: the autopilot is in control";
  }

  applyFrame(frame: FramePayload): void {
    this.lastFrame = frame;
    if (frame.delta !== null && frame.delta !== undefined) this.bufferDelta = frame.delta;
    this.cfm.push(frame.t, [frame.cfm]);
    this.tracking.push(frame.t, [...frame.cmd, ...frame.out]);
    if (frame.gcd !== null && frame.gcd !== undefined) this.gcd.push(frame.t, [frame.gcd]);
    if (this.mode === "SCA1" && frame.active !== 0) this.takenOver = true;
    if (
      this.mode === "SCA2" &&
      this.requestedMu !== null &&
      frame.mu !== null &&
      frame.mu === this.requestedMu
    ) {
      // engine confirms the applied value through telemetry as well
      if (this.displayedMu !== frame.mu) this.displayedMu = frame.mu;
      if (this.muAckedAtFrame === null) this.muAckedAtFrame = frame.seq;
    }
  }

  applyEvent(event: Record<string, unknown>): void {
    const type = event.type as string;
    const t = (event.t as number) ?? 0;
    if (type === "anomaly") {
      const severity = (event.severity as string) ?? null;
      this.markers.push({
        t,
        severity,
        color: severityColor(severity),
        label: severity ? `anomaly (${severity})` : "anomaly",
      });
      this.toneRequests.push("anomaly");
    } else if (type === "alert") {
      this.alertActive = true;
      const severity = (event.severity as string) ?? null;
      if (this.mode === "SCA1") {
        this.markers.push({ t, severity: null, color: "red", label: "take-over alert" });
        this.toneRequests.push("takeover-alert");
      } else if (severity) {
        this.toneRequests.push(`severity-${severity}`);
      }
    } else if (type === "takeover") {
      this.takenOver = true;
    }
  }

  ackMu(value: number, atFrame: number): void {
    this.displayedMu = value;
    this.muAckedAtFrame = atFrame;
  }

  requestMu(value: number, atFrame: number): void {
    this.requestedMu = value;
    this.muRequestedAtFrame = atFrame;
  }

  // round-trip delay between requesting mu and its acknowledged display, in frames
  muRoundTripFrames(): number | null {
    if (this.muRequestedAtFrame === null || this.muAckedAtFrame === null) return null;
    return this.muAckedAtFrame - this.muRequestedAtFrame;
  }

  canSendStick(): boolean {
    return this.mode === "SCA1" && this.takenOver;
  }
}

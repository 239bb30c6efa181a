import { describe, expect, it } from "vitest";
import { SessionClient } from "../src/client.js";
import { Envelope } from "../src/protocol.js";
import { Transport } from "../src/transport.js";

class FakeTransport implements Transport {
  sent: Envelope[] = [];
  private handlers: Array<(m: Envelope) => void> = [];
  send(m: Envelope) { this.sent.push(m); }
  onMessage(h: (m: Envelope) => void) { this.handlers.push(h); }
  onClose() {}
  close() {}
  inject(m: Envelope) { this.handlers.forEach((h) => h(m)); }
}

function frameMsg(seq: number): Envelope {
  return { type: "Frame", session: "s", seq, payload: { t: seq * 0.05, seq, cmd: [0], out: [0], cfm: 1, gcd: null, active: 0, kt: 0, mu: null, delta: null } };
}

describe("session client", () => {
  it("delivers frames in order, deduplicates, and counts gaps", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t, "s");
    const seen: number[] = [];
    c.onFrame((f, gap) => seen.push(f.seq));
    t.inject(frameMsg(0));
    t.inject(frameMsg(1));
    t.inject(frameMsg(1)); // duplicate
    t.inject(frameMsg(4)); // gap
    expect(seen).toEqual([0, 1, 4]);
    expect(c.gapCount).toBe(1);
    expect(c.frameCount).toBe(3);
  });

  it("resolves command acks and errors by sequence number", async () => {
    const t = new FakeTransport();
    const c = new SessionClient(t, "s");
    const p1 = c.command("MuInput", 7);
    const p2 = c.command("MuInput", 25);
    const seq1 = t.sent[0].seq!;
    const seq2 = t.sent[1].seq!;
    t.inject({ type: "Ack", session: "s", seq: seq1, payload: { kind: "MuInput", applied_step: 123 } });
    t.inject({ type: "Error", session: "s", seq: seq2, payload: { message: "mu input outside the 1..20 range" } });
    const r1 = await p1;
    const r2 = await p2;
    expect(r1.ok).toBe(true);
    expect(r1.appliedStep).toBe(123);
    expect(r2.ok).toBe(false);
    expect(r2.message).toMatch(/1\.\.20/);
  });

  it("attach resolves with stream position for late subscribers", async () => {
    const t = new FakeTransport();
    const c = new SessionClient(t, "s");
    const attach = c.attach();
    t.inject({ type: "Ack", session: "s", seq: 1, payload: { kind: "Attach", last_seq: 41, status: "running", family: "sca2", name: "x" } });
    const info = await attach;
    expect(info.lastSeq).toBe(41);
    expect(info.family).toBe("sca2");
  });
});

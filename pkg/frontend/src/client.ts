// Session client: attach, ordered frame delivery with gap detection, command
// acknowledgement tracking. Transport-agnostic so the logic is testable off-browser.

import { CommandKind, Envelope, FramePayload } from "./protocol.js";
import { Transport } from "./transport.js";

export interface AttachInfo {
  lastSeq: number;
  status: string;
  family: string;
  name: string;
}

export interface CommandResult {
  ok: boolean;
  appliedStep?: number;
  message?: string;
}

type FrameHandler = (frame: FramePayload, gap: boolean) => void;
type EventHandler = (event: Record<string, unknown>) => void;

export class SessionClient {
  private seq = 0;
  private pending = new Map<number, (result: CommandResult) => void>();
  private frameHandlers: FrameHandler[] = [];
  private eventHandlers: EventHandler[] = [];
  private doneHandlers: Array<(status: string) => void> = [];
  private attachResolve: ((info: AttachInfo) => void) | null = null;
  lastFrameSeq = -1;
  frameCount = 0;
  gapCount = 0;

  constructor(private transport: Transport, readonly sessionId: string) {
    transport.onMessage((message) => this.dispatch(message));
  }

  attach(): Promise<AttachInfo> {
    return new Promise((resolve) => {
      this.attachResolve = resolve;
      this.sendCommand("Attach");
    });
  }

  command(kind: CommandKind, value?: number | string): Promise<CommandResult> {
    return new Promise((resolve) => {
      const seq = this.sendCommand(kind, value);
      this.pending.set(seq, resolve);
    });
  }

  onFrame(handler: FrameHandler): void {
    this.frameHandlers.push(handler);
  }

  onEvent(handler: EventHandler): void {
    this.eventHandlers.push(handler);
  }

  onDone(handler: (status: string) => void): void {
    this.doneHandlers.push(handler);
  }

  private sendCommand(kind: CommandKind, value?: number | string): number {
    this.seq += 1;
    const payload: Record<string, unknown> = { kind };
    if (value !== undefined) payload.value = value;
    this.transport.send({
      type: "Command",
      session: this.sessionId,
      seq: this.seq,
      payload,
    });
    return this.seq;
  }

  private dispatch(message: Envelope): void {
    switch (message.type) {
      case "Frame": {
        const frame = message.payload as unknown as FramePayload;
        const gap = this.lastFrameSeq >= 0 && frame.seq > this.lastFrameSeq + 1;
        if (gap) this.gapCount += 1;
        if (frame.seq > this.lastFrameSeq) {
          this.lastFrameSeq = frame.seq;
          this.frameCount += 1;
          this.frameHandlers.forEach((h) => h(frame, gap));
        }
        break;
      }
      case "Event":
        this.eventHandlers.forEach((h) => h(message.payload));
        break;
      case "Ack": {
        const payload = message.payload as { kind?: string; applied_step?: number; last_seq?: number; status?: string; family?: string; name?: string };
        if (payload.kind === "Attach" && this.attachResolve) {
          this.attachResolve({
            lastSeq: payload.last_seq ?? -1,
            status: payload.status ?? "unknown",
            family: payload.family ?? "",
            name: payload.name ?? "",
          });
          this.attachResolve = null;
        } else if (message.seq !== null && this.pending.has(message.seq)) {
          this.pending.get(message.seq)!({ ok: true, appliedStep: payload.applied_step });
          this.pending.delete(message.seq);
        }
        break;
      }
      case "Error": {
        const payload = message.payload as { message?: string };
        if (message.seq !== null && this.pending.has(message.seq)) {
          this.pending.get(message.seq)!({ ok: false, message: payload.message });
          this.pending.delete(message.seq);
        }
        break;
      }
      case "Done": {
        const payload = message.payload as { status?: string };
        this.doneHandlers.forEach((h) => h(payload.status ?? "complete"));
        break;
      }
      default:
        break;
    }
  }
}

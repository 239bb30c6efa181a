// Node-only transport speaking the raw length-prefixed TCP protocol; used by
// the test suite so the client/model logic is exercised against a live service
// without a browser.

import * as net from "node:net";
import { Envelope, encodeEnvelope, parseEnvelope } from "./protocol.js";
import { Transport } from "./transport.js";

export class TcpTransport implements Transport {
  private sock: net.Socket;
  private handlers: Array<(m: Envelope) => void> = [];
  private closers: Array<() => void> = [];
  private buffer = Buffer.alloc(0);
  private readonly readyPromise: Promise<void>;

  constructor(host: string, port: number) {
    this.sock = net.createConnection({ host, port });
    this.readyPromise = new Promise((resolve, reject) => {
      this.sock.once("connect", () => resolve());
      this.sock.once("error", reject);
    });
    this.sock.on("data", (chunk) => {
      this.buffer = Buffer.concat([this.buffer, chunk]);
      for (;;) {
        if (this.buffer.length < 4) return;
        const length = this.buffer.readUInt32BE(0);
        if (this.buffer.length < 4 + length) return;
        const raw = this.buffer.subarray(4, 4 + length).toString("utf-8");
        this.buffer = this.buffer.subarray(4 + length);
        const message = parseEnvelope(raw);
        if (message) this.handlers.forEach((h) => h(message));
      }
    });
    this.sock.on("close", () => this.closers.forEach((h) => h()));
  }

  ready(): Promise<void> {
    return this.readyPromise;
  }

  send(message: Envelope): void {
    const data = Buffer.from(encodeEnvelope(message), "utf-8");
    const head = Buffer.alloc(4);
    head.writeUInt32BE(data.length, 0);
    this.sock.write(Buffer.concat([head, data]));
  }

  onMessage(handler: (m: Envelope) => void): void {
    this.handlers.push(handler);
  }

  onClose(handler: () => void): void {
    this.closers.push(handler);
  }

  close(): void {
    this.sock.destroy();
  }
}

export function startSession(
  transport: TcpTransport,
  config: Record<string, unknown> | string,
  pacing: number,
): Promise<string> {
  return new Promise((resolve, reject) => {
    const handler = (message: Envelope) => {
      if (message.seq === 9001 && message.type === "Ack") resolve(message.session as string);
      if (message.seq === 9001 && message.type === "Error")
        reject(new Error(String(message.payload.message)));
    };
    transport.onMessage(handler);
    const payload: Record<string, unknown> =
      typeof config === "string" ? { name: config, pacing } : { config, pacing };
    transport.send({ type: "StartSession", session: null, seq: 9001, payload });
  });
}

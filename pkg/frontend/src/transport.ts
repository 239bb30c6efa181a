// Transports deliver envelopes over a duplex connection. The browser uses the
// WebSocket bridge; tests use the raw length-prefixed TCP protocol via node.

import { Envelope, encodeEnvelope, parseEnvelope } from "./protocol.js";

export interface Transport {
  send(message: Envelope): void;
  onMessage(handler: (message: Envelope) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export class WsTransport implements Transport {
  private ws: WebSocket;
  private handlers: Array<(m: Envelope) => void> = [];
  private closers: Array<() => void> = [];

  constructor(url: string, onOpen?: () => void) {
    this.ws = new WebSocket(url);
    this.ws.onopen = () => onOpen?.();
    this.ws.onmessage = (ev) => {
      const message = parseEnvelope(String(ev.data));
      if (message) this.handlers.forEach((h) => h(message));
    };
    this.ws.onclose = () => this.closers.forEach((h) => h());
  }

  send(message: Envelope): void {
    if (this.ws.readyState === WebSocket.OPEN) this.ws.send(encodeEnvelope(message));
  }

  onMessage(handler: (m: Envelope) => void): void {
    this.handlers.push(handler);
  }

  onClose(handler: () => void): void {
    this.closers.push(handler);
  }

  close(): void {
    this.ws.close();
  }
}

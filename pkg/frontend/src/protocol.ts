// Message envelopes shared with the session service.

export type MessageType =
  | "Hello"
  | "StartSession"
  | "Command"
  | "Frame"
  | "Event"
  | "Ack"
  | "Error"
  | "Done";

export interface Envelope {
  type: MessageType;
  session: string | null;
  seq: number | null;
  payload: Record<string, unknown>;
}

export interface FramePayload {
  t: number;
  seq: number;
  cmd: number[];
  out: number[];
  cfm: number;
  gcd: number | null;
  active: number;
  kt: number | null;
  mu: number | null;
  delta: number | null;
}

export type CommandKind =
  | "TakeOver"
  | "Stick"
  | "MuInput"
  | "SeverityEstimate"
  | "Pause"
  | "Resume"
  | "Attach";

export function parseEnvelope(raw: string): Envelope | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const message = data as Record<string, unknown>;
  if (typeof message.type !== "string") return null;
  return {
    type: message.type as MessageType,
    session: (message.session as string | null) ?? null,
    seq: (message.seq as number | null) ?? null,
    payload: (message.payload as Record<string, unknown>) ?? {},
  };
}

export function encodeEnvelope(message: Envelope): string {
  return JSON.stringify(message);
}

// Severity color coding used for anomaly markers.
export const SEVERITY_COLORS: Record<string, string> = {
  Low: "green",
  Middle: "violet",
  High: "purple",
};

export function severityColor(severity: string | null | undefined): string {
  if (severity && severity in SEVERITY_COLORS) return SEVERITY_COLORS[severity];
  return "orange";
}

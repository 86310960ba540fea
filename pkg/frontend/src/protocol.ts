// Wire protocol v1 of the gateway event stream (NDJSON frames).

export const PROTOCOL_VERSION = 1;

export type FrameKind =
  | "phrase_delta"
  | "phrase_done"
  | "knowledge_chunk"
  | "silence_tick"
  | "turn_done"
  | "error";

export interface Frame {
  protocol_version: number;
  kind: FrameKind;
  turn_index: number;
  seq: number;
  payload: Record<string, unknown>;
}

export interface PhrasePayload {
  phrase_seq: number;
  text: string;
  start_timestamp: number;
  source?: "chunk" | "silence";
  source_event_seq?: number;
  latency_ms?: number;
}

export interface EventPayload {
  event_seq: number;
  text?: string;
  timestamp: number;
}

export interface TurnDonePayload {
  user: string;
  ttft: number | null;
  n_events: number;
  n_phrases: number;
}

export function isFrame(value: unknown): value is Frame {
  if (typeof value !== "object" || value === null) return false;
  const frame = value as Partial<Frame>;
  return (
    typeof frame.kind === "string" &&
    typeof frame.turn_index === "number" &&
    typeof frame.seq === "number" &&
    typeof frame.payload === "object"
  );
}

/** Split an incremental byte stream into NDJSON lines (blank = keepalive). */
export function createLineSplitter(): (chunk: string) => string[] {
  let buffer = "";
  return (chunk: string) => {
    buffer += chunk;
    const parts = buffer.split("\n");
    buffer = parts.pop() ?? "";
    return parts.filter((line) => line.trim().length > 0);
  };
}

export function parseFrameLine(line: string): Frame | null {
  try {
    const value = JSON.parse(line);
    return isFrame(value) ? value : null;
  } catch {
    return null;
  }
}

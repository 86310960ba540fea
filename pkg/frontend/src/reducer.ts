// Pure, idempotent reducer over the gateway frame stream.
//
// Every frame is keyed by (turn_index, seq); a frame already applied is a
// no-op returning the same state object, so replays and duplicated frames
// (reconnects, late-subscriber catch-up) can never double-render.

import type { EventPayload, Frame, PhrasePayload, TurnDonePayload } from "./protocol.js";

export interface PhraseBubble {
  phraseSeq: number;
  text: string;
  startTimestamp: number;
  source: "chunk" | "silence";
  latencyMs: number | null;
}

export interface TimelineEntry {
  eventSeq: number;
  kind: "chunk" | "silence";
  text: string | null;
  timestamp: number;
}

export interface TurnView {
  turnIndex: number;
  user: string | null;
  bubbles: PhraseBubble[];
  timeline: TimelineEntry[];
  pendingDelta: string | null;
  done: boolean;
  ttft: number | null;
  error: string | null;
  appliedSeqs: Record<number, true>;
}

export type ConnectionState = "idle" | "connecting" | "open" | "error";

export interface ChatState {
  turns: TurnView[];
  connection: ConnectionState;
  lastError: string | null;
  activeTurn: number | null;
}

export const initialState: ChatState = {
  turns: [],
  connection: "idle",
  lastError: null,
  activeTurn: null,
};

function emptyTurn(turnIndex: number): TurnView {
  return {
    turnIndex,
    user: null,
    bubbles: [],
    timeline: [],
    pendingDelta: null,
    done: false,
    ttft: null,
    error: null,
    appliedSeqs: {},
  };
}

function withTurn(state: ChatState, turnIndex: number): [ChatState, TurnView] {
  const existing = state.turns.find((t) => t.turnIndex === turnIndex);
  if (existing) return [state, existing];
  const created = emptyTurn(turnIndex);
  const next = { ...state, turns: [...state.turns, created] };
  next.turns.sort((a, b) => a.turnIndex - b.turnIndex);
  return [next, created];
}

function replaceTurn(state: ChatState, turn: TurnView): ChatState {
  return {
    ...state,
    turns: state.turns.map((t) => (t.turnIndex === turn.turnIndex ? turn : t)),
  };
}

/** Local action: the user pressed send; lock input and label the turn. */
export function beginTurn(state: ChatState, turnIndex: number, userText: string): ChatState {
  const [base, turn] = withTurn(state, turnIndex);
  return {
    ...replaceTurn(base, { ...turn, user: userText }),
    activeTurn: turnIndex,
  };
}

export function setConnection(
  state: ChatState,
  connection: ConnectionState,
  error: string | null = null,
): ChatState {
  return { ...state, connection, lastError: error };
}

export function reduce(state: ChatState, frame: Frame): ChatState {
  const [base, turn] = withTurn(state, frame.turn_index);
  if (turn.appliedSeqs[frame.seq]) return state; // duplicate: exact no-op
  const applied: TurnView = {
    ...turn,
    appliedSeqs: { ...turn.appliedSeqs, [frame.seq]: true },
  };

  switch (frame.kind) {
    case "silence_tick": {
      const payload = frame.payload as unknown as EventPayload;
      applied.timeline = [
        ...applied.timeline,
        {
          eventSeq: payload.event_seq,
          kind: "silence",
          text: null,
          timestamp: payload.timestamp,
        },
      ];
      break;
    }
    case "knowledge_chunk": {
      const payload = frame.payload as unknown as EventPayload;
      applied.timeline = [
        ...applied.timeline,
        {
          eventSeq: payload.event_seq,
          kind: "chunk",
          text: payload.text ?? null,
          timestamp: payload.timestamp,
        },
      ];
      break;
    }
    case "phrase_delta": {
      const payload = frame.payload as unknown as PhrasePayload;
      applied.pendingDelta = payload.text;
      break;
    }
    case "phrase_done": {
      const payload = frame.payload as unknown as PhrasePayload;
      applied.pendingDelta = null;
      applied.bubbles = [
        ...applied.bubbles,
        {
          phraseSeq: payload.phrase_seq,
          text: payload.text,
          startTimestamp: payload.start_timestamp,
          source: payload.source ?? "chunk",
          latencyMs: payload.latency_ms ?? null,
        },
      ];
      break;
    }
    case "turn_done": {
      const payload = frame.payload as unknown as TurnDonePayload;
      applied.done = true;
      applied.ttft = payload.ttft;
      if (applied.user === null) applied.user = payload.user;
      break;
    }
    case "error": {
      applied.done = true;
      applied.error = String(frame.payload["message"] ?? "unknown error");
      break;
    }
  }

  let next = replaceTurn(base, applied);
  if (applied.done && next.activeTurn === frame.turn_index) {
    next = { ...next, activeTurn: null };
  }
  return next;
}

export function reduceAll(state: ChatState, frames: Frame[]): ChatState {
  return frames.reduce(reduce, state);
}

// --- selectors ---------------------------------------------------------------

export function inputLocked(state: ChatState): boolean {
  return state.activeTurn !== null;
}

export function ttftBadgeMs(turn: TurnView): number | null {
  if (turn.bubbles.length === 0) return null;
  return Math.round(turn.bubbles[0].startTimestamp * 1000);
}

export function timelineOrdered(turn: TurnView): boolean {
  return turn.timeline.every(
    (entry, i) => i === 0 || entry.eventSeq >= turn.timeline[i - 1].eventSeq,
  );
}

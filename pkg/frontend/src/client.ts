// Gateway HTTP client: session creation, utterances, NDJSON subscription.

import { createLineSplitter, parseFrameLine, type Frame } from "./protocol.js";

export class GatewayRequestError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export interface SessionInfo {
  session_id: string;
  config: Record<string, unknown>;
}

export class GatewayClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      const detail = await response.text().catch(() => "");
      throw new GatewayRequestError(
        `${init?.method ?? "GET"} ${path} -> ${response.status} ${detail}`,
        response.status,
      );
    }
    return response;
  }

  async health(): Promise<{ status: string; protocol_version: number }> {
    const response = await this.request("/health");
    return response.json();
  }

  async createSession(overrides: Record<string, unknown> = {}): Promise<SessionInfo> {
    const response = await this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ overrides }),
    });
    return response.json();
  }

  async postUtterance(sessionId: string, text: string): Promise<number> {
    const response = await this.request(`/sessions/${sessionId}/utterances`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
    const body = (await response.json()) as { turn_index: number };
    return body.turn_index;
  }

  /** Long-lived frame subscription; yields frames until aborted or EOF. */
  async *subscribe(sessionId: string, signal?: AbortSignal): AsyncGenerator<Frame> {
    const response = await this.request(`/sessions/${sessionId}/events`, { signal });
    if (!response.body) throw new GatewayRequestError("no response body", 0);
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const splitLines = createLineSplitter();
    try {
      while (true) {
        const { done, value } = await reader.read();
        if (done) return;
        for (const line of splitLines(decoder.decode(value, { stream: true }))) {
          const frame = parseFrameLine(line);
          if (frame) yield frame;
        }
      }
    } finally {
      reader.releaseLock();
    }
  }
}

// GatewayClient against a stubbed fetch: streaming frame parsing and errors.

import { afterEach, describe, expect, it, vi } from "vitest";

import { GatewayClient, GatewayRequestError } from "../src/client.js";
import type { Frame } from "../src/protocol.js";

function frameLine(seq: number, kind = "silence_tick"): string {
  return (
    JSON.stringify({
      protocol_version: 1,
      kind,
      turn_index: 0,
      seq,
      payload: {},
    }) + "\n"
  );
}

function streamOf(...pieces: string[]): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  return new ReadableStream({
    start(controller) {
      for (const piece of pieces) controller.enqueue(encoder.encode(piece));
      controller.close();
    },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("GatewayClient", () => {
  it("creates sessions and posts utterances", async () => {
    const calls: Array<{ url: string; body: unknown }> = [];
    vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
      calls.push({ url, body: init?.body ? JSON.parse(String(init.body)) : null });
      if (url.endsWith("/sessions")) {
        return new Response(JSON.stringify({ session_id: "s1", config: {} }), {
          status: 201,
        });
      }
      return new Response(JSON.stringify({ turn_index: 2 }), { status: 202 });
    });
    const client = new GatewayClient("http://gw");
    const session = await client.createSession({ a: 1 });
    expect(session.session_id).toBe("s1");
    expect(await client.postUtterance("s1", "hello")).toBe(2);
    expect(calls[0].body).toEqual({ overrides: { a: 1 } });
    expect(calls[1].url).toBe("http://gw/sessions/s1/utterances");
  });

  it("maps busy-turn responses to a typed error with the status", async () => {
    vi.stubGlobal("fetch", async () => new Response("turn 0 running", { status: 409 }));
    const client = new GatewayClient("");
    await expect(client.postUtterance("s1", "x")).rejects.toSatisfy(
      (error: unknown) =>
        error instanceof GatewayRequestError && error.status === 409,
    );
  });

  it("yields frames across arbitrary stream chunk boundaries", async () => {
    const full = frameLine(0) + "\n" + frameLine(1, "turn_done");
    const cut = 17; // mid-JSON
    vi.stubGlobal(
      "fetch",
      async () => new Response(streamOf(full.slice(0, cut), full.slice(cut), "\n")),
    );
    const client = new GatewayClient("");
    const frames: Frame[] = [];
    for await (const frame of client.subscribe("s1")) {
      frames.push(frame);
    }
    expect(frames.map((f) => f.seq)).toEqual([0, 1]);
    expect(frames[1].kind).toBe("turn_done");
  });

  it("skips keepalive blank lines and non-frame lines", async () => {
    const body = "\n \n" + "{\"noise\": true}\n" + frameLine(0) + "\n";
    vi.stubGlobal("fetch", async () => new Response(streamOf(body)));
    const client = new GatewayClient("");
    const frames: Frame[] = [];
    for await (const frame of client.subscribe("s1")) frames.push(frame);
    expect(frames).toHaveLength(1);
  });
});

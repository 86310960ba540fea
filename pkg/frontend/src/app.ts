// DOM shell: renders the reducer state and drives the gateway client.
//
// Rendering is a full redraw from state on every frame; the reducer's
// idempotence guarantees a replayed or duplicated frame leaves state (and
// therefore the DOM) untouched.  All timing badges come from server
// timestamps, never the browser clock.

import { GatewayClient, GatewayRequestError } from "./client.js";
import {
  beginTurn,
  inputLocked,
  initialState,
  reduce,
  setConnection,
  ttftBadgeMs,
  type ChatState,
  type TurnView,
} from "./reducer.js";

export class ChatApp {
  private state: ChatState = initialState;
  private client: GatewayClient;
  private sessionId: string | null = null;
  private abort: AbortController | null = null;

  constructor(
    private readonly root: HTMLElement,
    baseUrl: string = "",
  ) {
    this.client = new GatewayClient(baseUrl);
    this.root.innerHTML = `
      <header>
        <h1>turnfill chat</h1>
        <span id="session-echo" class="session-echo"></span>
        <label class="lane-toggle"><input type="checkbox" id="researcher"> researcher mode</label>
        <span id="connection" class="badge">idle</span>
      </header>
      <div id="banner" class="banner hidden">
        <span id="banner-text"></span>
        <button id="retry">retry</button>
      </div>
      <main id="conversation"></main>
      <footer>
        <form id="composer">
          <input id="utterance" autocomplete="off"
                 placeholder="ask something (try: What is the tallest mountain in the world?)">
          <button id="send" type="submit">send</button>
        </form>
      </footer>`;
    this.element("#composer").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });
    this.element("#retry").addEventListener("click", () => {
      if (this.sessionId) this.resubscribe();
      else void this.connect();
    });
    this.element("#researcher").addEventListener("change", () => this.render());
  }

  private element<T extends HTMLElement = HTMLElement>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found;
  }

  private update(state: ChatState): void {
    this.state = state;
    this.render();
  }

  async connect(overrides: Record<string, unknown> = {}): Promise<void> {
    this.abort?.abort();
    this.update(setConnection(this.state, "connecting"));
    try {
      const session = await this.client.createSession(overrides);
      this.sessionId = session.session_id;
      this.showSessionEcho(session.session_id, session.config);
      this.resubscribe();
    } catch (error) {
      this.update(setConnection(this.state, "error", describe(error)));
    }
  }

  /** (Re)open the frame stream for the current session.  A reconnect
   *  mid-turn replays the turn's frames; the reducer's idempotence makes
   *  the replayed rendering identical to a continuous subscription. */
  resubscribe(): void {
    if (!this.sessionId) return;
    this.abort?.abort();
    this.abort = new AbortController();
    this.update(setConnection(this.state, "open"));
    void this.tail(this.abort.signal);
  }

  private showSessionEcho(sessionId: string, config: Record<string, unknown>): void {
    const silence = (config["silence"] ?? {}) as Record<string, unknown>;
    const backend = (config["backend"] ?? {}) as Record<string, unknown>;
    const parts = [`session ${sessionId}`];
    if (silence["period_seconds"] !== undefined) {
      parts.push(`d=${silence["period_seconds"]}s`);
    }
    if (backend["kind"]) parts.push(`backend=${backend["kind"]}`);
    this.element("#session-echo").textContent = parts.join(" · ");
  }

  private async tail(signal: AbortSignal): Promise<void> {
    if (!this.sessionId) return;
    try {
      for await (const frame of this.client.subscribe(this.sessionId, signal)) {
        this.update(reduce(this.state, frame));
      }
    } catch (error) {
      if (!signal.aborted) {
        this.update(setConnection(this.state, "error", describe(error)));
      }
    }
  }

  async send(): Promise<void> {
    const input = this.element<HTMLInputElement>("#utterance");
    const text = input.value.trim();
    if (!text || !this.sessionId || inputLocked(this.state)) return;
    try {
      const turnIndex = await this.client.postUtterance(this.sessionId, text);
      input.value = "";
      this.update(beginTurn(this.state, turnIndex, text));
    } catch (error) {
      if (error instanceof GatewayRequestError && error.status === 409) {
        this.toast("a turn is already running");
        return;
      }
      this.update(setConnection(this.state, "error", describe(error)));
    }
  }

  private toast(message: string): void {
    const banner = this.element("#banner");
    this.element("#banner-text").textContent = message;
    banner.classList.remove("hidden");
    setTimeout(() => banner.classList.add("hidden"), 2500);
  }

  private render(): void {
    const connection = this.element("#connection");
    connection.textContent = this.state.connection;
    connection.className = `badge badge-${this.state.connection}`;

    const banner = this.element("#banner");
    if (this.state.connection === "error") {
      this.element("#banner-text").textContent =
        this.state.lastError ?? "connection failed";
      banner.classList.remove("hidden");
    } else if (!banner.classList.contains("hidden") && this.state.lastError === null) {
      banner.classList.add("hidden");
    }

    const locked = inputLocked(this.state) || this.state.connection !== "open";
    this.element<HTMLInputElement>("#utterance").disabled = locked;
    this.element<HTMLButtonElement>("#send").disabled = locked;

    const researcher = this.element<HTMLInputElement>("#researcher").checked;
    const conversation = this.element("#conversation");
    conversation.replaceChildren(
      ...this.state.turns.map((turn) => this.renderTurn(turn, researcher)),
    );
    conversation.scrollTop = conversation.scrollHeight;
  }

  private renderTurn(turn: TurnView, researcher: boolean): HTMLElement {
    const section = document.createElement("section");
    section.className = "turn";

    if (turn.user !== null) {
      const user = document.createElement("div");
      user.className = "bubble user";
      user.textContent = turn.user;
      section.appendChild(user);
    }

    turn.bubbles.forEach((bubble, index) => {
      const element = document.createElement("div");
      element.className = `bubble assistant source-${bubble.source}`;
      element.textContent = bubble.text;
      const badges = document.createElement("span");
      badges.className = "badges";
      const source = document.createElement("span");
      source.className = "badge";
      source.textContent = bubble.source;
      badges.appendChild(source);
      if (bubble.latencyMs !== null) {
        const latency = document.createElement("span");
        latency.className = "badge";
        latency.textContent = `${Math.round(bubble.latencyMs)} ms`;
        badges.appendChild(latency);
      }
      if (index === 0) {
        const ttft = document.createElement("span");
        ttft.className = "badge badge-ttft";
        ttft.textContent = `ttft ${ttftBadgeMs(turn)} ms`;
        badges.appendChild(ttft);
      }
      element.appendChild(badges);
      section.appendChild(element);
    });

    if (turn.pendingDelta !== null) {
      const pending = document.createElement("div");
      pending.className = "bubble assistant pending";
      pending.textContent = turn.pendingDelta;
      section.appendChild(pending);
    }

    if (turn.error !== null) {
      const error = document.createElement("div");
      error.className = "bubble error";
      error.textContent = `turn failed: ${turn.error}`;
      section.appendChild(error);
    }

    if (researcher) {
      const lane = document.createElement("details");
      lane.className = "knowledge-lane";
      lane.open = true;
      const summary = document.createElement("summary");
      summary.textContent = `knowledge lane (${turn.timeline.length} events)`;
      lane.appendChild(summary);
      const list = document.createElement("ol");
      for (const entry of turn.timeline) {
        const item = document.createElement("li");
        item.className = `lane-${entry.kind}`;
        item.textContent =
          entry.kind === "silence"
            ? `t=${entry.timestamp.toFixed(2)}s silence tick`
            : `t=${entry.timestamp.toFixed(2)}s ${entry.text ?? ""}`;
        list.appendChild(item);
      }
      lane.appendChild(list);
      section.appendChild(lane);
    }

    return section;
  }
}

function describe(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}

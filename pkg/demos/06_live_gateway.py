"""Drive the streaming gateway over real HTTP, end to end.

Boots the demo gateway on a local port (scripted backend with canned
answers arriving after 2.5 seconds, echo infill), creates a session, posts
a question, and tails the NDJSON frame stream: silence ticks and filler
phrases appear first, the knowledge chunk and its grounded phrase follow,
and a terminal turn_done frame carries the measured first-response time.

For the browser client instead, run:  turnfill serve --demo --ui-dir frontend/dist
"""

import json
import socket
import threading
import time

import httpx
import uvicorn

from turnfill.gateway import SessionManager
from turnfill.service import create_app, demo_session_factory

with socket.socket() as probe:
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]

manager = SessionManager(demo_session_factory(), threaded=True)
server = uvicorn.Server(
    uvicorn.Config(create_app(manager), host="127.0.0.1", port=port, log_level="warning")
)
threading.Thread(target=server.run, daemon=True).start()

base = f"http://127.0.0.1:{port}"
with httpx.Client(base_url=base, timeout=30.0) as client:
    while True:
        try:
            client.get("/health")
            break
        except httpx.TransportError:
            time.sleep(0.02)

    session = client.post("/sessions", json={}).json()
    print(f"session {session['session_id']} config={session['config']}")

    question = "What is the tallest mountain in the world?"
    with client.stream(
        "GET", f"/sessions/{session['session_id']}/events", params={"once": "true"}
    ) as stream:
        client.post(
            f"/sessions/{session['session_id']}/utterances", json={"text": question}
        )
        print(f"\nyou: {question}\n")
        for line in stream.iter_lines():
            if not line.strip():
                continue
            frame = json.loads(line)
            kind, payload = frame["kind"], frame["payload"]
            if kind == "silence_tick":
                print(f"  [t={payload['timestamp']:4.2f}] (silence tick)")
            elif kind == "knowledge_chunk":
                print(f"  [t={payload['timestamp']:4.2f}] backend: {payload['text']}")
            elif kind == "phrase_done":
                badge = payload["source"]
                print(f"  [t={payload['start_timestamp']:4.2f}] assistant ({badge}): {payload['text']}")
            elif kind == "turn_done":
                print(f"\nturn done: ttft={payload['ttft']:.2f}s across "
                      f"{payload['n_phrases']} phrases")
                break

    transcript = client.get(f"/sessions/{session['session_id']}/transcript").json()
    print(f"stored transcript holds {len(transcript['turns'])} turn(s)")

server.should_exit = True

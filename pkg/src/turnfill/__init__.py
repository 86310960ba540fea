"""turnfill: a latency-hiding conversational infill runtime.

A small local phrase generator answers the user immediately, phrase by
phrase, while a large backend model streams knowledge chunks into the turn;
silence markers keep the cadence when the backend is slow.  The package
bundles the turn protocol, the orchestration engine, scripted and HTTP
adapters, an entailment gate, a synthetic dataset pipeline, an evaluation
harness, and a streaming gateway service.
"""

from .adapters import (
    DialogueHistory,
    HttpEndpointConfig,
    HttpInfill,
    HttpStreamingBackend,
    KeyedScriptedBackend,
    ScriptedBackend,
    ScriptedInfill,
    ScriptedSchedule,
    constant_phrase_fn,
    echo_phrase_fn,
)
from .clock import Clock, VirtualClock, WallClock
from .engine import (
    BackendFailure,
    ConversationSession,
    InfillFailure,
    KnowledgeQueue,
    PhraseResult,
    SilencePolicy,
    TURN_END,
    next_event,
    run_conversation,
    run_turn,
)
from .entailment import (
    EntailmentLabel,
    EntailmentVerdict,
    HttpClassifier,
    LexicalOracle,
    TurnEntailmentReport,
    classify,
    verify_dataset_turn,
    verify_turn,
)
from .prompting import (
    SILENCE_TOKEN,
    StreamSegmenter,
    parse_transcript,
    render_context,
    segment_text,
)
from .protocol import (
    Conversation,
    ConversationalPhrase,
    EventKind,
    KnowledgeEvent,
    TurnState,
    TurnTranscript,
    append_event,
    append_phrase,
    close_turn,
    open_turn,
    transcript_from_json,
    transcript_to_json,
)

__version__ = "0.1.0"

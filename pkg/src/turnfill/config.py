"""Configuration: JSON files, environment overrides, and adapter builders.

Configuration is a nested mapping with these top-level sections::

    silence:    period_seconds, max_consecutive
    backend:    kind (scripted | http), plus a matching sub-section
    infill:     kind (scripted | http), plus a matching sub-section
    classifier: kind (lexical | http), plus a matching sub-section
    gateway:    auth_token_env, transcript_dir

Overrides, strongest last: file < environment < explicit sets.  Environment
variables use the ``TURNFILL_`` prefix with double underscores between path
segments (``TURNFILL_SILENCE__PERIOD_SECONDS=0.5``); explicit sets use
dotted paths (``silence.period_seconds=0.5``).  Values parse as JSON when
possible, otherwise stay strings.  Secrets are referenced by environment
variable name (``api_key_env``), never stored in files.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Callable, Mapping

from .adapters import (
    DEFAULT_KNOWLEDGE_SYSTEM_PROMPT,
    DEFAULT_SILENCE_ACKNOWLEDGMENT,
    HttpEndpointConfig,
    HttpInfill,
    HttpStreamingBackend,
    ScriptedBackend,
    ScriptedInfill,
    ScriptedSchedule,
    constant_phrase_fn,
    echo_phrase_fn,
)
from .clock import Clock
from .engine import BackendHandle, InfillHandle, SilencePolicy
from .entailment import (
    ClassifierEndpointConfig,
    EntailmentClassifier,
    HttpClassifier,
    LexicalOracle,
)
from .gateway import InvalidConfig

ENV_PREFIX = "TURNFILL_"

DEFAULT_CONFIG: dict[str, Any] = {
    "silence": {"period_seconds": 1.0, "max_consecutive": 3},
    "backend": {
        "kind": "scripted",
        "scripted": {
            "chunks": [[0.4, "Here is a first detail."], [0.6, "And a second one."]],
            "close_delay": 0.0,
        },
        "http": {
            "url": "",
            "model": "",
            "api_key_env": None,
            "system_prompt": DEFAULT_KNOWLEDGE_SYSTEM_PROMPT,
            "timeout_seconds": 30.0,
        },
    },
    "infill": {
        "kind": "scripted",
        "scripted": {
            "latency": 0.05,
            "mode": "echo",
            "text": DEFAULT_SILENCE_ACKNOWLEDGMENT,
        },
        "http": {
            "url": "",
            "model": "",
            "api_key_env": None,
            "timeout_seconds": 10.0,
        },
    },
    "classifier": {
        "kind": "lexical",
        "http": {"url": "", "timeout_seconds": 30.0, "max_in_flight": 4},
    },
    "gateway": {"auth_token_env": None, "transcript_dir": None},
}


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Recursive dict merge; override wins on scalar/list conflicts."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if (
            key in merged
            and isinstance(merged[key], Mapping)
            and isinstance(value, Mapping)
        ):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: str | Path | None = None) -> dict[str, Any]:
    """Defaults merged with an optional JSON config file."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot load config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InvalidConfig("config file must hold a JSON object")
        config = deep_merge(config, loaded)
    return config


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def set_path(config: dict[str, Any], dotted: str, value: Any) -> None:
    """Set a nested key by dotted path, creating intermediate dicts."""
    node = config
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise InvalidConfig(f"cannot descend into non-object at {part!r}")
    node[parts[-1]] = value


def apply_env_overrides(
    config: dict[str, Any], environ: Mapping[str, str] | None = None
) -> dict[str, Any]:
    """Apply TURNFILL_SECTION__KEY=value overrides from the environment."""
    environ = os.environ if environ is None else environ
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        set_path(config, path, _parse_value(raw))
    return config


def apply_set_overrides(config: dict[str, Any], sets: list[str]) -> dict[str, Any]:
    """Apply ``key.path=value`` overrides from CLI flags."""
    for entry in sets:
        if "=" not in entry:
            raise InvalidConfig(f"--set expects key.path=value, got {entry!r}")
        dotted, raw = entry.split("=", 1)
        set_path(config, dotted.strip(), _parse_value(raw))
    return config


# --- builders ----------------------------------------------------------------


def silence_policy_from(config: Mapping[str, Any]) -> SilencePolicy:
    section = config.get("silence", {})
    try:
        return SilencePolicy(
            period_d=float(section.get("period_seconds", 1.0)),
            max_consecutive_silence=int(section.get("max_consecutive", 3)),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad silence policy: {exc}") from exc


def _scripted_schedule_from(section: Mapping[str, Any]) -> ScriptedSchedule:
    if "file" in section and section["file"]:
        data = json.loads(Path(section["file"]).read_text(encoding="utf-8"))
        return ScriptedSchedule.from_dict(data)
    return ScriptedSchedule.from_dict(dict(section))


def backend_factory_from(
    config: Mapping[str, Any]
) -> Callable[[Clock], BackendHandle]:
    section = config.get("backend", {})
    kind = section.get("kind", "scripted")
    if kind == "scripted":
        schedule = _scripted_schedule_from(section.get("scripted", {}))
        return lambda clock: ScriptedBackend(schedule, clock)
    if kind == "http":
        http = section.get("http", {})
        if not http.get("url"):
            raise InvalidConfig("backend.http.url is required for kind=http")
        endpoint = HttpEndpointConfig(
            url=http["url"],
            model=http.get("model", ""),
            api_key_env=http.get("api_key_env"),
            system_prompt=http.get("system_prompt", DEFAULT_KNOWLEDGE_SYSTEM_PROMPT),
            timeout_seconds=float(http.get("timeout_seconds", 30.0)),
        )
        return lambda clock: HttpStreamingBackend(endpoint, clock)
    raise InvalidConfig(f"unknown backend kind {kind!r}")


def infill_factory_from(config: Mapping[str, Any]) -> Callable[[Clock], InfillHandle]:
    section = config.get("infill", {})
    kind = section.get("kind", "scripted")
    if kind == "scripted":
        scripted = section.get("scripted", {})
        latency = float(scripted.get("latency", 0.05))
        mode = scripted.get("mode", "echo")
        text = scripted.get("text", DEFAULT_SILENCE_ACKNOWLEDGMENT)
        if mode == "echo":
            phrase_fn = echo_phrase_fn(silence_text=text)
        elif mode == "constant":
            phrase_fn = constant_phrase_fn(text)
        else:
            raise InvalidConfig(f"unknown scripted infill mode {mode!r}")
        return lambda clock: ScriptedInfill(clock, latency, phrase_fn)
    if kind == "http":
        http = section.get("http", {})
        if not http.get("url"):
            raise InvalidConfig("infill.http.url is required for kind=http")
        endpoint = HttpEndpointConfig(
            url=http["url"],
            model=http.get("model", ""),
            api_key_env=http.get("api_key_env"),
            timeout_seconds=float(http.get("timeout_seconds", 10.0)),
        )
        return lambda clock: HttpInfill(endpoint, clock)
    raise InvalidConfig(f"unknown infill kind {kind!r}")


def classifier_from(config: Mapping[str, Any]) -> EntailmentClassifier:
    section = config.get("classifier", {})
    kind = section.get("kind", "lexical")
    if kind == "lexical":
        return LexicalOracle()
    if kind == "http":
        http = section.get("http", {})
        if not http.get("url"):
            raise InvalidConfig("classifier.http.url is required for kind=http")
        return HttpClassifier(
            ClassifierEndpointConfig(
                url=http["url"],
                timeout_seconds=float(http.get("timeout_seconds", 30.0)),
                max_in_flight=int(http.get("max_in_flight", 4)),
            )
        )
    raise InvalidConfig(f"unknown classifier kind {kind!r}")

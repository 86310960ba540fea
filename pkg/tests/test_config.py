"""Configuration loading, overrides, and adapter builders."""

from __future__ import annotations

import json

import pytest

from turnfill.adapters import HttpStreamingBackend, ScriptedBackend, ScriptedInfill
from turnfill.clock import VirtualClock
from turnfill.config import (
    apply_env_overrides,
    apply_set_overrides,
    backend_factory_from,
    classifier_from,
    deep_merge,
    infill_factory_from,
    load_config,
    set_path,
    silence_policy_from,
)
from turnfill.entailment import HttpClassifier, LexicalOracle
from turnfill.gateway import InvalidConfig


class TestMerging:
    def test_deep_merge_prefers_override_scalars(self):
        merged = deep_merge({"a": {"b": 1, "c": 2}}, {"a": {"b": 9}})
        assert merged == {"a": {"b": 9, "c": 2}}

    def test_env_overrides_with_double_underscore(self):
        config = {"silence": {"period_seconds": 1.0}}
        apply_env_overrides(
            config, {"TURNFILL_SILENCE__PERIOD_SECONDS": "0.5", "IGNORED": "x"}
        )
        assert config["silence"]["period_seconds"] == 0.5

    def test_set_overrides_parse_json_values(self):
        config = {}
        apply_set_overrides(config, ["silence.period_seconds=0.25", "backend.kind=http"])
        assert config == {
            "silence": {"period_seconds": 0.25},
            "backend": {"kind": "http"},
        }

    def test_set_requires_equals(self):
        with pytest.raises(InvalidConfig):
            apply_set_overrides({}, ["no-equals-here"])

    def test_set_path_nested_creation(self):
        config = {}
        set_path(config, "a.b.c", 3)
        assert config == {"a": {"b": {"c": 3}}}

    def test_load_config_merges_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"silence": {"period_seconds": 0.1}}))
        config = load_config(path)
        assert config["silence"]["period_seconds"] == 0.1
        assert config["silence"]["max_consecutive"] == 3  # default preserved

    def test_load_config_rejects_garbage(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[]")
        with pytest.raises(InvalidConfig):
            load_config(path)


class TestBuilders:
    def test_silence_policy(self):
        policy = silence_policy_from({"silence": {"period_seconds": 0.5, "max_consecutive": 2}})
        assert policy.period_d == 0.5
        assert policy.max_consecutive_silence == 2

    def test_scripted_backend_builder(self):
        factory = backend_factory_from(
            {"backend": {"kind": "scripted", "scripted": {"chunks": [[0.1, "A."]]}}}
        )
        backend = factory(VirtualClock())
        assert isinstance(backend, ScriptedBackend)
        assert backend.schedule.chunks == ((0.1, "A."),)

    def test_scripted_schedule_from_file(self, tmp_path):
        schedule_file = tmp_path / "schedule.json"
        schedule_file.write_text(json.dumps({"chunks": [[0.2, "B."]], "close_delay": 0.1}))
        factory = backend_factory_from(
            {"backend": {"kind": "scripted", "scripted": {"file": str(schedule_file)}}}
        )
        assert factory(VirtualClock()).schedule.chunks == ((0.2, "B."),)

    def test_http_backend_requires_url(self):
        with pytest.raises(InvalidConfig):
            backend_factory_from({"backend": {"kind": "http", "http": {}}})

    def test_http_backend_builder(self):
        factory = backend_factory_from(
            {"backend": {"kind": "http", "http": {"url": "http://x/v1", "model": "m"}}}
        )
        assert isinstance(factory(VirtualClock()), HttpStreamingBackend)

    def test_unknown_backend_kind(self):
        with pytest.raises(InvalidConfig):
            backend_factory_from({"backend": {"kind": "telepathy"}})

    def test_infill_modes(self):
        echo = infill_factory_from(
            {"infill": {"kind": "scripted", "scripted": {"latency": 0.2, "mode": "echo"}}}
        )(VirtualClock())
        assert isinstance(echo, ScriptedInfill)
        assert echo.fixed_latency == 0.2
        with pytest.raises(InvalidConfig):
            infill_factory_from(
                {"infill": {"kind": "scripted", "scripted": {"mode": "wild"}}}
            )

    def test_classifier_builders(self):
        assert isinstance(classifier_from({"classifier": {"kind": "lexical"}}), LexicalOracle)
        assert isinstance(
            classifier_from(
                {"classifier": {"kind": "http", "http": {"url": "http://nli/classify"}}}
            ),
            HttpClassifier,
        )
        with pytest.raises(InvalidConfig):
            classifier_from({"classifier": {"kind": "vibes"}})

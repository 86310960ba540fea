"""CLI subcommands end to end in a temp workspace."""

from __future__ import annotations

import json

import pytest

from turnfill.cli import main
from turnfill.dataset import read_corpus, read_examples


@pytest.fixture()
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_forge_pipeline(workspace, capsys):
    corpus = workspace / "corpus.ndjson"
    examples = workspace / "examples.ndjson"
    kept = workspace / "kept.ndjson"

    assert main(
        [
            "forge", "generate",
            "--domain", "medical",
            "--count", "4",
            "--mode", "template",
            "--seed", "11",
            "--out", str(corpus),
        ]
    ) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["conversations"] == 4
    docs = list(read_corpus(corpus))
    assert len(docs) == 4

    assert main(["forge", "split", "--in", str(corpus), "--out", str(examples)]) == 0
    split_stats = json.loads(capsys.readouterr().out)
    produced = list(read_examples(examples))
    assert len(produced) == split_stats["examples"]

    assert main(["forge", "filter", "--in", str(examples), "--out", str(kept)]) == 0
    filter_stats = json.loads(capsys.readouterr().out)
    assert filter_stats["reject_rate"] == 0.0
    assert len(list(read_examples(kept))) == len(produced)


def test_forge_generate_unknown_domain_exits_nonzero(workspace, capsys):
    code = main(
        ["forge", "generate", "--domain", "medical", "--count", "1", "--out", "x.ndjson"]
    )
    assert code == 0
    with pytest.raises(SystemExit):
        main(["forge", "generate", "--domain", "nope", "--count", "1", "--out", "x"])


def test_eval_run_and_compare(workspace, capsys):
    gold_config = workspace / "gold.json"
    gold_config.write_text(
        json.dumps(
            {
                "backend": {
                    "kind": "scripted",
                    "scripted": {"chunks": [[0.2, "The answer is Mount Everest, Paris, and friends."]]},
                },
                "infill": {"kind": "scripted", "scripted": {"latency": 0.16, "mode": "echo"}},
                "eval": {"mode": "runtime"},
            }
        )
    )
    base_config = workspace / "base.json"
    base_config.write_text(
        json.dumps(
            {
                "eval": {
                    "mode": "model_only",
                    "model_only": {"text": "I don't know.", "latency": 0.16},
                }
            }
        )
    )
    report_a = workspace / "a.json"
    report_b = workspace / "b.json"
    assert main(["eval", "run", "--config", str(base_config), "--out", str(report_a)]) == 0
    capsys.readouterr()
    assert main(["eval", "run", "--config", str(gold_config), "--out", str(report_b)]) == 0
    capsys.readouterr()

    data = json.loads(report_a.read_text())
    assert data["n"] == 20
    assert data["accuracy"] == 0.0

    assert main(["eval", "compare", str(report_a), str(report_b)]) == 0
    table = capsys.readouterr().out
    assert "accuracy" in table


def test_serve_parser_wiring():
    from turnfill.cli import build_parser

    args = build_parser().parse_args(
        ["serve", "--listen", "0.0.0.0:9999", "--demo", "--set", "silence.period_seconds=0.5"]
    )
    assert args.listen == "0.0.0.0:9999"
    assert args.demo is True
    assert args.set == ["silence.period_seconds=0.5"]

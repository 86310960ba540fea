"""Command-line interface: dataset forging, evaluation runs, and the gateway.

Subcommands::

    turnfill forge generate --domain medical --count 50 --mode template --seed 7
    turnfill forge split  --in corpus.ndjson --out examples.ndjson
    turnfill forge filter --in examples.ndjson --out kept.ndjson
    turnfill eval run --config eval.json --items items.ndjson --out report.json
    turnfill eval compare baseline.json candidate.json
    turnfill serve --listen 127.0.0.1:8080 --demo

Any configuration key can be overridden with repeated
``--set key.path=value`` flags; values parse as JSON when possible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset, evaluation
from .clock import VirtualClock, WallClock
from .config import (
    apply_env_overrides,
    apply_set_overrides,
    backend_factory_from,
    classifier_from,
    infill_factory_from,
    load_config,
    silence_policy_from,
)
from .gateway import InvalidConfig

logger = logging.getLogger(__name__)


def _load_cli_config(args: argparse.Namespace) -> dict:
    config = apply_env_overrides(load_config(getattr(args, "config", None)))
    return apply_set_overrides(config, getattr(args, "set", None) or [])


# --- forge -------------------------------------------------------------------


def _forge_generate(args: argparse.Namespace) -> int:
    config = _load_cli_config(args)
    bank = dataset.default_seed_bank()
    seeds = bank.for_domain(args.domain)
    docs = []
    if args.mode == "template":
        for i in range(args.count):
            seed = seeds[(args.seed + i) % len(seeds)]
            docs.append(dataset.template_generate(args.domain, seed, args.seed + i))
    else:
        backend = backend_factory_from(config)(WallClock())
        for i in range(args.count):
            seed = seeds[(args.seed + i) % len(seeds)]
            docs.append(dataset.llm_generate(args.domain, seed, backend))
    dataset.write_corpus(docs, args.out)
    stats = dataset.corpus_stats(docs)
    print(json.dumps({"written": args.out, **stats.to_dict()}, indent=2))
    return 0


def _forge_split(args: argparse.Namespace) -> int:
    docs = list(dataset.read_corpus(args.input))
    examples = []
    for doc in docs:
        examples.extend(dataset.split_turns(doc))
    dataset.write_examples(examples, args.out)
    stats = dataset.corpus_stats(docs)
    print(json.dumps({"written": args.out, **stats.to_dict()}, indent=2))
    return 0


def _forge_filter(args: argparse.Namespace) -> int:
    config = _load_cli_config(args)
    gate = classifier_from(config)
    examples = list(dataset.read_examples(args.input))
    kept, rejected = dataset.filter_entailed(examples, gate)
    dataset.write_examples(kept, args.out)
    if args.rejected:
        dataset.write_examples([r.example for r in rejected], args.rejected)
    total = len(examples)
    print(
        json.dumps(
            {
                "examples": total,
                "kept": len(kept),
                "rejected": len(rejected),
                "reject_rate": round(len(rejected) / total, 4) if total else 0.0,
            },
            indent=2,
        )
    )
    return 0


# --- eval --------------------------------------------------------------------


def _system_from_config(config: dict) -> evaluation.SystemUnderTest:
    eval_cfg = config.get("eval", {})
    mode = eval_cfg.get("mode", "runtime")
    clock_factory = WallClock if eval_cfg.get("clock", "virtual") == "wall" else VirtualClock
    if mode == "runtime":
        return evaluation.RuntimeSystem(
            backend_factory=backend_factory_from(config),
            infill_factory=infill_factory_from(config),
            policy=silence_policy_from(config),
            clock_factory=clock_factory,
        )
    if mode == "backend_only":
        return evaluation.BackendOnlySystem(
            backend_factory=backend_factory_from(config),
            clock_factory=clock_factory,
        )
    if mode == "model_only":
        section = eval_cfg.get("model_only", {})
        text = section.get("text", "I don't know.")
        return evaluation.ModelOnlySystem(
            answer_fn=lambda _question: text,
            latency=float(section.get("latency", 0.16)),
            clock_factory=clock_factory,
        )
    raise InvalidConfig(f"unknown eval mode {mode!r}")


def _eval_run(args: argparse.Namespace) -> int:
    config = _load_cli_config(args)
    eval_cfg = config.get("eval", {})
    items = (
        evaluation.read_qa_items(args.items)
        if args.items
        else evaluation.bundled_qa_items()
    )
    classifier = classifier_from(config) if eval_cfg.get("entailment", True) else None
    report = evaluation.run_eval(
        _system_from_config(config),
        items,
        classifier=classifier,
        sample_size=eval_cfg.get("sample_size"),
        sample_seed=int(eval_cfg.get("sample_seed", 0)),
        parallelism=int(eval_cfg.get("parallelism", 1)),
    )
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(evaluation.render_report_table(report))
    return 0


def _eval_compare(args: argparse.Namespace) -> int:
    def load(path: str) -> evaluation.EvalReport:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        records = tuple(
            evaluation.EvalRecord(
                item_id=r["item_id"],
                ttft=r.get("ttft"),
                full_response=r.get("full_response", ""),
                correct=r.get("correct"),
                error=r.get("error"),
            )
            for r in data["records"]
        )
        return evaluation.EvalReport(
            system=data["system"],
            n=data["n"],
            correct_count=data["correct_count"],
            incorrect_count=data["incorrect_count"],
            error_count=data["error_count"],
            accuracy=data["accuracy"],
            ttft_mean=data["ttft_mean"],
            ttft_std=data["ttft_std"],
            entailment_counts=data["entailment_counts"],
            entailment_percentages=data["entailment_percentages"],
            records=records,
        )

    delta = evaluation.compare_report(load(args.baseline), load(args.candidate))
    print(evaluation.render_delta_table(delta))
    return 0


# --- serve -------------------------------------------------------------------


def _serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import build_service

    app = build_service(
        config_path=args.config,
        sets=args.set or [],
        demo=args.demo,
        ui_dir=args.ui_dir,
    )
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


# --- parser ------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY.PATH=VALUE",
        help="override one config key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turnfill", description="conversational infill runtime tools"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    forge = sub.add_parser("forge", help="dataset pipeline")
    forge_sub = forge.add_subparsers(dest="forge_command", required=True)

    gen = forge_sub.add_parser("generate", help="generate conversation documents")
    gen.add_argument("--domain", required=True, choices=dataset.DOMAINS)
    gen.add_argument("--count", type=int, default=10)
    gen.add_argument("--mode", choices=("template", "llm"), default="template")
    gen.add_argument("--seed", type=int, default=0, help="rng seed / seed-bank offset")
    gen.add_argument("--out", required=True)
    _add_common(gen)
    gen.set_defaults(func=_forge_generate)

    split = forge_sub.add_parser("split", help="explode documents into examples")
    split.add_argument("--in", dest="input", required=True)
    split.add_argument("--out", required=True)
    split.set_defaults(func=_forge_split)

    filt = forge_sub.add_parser("filter", help="entailment-filter examples")
    filt.add_argument("--in", dest="input", required=True)
    filt.add_argument("--out", required=True)
    filt.add_argument("--rejected", help="write rejected examples here")
    _add_common(filt)
    filt.set_defaults(func=_forge_filter)

    ev = sub.add_parser("eval", help="evaluation harness")
    eval_sub = ev.add_subparsers(dest="eval_command", required=True)

    run = eval_sub.add_parser("run", help="run an evaluation")
    run.add_argument("--items", help="QA items file (default: bundled fixture)")
    run.add_argument("--out", help="write the JSON report here")
    _add_common(run)
    run.set_defaults(func=_eval_run)

    compare = eval_sub.add_parser("compare", help="diff two reports")
    compare.add_argument("baseline")
    compare.add_argument("candidate")
    compare.set_defaults(func=_eval_compare)

    serve = sub.add_parser("serve", help="run the streaming gateway")
    serve.add_argument("--listen", default="127.0.0.1:8080", metavar="HOST:PORT")
    serve.add_argument("--demo", action="store_true", help="scripted demo adapters")
    serve.add_argument("--ui-dir", help="static UI assets to serve at /")
    _add_common(serve)
    serve.set_defaults(func=_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, dataset.ParseError, dataset.UnknownDomain) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``shortm {generate,race,eval,report,build-sft}``.

Settings resolve as flag > config file > built-in default. The config file
is a flat YAML or JSON mapping of run settings (``endpoint_url``, ``k``,
``m``, ``tie_break``, ``temperature`` ...) plus the answer-policy keys
``numeric_mode`` and ``extraction_order``.
"""

from __future__ import annotations

import argparse
import asyncio
import dataclasses
import glob
import json
import logging
import sys
from pathlib import Path
from typing import Any

import yaml

from shortm.answers import AnswerPolicy
from shortm.records import LogFormatError, Method, RunConfig, TieBreak

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_DATA = 4
EXIT_RACE = 5

_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_POLICY_KEYS = ("numeric_mode", "extraction_order")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def parse_int_set(text: str) -> tuple[int, ...]:
    """``"1..10"``, ``"1,3,5"`` or a mix such as ``"1..4,8"``."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse integer list {text!r}") from None
    if not out:
        raise ConfigError(f"empty integer list {text!r}")
    return tuple(dict.fromkeys(out))


def load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a key-value mapping")
    unknown = sorted(set(data) - set(_RUN_FIELDS) - set(_POLICY_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {unknown}")
    return data


def build_run_config(file_values: dict[str, Any], overrides: dict[str, Any]) -> RunConfig:
    values = {k: v for k, v in file_values.items() if k in _RUN_FIELDS}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def build_policy(file_values: dict[str, Any]) -> AnswerPolicy:
    kwargs = {k: file_values[k] for k in _POLICY_KEYS if k in file_values}
    try:
        return AnswerPolicy(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad answer policy: {exc}") from None


def expand_logs(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern, recursive=True))
        if not matches:
            raise FileNotFoundError(f"no log files match {pattern!r}")
        paths.extend(Path(m) for m in matches)
    return list(dict.fromkeys(paths))


def load_prompts(path: str | None, text: str | None = None):
    from shortm.orchestrator import PromptItem

    if text is not None:
        return [PromptItem("q0", text)]
    p = Path(path)
    items = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError:
            raise LogFormatError("prompt lines must be JSON objects", str(p), lineno) from None
        if not isinstance(data, dict) or "prompt" not in data:
            raise LogFormatError("prompt object needs a 'prompt' field", str(p), lineno)
        qid = str(data.get("question_id", f"q{len(items)}"))
        meta = {k: v for k, v in data.items() if k not in ("question_id", "prompt", "gold_answer")}
        gold = data.get("gold_answer")
        items.append(PromptItem(qid, str(data["prompt"]), None if gold is None else str(gold), meta))
    return items


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shortm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def live_flags(p):
        p.add_argument("--config", help="YAML/JSON file of run settings")
        p.add_argument("--endpoint-url", dest="endpoint_url")
        p.add_argument("--model", dest="model_name")
        p.add_argument("--temperature", type=float)
        p.add_argument("--top-p", dest="top_p", type=float)
        p.add_argument("--max-tokens", dest="max_tokens", type=int)
        p.add_argument("--seed", dest="rng_seed", type=int)
        p.add_argument("--retry-budget", dest="retry_budget", type=int)

    gen = sub.add_parser("generate", help="sample a full pool of generations per prompt")
    live_flags(gen)
    gen.add_argument("--prompts", required=True, help="JSONL of {question_id, prompt, gold_answer, ...}")
    gen.add_argument("--n", type=int, default=20, help="generations per prompt (default 20)")
    gen.add_argument("--out", required=True, help="output directory, one log per prompt")
    gen.add_argument("--concurrency", type=int, default=None)

    race = sub.add_parser("race", help="live shortest-m@k on one or more prompts")
    live_flags(race)
    src = race.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompts", help="JSONL prompt file")
    src.add_argument("--prompt", help="a single prompt string")
    race.add_argument("--k", type=int)
    race.add_argument("--m", type=int)
    race.add_argument("--tie-break", dest="tie_break", choices=[t.value for t in TieBreak])
    race.add_argument("--log", required=True, help="JSONL log file to append to")

    ev = sub.add_parser("eval", help="replay curves over (method, k, m) grids")
    ev.add_argument("--logs", nargs="+", required=True, help="log files or glob patterns")
    ev.add_argument("--k", default="1..10")
    ev.add_argument("--m", default="1,3")
    ev.add_argument("--methods", default=",".join(m.value for m in Method))
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--exact-threshold", type=int, default=None)
    ev.add_argument("--mc-samples", type=int, default=None)
    ev.add_argument("--majority-tie-break", choices=[t.value for t in TieBreak], default=TieBreak.RANDOM.value)
    ev.add_argument("--shortest-tie-break", choices=[t.value for t in TieBreak], default=TieBreak.SHORTEST.value)
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--config", help="answer-policy settings for grading unlabeled records")
    ev.add_argument("--out", required=True, help="CSV path; a JSON summary is written next to it")

    rep = sub.add_parser("report", help="length tables (difficulty thirds, shortest/longest/random)")
    rep.add_argument("--logs", nargs="+", required=True)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--format", choices=["text", "csv"], default="text")
    rep.add_argument("--table", choices=["1", "2", "both"], default="both")
    rep.add_argument("--random-mode", choices=["expectation", "draw"], default="expectation")
    rep.add_argument("--config")
    rep.add_argument("--out", help="write the report here instead of stdout")

    sft = sub.add_parser("build-sft", help="build short/long/random fine-tuning variants")
    sft.add_argument("--logs", nargs="+", required=True)
    sft.add_argument("--seed", type=int, default=0)
    sft.add_argument("--out", required=True)
    sft.add_argument("--n-per-prompt", type=int, default=None)
    sft.add_argument("--correct-only", action="store_true")
    sft.add_argument("--bins", type=int, default=20)
    sft.add_argument("--config")
    return parser


def _live_overrides(args) -> dict[str, Any]:
    keys = ("endpoint_url", "model_name", "temperature", "top_p", "max_tokens", "rng_seed", "retry_budget", "k", "m", "tie_break")
    return {k: getattr(args, k, None) for k in keys}


def _cmd_generate(args) -> int:
    from shortm.orchestrator import generate_pool

    file_values = load_config_file(args.config)
    config = build_run_config(file_values, _live_overrides(args))
    policy = build_policy(file_values)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    prompts = load_prompts(args.prompts)
    paths = generate_pool(config, prompts, args.n, args.out, policy=policy, concurrency=args.concurrency)
    print(f"wrote {len(paths)} log file(s) with {args.n} generation(s) each to {args.out}")
    return EXIT_OK


def _cmd_race(args) -> int:
    from shortm.orchestrator import LogWriter, RaceError, race_question_async

    file_values = load_config_file(args.config)
    config = build_run_config(file_values, _live_overrides(args))
    policy = build_policy(file_values)
    prompts = load_prompts(args.prompts, args.prompt)

    async def run():
        writer = LogWriter(args.log)
        code = EXIT_OK
        for item in prompts:
            try:
                result = await race_question_async(
                    config, item.prompt, question_id=item.question_id, gold_answer=item.gold_answer,
                    policy=policy, log_writer=writer, meta=item.meta,
                )
            except RaceError as exc:
                print(f"{item.question_id}: race failed: {exc}", file=sys.stderr)
                code = EXIT_RACE
                continue
            print(f"{item.question_id}: answer={result.answer} status={result.status} winners={list(result.winners)}")
        return code

    return asyncio.run(run())


def _cmd_eval(args) -> int:
    from shortm.replay import CurveGrid, emit_curves, ingest

    try:
        methods = tuple(Method(m.strip()) for m in args.methods.split(",") if m.strip())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    grid = CurveGrid(
        methods=methods,
        k_set=parse_int_set(args.k),
        m_set=parse_int_set(args.m),
        rng_seed=args.seed,
        majority_tie_break=TieBreak(args.majority_tie_break),
        shortest_tie_break=TieBreak(args.shortest_tie_break),
        workers=args.workers,
        **{k: v for k, v in (("exact_threshold", args.exact_threshold), ("mc_samples", args.mc_samples)) if v is not None},
    )
    if min(grid.k_set) < 1 or min(grid.m_set) < 1:
        raise ConfigError("k and m values must be >= 1")
    policy = build_policy(load_config_file(args.config))
    logs = ingest(expand_logs(args.logs), policy)
    text = emit_curves(logs, grid, args.out)
    print(f"wrote {text.count(chr(10)) - 1} curve rows over {len(logs)} question(s) to {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from shortm.replay import emit_table1, emit_table2, ingest

    policy = build_policy(load_config_file(args.config))
    logs = ingest(expand_logs(args.logs), policy)
    parts = []
    if args.table in ("1", "both"):
        parts.append(emit_table1(logs, args.format))
    if args.table in ("2", "both"):
        parts.append(emit_table2(logs, args.seed, args.format, args.random_mode))
    text = "\n".join(parts)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
        print(f"wrote report to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_build_sft(args) -> int:
    from shortm.replay import ingest
    from shortm.sft import build_variants, write_variants

    if args.bins < 1:
        raise ConfigError("--bins must be >= 1")
    policy = build_policy(load_config_file(args.config))
    logs = ingest(expand_logs(args.logs), policy)
    variants = build_variants(logs, args.seed, args.n_per_prompt, args.correct_only, args.bins)
    write_variants(variants, args.out)
    print(f"built {len(variants.rows['short'])} prompt(s) per variant, skipped {len(variants.skipped)}, in {args.out}")
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "race": _cmd_race,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "build-sft": _cmd_build_sft,
}


def main(argv: list[str] | None = None) -> int:
    from shortm.orchestrator import CredentialError, TransportError
    from shortm.replay import DataError

    try:
        args = _parser().parse_args(argv)
    except ConfigError as exc:
        print(f"shortm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CredentialError) as exc:
        print(f"shortm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"shortm: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (DataError, LogFormatError, FileNotFoundError, ValueError) as exc:
        print(f"shortm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``prepare``, ``run``, ``evaluate`` and ``inspect``."""

from __future__ import annotations

import argparse
import collections
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import yaml

from .agents import TemplateSet
from .backend import CachingBackend, LiveBackend, RateLimiter, ResponseCache, Usage, load_mock_script
from .config import RunConfig, load_config
from .corpus import iter_jsonl, load_split, make_instances, read_instances, write_instances
from .errors import ConfigError, EmptyMatrix, MadaccError, UnknownInstanceId
from .labels import LABELS
from .metrics import EvalReport, Prediction, evaluate, format_report
from .protocol import DebateRecord, run_baseline, run_pipeline

METHODS = ("madacc", "vanilla", "cot", "smart")
METHOD_NAMES = {
    "madacc": "MAD-ACC",
    "vanilla": "Vanilla",
    "cot": "Chain-of-Thought",
    "smart": "Smart Reasoning",
}
INSTANCES_FILE = "instances.jsonl"


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def cmd_prepare(config: RunConfig, out: Path | None = None) -> dict:
    essays = load_split(config.corpus_dir, config.split_file)
    instances = [inst for essay in essays for inst in make_instances(essay, config.context)]
    out = out or config.output_dir / INSTANCES_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    write_instances(instances, out)
    gold = collections.Counter(inst.gold_label for inst in instances)
    summary = {
        "essays": len(essays),
        "instances": len(instances),
        "gold_distribution": {label.value: gold.get(label, 0) for label in LABELS},
        "instances_path": str(out),
    }
    _write_json(out.with_name(out.stem + ".summary.json"), summary)
    return summary


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def build_backend(config: RunConfig):
    if config.backend.kind == "mock":
        backend = load_mock_script(config.backend.mock_script_path)
    else:
        limiter = RateLimiter(config.rate_limit_rpm) if config.rate_limit_rpm else None
        backend = LiveBackend(
            config.backend.endpoint_url,
            api_key_env=config.backend.api_key_env,
            timeout=config.backend.timeout,
            rate_limiter=limiter,
        )
    if config.backend.cache_dir is not None:
        backend = CachingBackend(backend, ResponseCache(config.backend.cache_dir))
    return backend


def load_templates(config: RunConfig) -> TemplateSet:
    return TemplateSet.load(config.templates_dir, config.template_files)


class _Progress:
    def __init__(self, total: int, stream=sys.stderr):
        self.total = total
        self.done = 0
        self.stream = stream

    def __call__(self, item) -> None:
        self.done += 1
        label = getattr(item, "verdict_label", None) or getattr(item, "predicted", None)
        status = "FAILED" if item.failed else label.value
        print(f"[{self.done}/{self.total}] {item.instance_id} -> {status}", file=self.stream)


def cmd_run(
    config: RunConfig,
    method: str,
    instances_path: Path | None = None,
    run_dir: Path | None = None,
    quiet: bool = False,
) -> Path:
    """Run one method over the prepared instances and write its artifacts to a run directory."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    instances_path = instances_path or config.output_dir / INSTANCES_FILE
    if not instances_path.is_file():
        raise ConfigError(f"prepared instances not found: {instances_path} (run 'prepare' first)")
    backend = build_backend(config)
    templates = load_templates(config)
    instances = read_instances(instances_path)

    if run_dir is None:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        run_dir = config.output_dir / "runs" / f"{stamp}-{method}"
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = config.snapshot()
    snapshot.update(method=method, instances_path=str(instances_path))
    (run_dir / "config.yaml").write_text(yaml.safe_dump(snapshot, sort_keys=True), encoding="utf-8")

    progress = None if quiet else _Progress(len(instances))
    if method == "madacc":
        records = run_pipeline(
            instances, config.debate, backend, templates, parallelism=config.parallelism, progress=progress
        )
        _write_jsonl(run_dir / "records.jsonl", (r.to_json() for r in records))
        predictions = [r.to_prediction() for r in records]
        usage = sum((r.usage for r in records), Usage())
    else:
        predictions = run_baseline(
            instances, method, config.debate, backend, templates,
            parallelism=config.parallelism, progress=progress,
        )
        usage = sum((p.usage or Usage() for p in predictions), Usage())
    _write_jsonl(run_dir / "predictions.jsonl", (p.to_json() for p in predictions))

    failed = sum(p.failed for p in predictions)
    summary = {
        "method": method,
        "instances": len(predictions),
        "failed": failed,
        "usage": usage.to_json(),
    }
    _write_json(run_dir / "summary.json", summary)
    if failed < len(predictions):
        report = evaluate(predictions)
        _write_report(report, run_dir, METHOD_NAMES[method])
    if not quiet:
        print(
            f"{method}: {len(predictions)} instances, {failed} failed; "
            f"tokens in={usage.input_tokens} out={usage.output_tokens}",
            file=sys.stderr,
        )
    return run_dir


def _write_report(report: EvalReport, directory: Path, method: str) -> str:
    text = format_report(report, method)
    (directory / "report.txt").write_text(text, encoding="utf-8")
    _write_json(directory / "report.json", report.to_json())
    return text


# ---------------------------------------------------------------------------
# evaluate / inspect
# ---------------------------------------------------------------------------


def read_predictions(path: Path) -> list[Prediction]:
    out = []
    for line_no, data in iter_jsonl(path):
        try:
            out.append(Prediction.from_json(data))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{line_no}: bad prediction record ({exc})") from None
    return out


def cmd_evaluate(predictions_path: Path, method: str = "MAD-ACC", out_dir: Path | None = None) -> tuple[str, dict]:
    report = evaluate(read_predictions(predictions_path))
    text = _write_report(report, out_dir or predictions_path.parent, method)
    return text, report.to_json()


def read_records(path: Path) -> list[DebateRecord]:
    out = []
    for line_no, data in iter_jsonl(path):
        try:
            out.append(DebateRecord.from_json(data))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{line_no}: bad debate record ({exc})") from None
    return out


def format_record(record: DebateRecord) -> str:
    lines = [
        f"Instance: {record.instance_id}  (essay {record.essay_id}, gold {record.gold_label.value})",
        f"Input: {record.target_excerpt}",
    ]
    if record.manager_distribution is not None:
        lines.append("Manager distribution:")
        for label, p in record.manager_distribution.items():
            lines.append(f"  P({label.value}) = {p:.2f}")
    if record.failed:
        lines.append(f"Status: failed ({record.error})")
        return "\n".join(lines) + "\n"
    if record.skipped:
        lines.append("Debate: skipped (confidence ≥ τ)")
        lines.append(f"Final Label: {record.verdict_label.value.upper()}")
        return "\n".join(lines) + "\n"
    coin = "top-1 to Proponent" if record.coin else "top-1 to Opponent"
    lines.append(
        f"Stance: Proponent -> {record.stance.proponent.value}, "
        f"Opponent -> {record.stance.opponent.value}  ({coin})"
    )
    lines.append("Debate:")
    for turn in record.transcript:
        lines.append(f"  [{turn.index}] {turn.speaker.value} argues {turn.defended_label.value}:")
        lines.extend(f"      {ln}" for ln in turn.content.splitlines())
    lines.append("Verdict:")
    lines.extend(f"  {ln}" for ln in record.verdict_rationale.splitlines())
    if record.verdict_outside_stance:
        lines.append("  (verdict is outside the debated pair)")
    lines.append(f"Final Label: {record.verdict_label.value.upper()}")
    return "\n".join(lines) + "\n"


def cmd_inspect(records_path: Path, instance_id: str) -> str:
    for record in read_records(records_path):
        if record.instance_id == instance_id:
            return format_record(record)
    raise UnknownInstanceId(f"no record for instance {instance_id!r} in {records_path}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="run configuration (YAML)")
    parser.add_argument("--seed", type=int, default=default, help="override debate.rng_seed")
    parser.add_argument("--parallelism", type=int, default=default, help="concurrent debates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="madacc", description="Multi-agent debate argument classification.")
    _global_options(parser, suppress=False)
    parser.add_argument("-q", "--quiet", action="store_true", help="no per-instance progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse the corpus split into masked instances")
    _global_options(p, suppress=True)
    p.add_argument("--out", type=Path, help="instances JSONL (default: <output_dir>/instances.jsonl)")

    p = sub.add_parser("run", help="classify prepared instances")
    _global_options(p, suppress=True)
    p.add_argument("--method", choices=METHODS, default="madacc")
    p.add_argument("--instances", type=Path, help="instances JSONL (default: <output_dir>/instances.jsonl)")
    p.add_argument("--run-dir", type=Path, help="output directory (default: timestamped under <output_dir>/runs)")

    p = sub.add_parser("evaluate", help="score a predictions JSONL file")
    _global_options(p, suppress=True)
    p.add_argument("predictions", type=Path)
    p.add_argument("--method", default="MAD-ACC", help="row name in the report")
    p.add_argument("--out-dir", type=Path, help="where report.txt/report.json go (default: beside predictions)")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of the table")

    p = sub.add_parser("inspect", help="print one debate transcript")
    _global_options(p, suppress=True)
    p.add_argument("records", type=Path)
    p.add_argument("--id", dest="instance_id", required=True)
    return parser


def _config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    return load_config(args.config, seed=args.seed, parallelism=args.parallelism)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "prepare":
            summary = cmd_prepare(_config(args), args.out)
            gold = ", ".join(f"{k} {v}" for k, v in summary["gold_distribution"].items())
            print(f"{summary['essays']} essays, {summary['instances']} instances ({gold})")
            print(f"wrote {summary['instances_path']}")
        elif args.command == "run":
            run_dir = cmd_run(_config(args), args.method, args.instances, args.run_dir, quiet=args.quiet)
            report = run_dir / "report.txt"
            if report.exists():
                print(report.read_text(encoding="utf-8"), end="")
            print(f"run directory: {run_dir}")
        elif args.command == "evaluate":
            text, data = cmd_evaluate(args.predictions, args.method, args.out_dir)
            print(json.dumps(data, indent=2) if args.json else text, end="\n" if args.json else "")
        elif args.command == "inspect":
            print(cmd_inspect(args.records, args.instance_id), end="")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MadaccError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

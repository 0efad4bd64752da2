"""Debate orchestration: Manager, stance assignment, alternating turns, Judge.

A debate for one instance runs strictly in sequence; ``run_pipeline`` fans
independent instances out over a thread pool and joins results in input order.
Every instance draws its coin from an rng seeded by ``(rng_seed, instance_id)``,
so results do not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from . import agents
from .agents import TemplateSet
from .backend import Backend, ChatMessage, GenerationParams, Usage
from .corpus import Instance
from .errors import (
    AuthError,
    BackendError,
    BackendFailure,
    DebateFailure,
    JudgeFailure,
    ManagerFailure,
    ParseError,
)
from .labels import ArgLabel, LabelDistribution, StancePair, argmax, top_two
from .metrics import Prediction
from .transcript import Speaker, Transcript, Turn, speaker_for_turn

log = logging.getLogger(__name__)

PARSE_ATTEMPTS = 3


@dataclass(frozen=True)
class DebateConfig:
    rounds: int = 2
    skip_threshold: float = 1.0
    manager_params: GenerationParams = GenerationParams("gemini-2.5-flash", 0.0, 1024)
    debater_params: GenerationParams = GenerationParams("gemini-2.5-flash", 0.7, 1024)
    judge_params: GenerationParams = GenerationParams("gemini-2.5-pro", 0.0, 4096)
    rng_seed: int = 0
    parse_attempts: int = PARSE_ATTEMPTS

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 <= self.skip_threshold <= 1.0:
            raise ValueError("skip_threshold must lie in [0, 1]")
        if self.parse_attempts < 1:
            raise ValueError("parse_attempts must be >= 1")

    @property
    def total_turns(self) -> int:
        return 2 * self.rounds


@dataclass
class DebateRecord:
    instance_id: str
    essay_id: str
    gold_label: ArgLabel
    target_excerpt: str = ""
    manager_distribution: LabelDistribution | None = None
    stance: StancePair | None = None
    coin: bool | None = None
    skipped: bool = False
    transcript: Transcript = field(default_factory=Transcript)
    verdict_label: ArgLabel | None = None
    verdict_rationale: str = ""
    failed: bool = False
    error: str | None = None
    usage: Usage = field(default_factory=Usage)
    model_ids: dict[str, str] = field(default_factory=dict)

    @property
    def verdict_outside_stance(self) -> bool:
        if self.verdict_label is None or self.stance is None or self.skipped:
            return False
        return self.verdict_label not in (self.stance.proponent, self.stance.opponent)

    def to_prediction(self) -> Prediction:
        return Prediction(self.instance_id, self.verdict_label, self.gold_label, self.failed)

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "essay_id": self.essay_id,
            "gold_label": self.gold_label.value,
            "target_excerpt": self.target_excerpt,
            "manager_distribution": (
                self.manager_distribution.to_dict() if self.manager_distribution else None
            ),
            "stance": (
                {"proponent": self.stance.proponent.value, "opponent": self.stance.opponent.value}
                if self.stance
                else None
            ),
            "coin": self.coin,
            "skipped": self.skipped,
            "turns": [t.to_json() for t in self.transcript],
            "verdict": (
                {"label": self.verdict_label.value, "rationale": self.verdict_rationale}
                if self.verdict_label
                else None
            ),
            "verdict_outside_stance": self.verdict_outside_stance,
            "failed": self.failed,
            "error": self.error,
            "usage": self.usage.to_json(),
            "model_ids": self.model_ids,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DebateRecord":
        dist = data.get("manager_distribution")
        stance = data.get("stance")
        verdict = data.get("verdict")
        usage = data.get("usage") or {}
        return cls(
            instance_id=data["instance_id"],
            essay_id=data.get("essay_id", ""),
            gold_label=ArgLabel(data["gold_label"]),
            target_excerpt=data.get("target_excerpt", ""),
            manager_distribution=LabelDistribution.from_dict(dist) if dist else None,
            stance=StancePair(ArgLabel(stance["proponent"]), ArgLabel(stance["opponent"])) if stance else None,
            coin=data.get("coin"),
            skipped=bool(data.get("skipped", False)),
            transcript=Transcript(tuple(Turn.from_json(t) for t in data.get("turns", []))),
            verdict_label=ArgLabel(verdict["label"]) if verdict else None,
            verdict_rationale=verdict["rationale"] if verdict else "",
            failed=bool(data.get("failed", False)),
            error=data.get("error"),
            usage=Usage(int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0))),
            model_ids=dict(data.get("model_ids") or {}),
        )


def instance_rng(rng_seed: int, instance_id: str) -> random.Random:
    digest = hashlib.sha256(f"{rng_seed}\x00{instance_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def assign_stances(dist: LabelDistribution, rng: random.Random) -> tuple[StancePair, bool]:
    """Fair coin: ``True`` means the Proponent defends the most probable label."""
    first, second = top_two(dist)
    coin = rng.random() < 0.5
    return (StancePair(first, second) if coin else StancePair(second, first)), coin


def should_skip(dist: LabelDistribution, threshold: float) -> bool:
    # 1.0 means "debate everything", even for a point-mass distribution
    if threshold >= 1.0:
        return False
    return dist[argmax(dist)] >= threshold


class _Caller:
    """Tracks token usage for one instance and wraps backend errors with its id."""

    def __init__(self, backend: Backend, instance_id: str):
        self.backend = backend
        self.instance_id = instance_id
        self.usage = Usage()

    def __call__(self, messages: Sequence[ChatMessage], params: GenerationParams, agent: str) -> str:
        try:
            response = self.backend.complete(messages, params, agent=agent)
        except AuthError:
            raise
        except BackendError as exc:
            raise BackendFailure(self.instance_id, f"{agent} call failed: {exc}") from exc
        self.usage = self.usage + response.usage
        return response.text

    def with_reprompts(
        self,
        messages: list[ChatMessage],
        params: GenerationParams,
        agent: str,
        parse: Callable[[str], object],
        retry_message: str,
        attempts: int,
        failure: type[DebateFailure],
    ):
        convo = list(messages)
        last = ""
        for _ in range(attempts):
            text = self(convo, params, agent)
            try:
                return parse(text)
            except ParseError as exc:
                last = str(exc)
                convo = convo + [ChatMessage("assistant", text), ChatMessage("user", retry_message)]
        raise failure(self.instance_id, f"{agent} reply unparseable after {attempts} attempts ({last})")


def _model_ids(config: DebateConfig) -> dict[str, str]:
    return {
        "manager": config.manager_params.model_id,
        "debater": config.debater_params.model_id,
        "judge": config.judge_params.model_id,
    }


def run_debate(
    instance: Instance, config: DebateConfig, backend: Backend, templates: TemplateSet
) -> DebateRecord:
    """Manager, optional skip, 2*rounds debater turns, then the Judge.

    Raises :class:`ManagerFailure`, :class:`JudgeFailure` or
    :class:`BackendFailure`; the exception carries the partial record as
    ``record``.
    """
    call = _Caller(backend, instance.instance_id)
    record = _new_record(instance, config)
    try:
        _run(instance, config, call, templates, record)
    except DebateFailure as exc:
        record.usage = call.usage
        exc.record = record
        raise
    record.usage = call.usage
    return record


def _run(instance, config, call: _Caller, templates, record: DebateRecord) -> None:
    reply = call.with_reprompts(
        agents.render_manager_prompt(instance, templates),
        config.manager_params,
        "manager",
        agents.parse_manager_reply,
        agents.MANAGER_RETRY,
        config.parse_attempts,
        ManagerFailure,
    )
    dist = reply.distribution
    record.manager_distribution = dist

    rng = instance_rng(config.rng_seed, instance.instance_id)
    stance, coin = assign_stances(dist, rng)
    record.stance, record.coin = stance, coin

    if should_skip(dist, config.skip_threshold):
        record.skipped = True
        record.verdict_label = argmax(dist)
        record.verdict_rationale = f"skipped: manager confidence {dist[record.verdict_label]:.3f}"
        return

    labels = {Speaker.PROPONENT: stance.proponent, Speaker.OPPONENT: stance.opponent}
    transcript = Transcript()
    for index in range(1, config.total_turns + 1):
        speaker = speaker_for_turn(index)
        mine = labels[speaker]
        theirs = labels[Speaker.OPPONENT if speaker == Speaker.PROPONENT else Speaker.PROPONENT]
        messages = agents.render_debater_prompt(
            instance, mine, theirs, transcript, templates, speaker=speaker, total_turns=config.total_turns
        )
        content = call(messages, config.debater_params, "debater")
        transcript = transcript.append(Turn(index, speaker, mine, content.strip()))
        record.transcript = transcript

    verdict = call.with_reprompts(
        agents.render_judge_prompt(instance, transcript, templates, total_turns=config.total_turns),
        config.judge_params,
        "judge",
        agents.parse_judge_reply,
        agents.JUDGE_RETRY,
        config.parse_attempts,
        JudgeFailure,
    )
    record.verdict_label = verdict.label
    record.verdict_rationale = verdict.rationale


def _new_record(instance: Instance, config: DebateConfig) -> DebateRecord:
    return DebateRecord(
        instance.instance_id,
        instance.essay_id,
        instance.gold_label,
        target_excerpt=instance.excerpt(),
        model_ids=_model_ids(config),
    )


def _failed_record(instance: Instance, config: DebateConfig, exc: DebateFailure) -> DebateRecord:
    record = getattr(exc, "record", None) or _new_record(instance, config)
    record.failed = True
    record.error = f"{type(exc).__name__}: {exc}"
    record.verdict_label = None
    record.verdict_rationale = ""
    return record


def run_pipeline(
    instances: Sequence[Instance],
    config: DebateConfig,
    backend: Backend,
    templates: TemplateSet,
    parallelism: int = 1,
    progress: Callable[[DebateRecord], None] | None = None,
) -> list[DebateRecord]:
    """Debate every instance with at most ``parallelism`` debates in flight.

    Per-instance failures become records with ``failed=True``; an
    :class:`AuthError` aborts the whole run.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(instance: Instance) -> DebateRecord:
        try:
            record = run_debate(instance, config, backend, templates)
        except DebateFailure as exc:
            log.warning("instance failed: %s", exc)
            record = _failed_record(instance, config, exc)
        if progress is not None:
            progress(record)
        return record

    if parallelism == 1:
        return [one(inst) for inst in instances]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, instances))


def _baseline_params(kind: str, config: DebateConfig) -> GenerationParams:
    # Vanilla and CoT run on the Manager's model, Smart Reasoning on the Judge's
    return config.judge_params if kind == "smart" else config.manager_params


def run_baseline(
    instances: Sequence[Instance],
    kind: str,
    config: DebateConfig,
    backend: Backend,
    templates: TemplateSet,
    parallelism: int = 1,
    progress: Callable[[Prediction], None] | None = None,
) -> list[Prediction]:
    if kind not in agents.BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    params = _baseline_params(kind, config)

    def one(instance: Instance) -> Prediction:
        call = _Caller(backend, instance.instance_id)
        try:
            reply = call.with_reprompts(
                agents.render_baseline_prompt(instance, kind, templates),
                params,
                kind,
                agents.parse_judge_reply,
                agents.JUDGE_RETRY,
                config.parse_attempts,
                JudgeFailure,
            )
            pred = Prediction(instance.instance_id, reply.label, instance.gold_label, usage=call.usage)
        except DebateFailure as exc:
            log.warning("instance failed: %s", exc)
            pred = Prediction(instance.instance_id, None, instance.gold_label, True, usage=call.usage)
        if progress is not None:
            progress(pred)
        return pred

    if parallelism == 1:
        return [one(inst) for inst in instances]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, instances))


def with_seed(config: DebateConfig, seed: int) -> DebateConfig:
    return replace(config, rng_seed=seed)

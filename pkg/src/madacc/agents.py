"""Prompt rendering and reply parsing for the Manager, Debaters, Judge and baselines.

Templates are plain-text files with ``[system]`` and ``[user]`` sections and
``{{name}}`` placeholders. The judge template may wrap debate-specific wording
in ``{{#debate}}...{{/debate}}``; the Smart Reasoning baseline reuses the judge
system text with those sections removed.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .backend import ChatMessage
from .corpus import Instance
from .errors import IncompleteTranscript, ParseError, TemplateError
from .labels import ArgLabel, LabelDistribution, label_definitions_block, normalize
from .transcript import Speaker, Transcript

ROLES = ("manager", "debater", "judge", "vanilla", "cot", "smart")
BASELINE_KINDS = ("vanilla", "cot", "smart")

REQUIRED = {
    "manager": {"label_definitions", "masked_text"},
    "debater": {"label_definitions", "masked_text", "assigned_label", "opponent_label", "transcript", "speaker"},
    "judge": {"label_definitions", "masked_text", "transcript"},
    "vanilla": {"masked_text"},
    "cot": {"masked_text"},
    "smart": {"masked_text"},
}

EMPTY_TRANSCRIPT = "(no arguments yet; you open the debate)"
MANAGER_RETRY = "Your previous reply could not be read. Reply with only the JSON object described above."
JUDGE_RETRY = (
    "Your previous reply did not end with a line of the form LABEL: <name>. "
    "Answer again and finish with that line."
)
NO_RATIONALE = "(no rationale given)"

_PLACEHOLDER = re.compile(r"\{\{\s*([a-z_]+)\s*\}\}")
_DEBATE_SECTION = re.compile(r"\{\{#debate\}\}(.*?)\{\{/debate\}\}", re.DOTALL)
_SECTION_HEADER = re.compile(r"^\[(system|user)\]\s*$", re.MULTILINE)
_LABEL_LINE = re.compile(r"^\W*label\W*:\s*(.+?)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    system: str
    user: str

    @property
    def template_text(self) -> str:
        return f"[system]\n{self.system}\n\n[user]\n{self.user}\n"

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER.findall(self.system)) | set(_PLACEHOLDER.findall(self.user))

    @classmethod
    def parse(cls, role: str, text: str) -> "PromptTemplate":
        parts = _SECTION_HEADER.split(text)
        sections = {name: body.strip("\n") for name, body in zip(parts[1::2], parts[2::2])}
        if "user" not in sections:
            raise TemplateError(f"{role} template has no [user] section")
        return cls(role, sections.get("system", "").strip(), sections["user"].strip())


def _check_required(template: PromptTemplate) -> None:
    present = template.placeholders()
    missing = REQUIRED[template.role] - present
    # the judge system text supplies label definitions to smart
    if template.role == "smart":
        missing -= {"label_definitions"}
    if missing:
        names = ", ".join("{{" + m + "}}" for m in sorted(missing))
        raise TemplateError(f"{template.role} template is missing {names}")


class TemplateSet:
    """Loaded prompt templates, one per role."""

    def __init__(self, templates: Mapping[str, PromptTemplate]):
        missing = set(ROLES) - set(templates)
        if missing:
            raise TemplateError(f"no template for roles: {', '.join(sorted(missing))}")
        for template in templates.values():
            _check_required(template)
        self.templates = dict(templates)

    def __getitem__(self, role: str) -> PromptTemplate:
        return self.templates[role]

    @classmethod
    def load(cls, directory: Path | str | None = None, files: Mapping[str, Path | str] | None = None):
        """Load ``<role>.txt`` from ``directory`` (packaged defaults when ``None``).

        ``files`` maps individual roles to explicit paths and takes precedence.
        """
        files = dict(files or {})
        loaded = {}
        for role in ROLES:
            if role in files:
                text = Path(files[role]).read_text(encoding="utf-8")
            elif directory is not None and (Path(directory) / f"{role}.txt").is_file():
                text = (Path(directory) / f"{role}.txt").read_text(encoding="utf-8")
            else:
                text = resources.files("madacc").joinpath("templates", f"{role}.txt").read_text(encoding="utf-8")
            loaded[role] = PromptTemplate.parse(role, text)
        return cls(loaded)

    @classmethod
    def default(cls) -> "TemplateSet":
        return cls.load()


def render(text: str, values: Mapping[str, str], debate: bool = True) -> str:
    text = _DEBATE_SECTION.sub((lambda m: m.group(1)) if debate else "", text)

    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise TemplateError(f"unbound placeholder {{{{{name}}}}}")
        return str(values[name])

    out = _PLACEHOLDER.sub(sub, text)
    if "{{" in out:
        raise TemplateError(f"residual template syntax in rendered text: {out[out.index('{{'):][:40]!r}")
    return out


def _messages(system: str, user: str) -> list[ChatMessage]:
    out = []
    if system.strip():
        out.append(ChatMessage("system", system))
    out.append(ChatMessage("user", user))
    return out


def _require(template: PromptTemplate, *names: str) -> None:
    present = template.placeholders()
    for name in names:
        if name not in present:
            raise TemplateError(f"{template.role} template is missing {{{{{name}}}}}")


def render_transcript(transcript: Transcript) -> str:
    if not transcript.turns:
        return EMPTY_TRANSCRIPT
    blocks = [
        f"[Turn {t.index}] {t.speaker.value} (defends {t.defended_label.value}):\n{t.content.strip()}"
        for t in transcript
    ]
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Manager
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManagerReply:
    distribution: LabelDistribution
    raw_text: str


def render_manager_prompt(instance: Instance, templates: TemplateSet) -> list[ChatMessage]:
    tpl = templates["manager"]
    _require(tpl, "masked_text", "label_definitions")
    values = {"masked_text": instance.masked_text, "label_definitions": label_definitions_block()}
    return _messages(render(tpl.system, values), render(tpl.user, values))


def _json_objects(text: str):
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield obj


def _as_probability(value) -> float:
    if isinstance(value, bool):
        raise ValueError("boolean is not a probability")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        s = value.strip()
        if s.endswith("%"):
            return float(s[:-1]) / 100.0
        return float(s)
    raise ValueError(f"not a number: {value!r}")


def parse_manager_reply(text: str) -> ManagerReply:
    """Read the first JSON object in ``text`` that names at least one label."""
    for obj in _json_objects(text):
        raw: dict[ArgLabel, float] = {}
        for key, value in obj.items():
            try:
                label = ArgLabel.parse(str(key))
            except ValueError:
                continue
            try:
                p = _as_probability(value)
            except ValueError:
                raise ParseError(f"non-numeric probability for {label.value}: {value!r}") from None
            raw[label] = 0.0 if math.isnan(p) else p
        if raw:
            return ManagerReply(normalize(raw), text)
    raise ParseError(f"no label probability object found in manager reply: {text[:120]!r}")


# ---------------------------------------------------------------------------
# Debaters
# ---------------------------------------------------------------------------


def render_debater_prompt(
    instance: Instance,
    assigned_label: ArgLabel,
    opponent_label: ArgLabel,
    transcript_so_far: Transcript,
    templates: TemplateSet,
    speaker: Speaker = Speaker.PROPONENT,
    total_turns: int = 4,
) -> list[ChatMessage]:
    if assigned_label == opponent_label:
        raise ValueError("a debater cannot defend the same label as its opponent")
    tpl = templates["debater"]
    _require(tpl, *REQUIRED["debater"])
    values = {
        "masked_text": instance.masked_text,
        "label_definitions": label_definitions_block(),
        "assigned_label": assigned_label.value,
        "opponent_label": opponent_label.value,
        "transcript": render_transcript(transcript_so_far),
        "speaker": speaker.value,
        "turn": str(len(transcript_so_far) + 1),
        "total_turns": str(total_turns),
    }
    return _messages(render(tpl.system, values), render(tpl.user, values))


# ---------------------------------------------------------------------------
# Judge and baselines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JudgeReply:
    label: ArgLabel
    rationale: str
    raw_text: str


def render_judge_prompt(
    instance: Instance, transcript: Transcript, templates: TemplateSet, total_turns: int = 4
) -> list[ChatMessage]:
    if not transcript.is_complete(total_turns):
        raise IncompleteTranscript(
            f"{instance.instance_id}: judge needs {total_turns} turns, transcript has {len(transcript)}"
        )
    tpl = templates["judge"]
    _require(tpl, "masked_text", "transcript", "label_definitions")
    values = {
        "masked_text": instance.masked_text,
        "label_definitions": label_definitions_block(),
        "transcript": render_transcript(transcript),
    }
    return _messages(render(tpl.system, values, debate=True), render(tpl.user, values))


def smart_system_text(templates: TemplateSet) -> str:
    """The judge system message with its debate-specific clauses removed."""
    return render(templates["judge"].system, {"label_definitions": label_definitions_block()}, debate=False)


def render_baseline_prompt(instance: Instance, kind: str, templates: TemplateSet) -> list[ChatMessage]:
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    tpl = templates[kind]
    _require(tpl, "masked_text")
    values = {"masked_text": instance.masked_text, "label_definitions": label_definitions_block()}
    system = smart_system_text(templates) if kind == "smart" else render(tpl.system, values)
    return _messages(system, render(tpl.user, values))


def parse_judge_reply(text: str) -> JudgeReply:
    """Take the last ``LABEL: <name>`` line; everything before it is the rationale."""
    lines = text.strip().splitlines()
    for i in range(len(lines) - 1, -1, -1):
        m = _LABEL_LINE.match(lines[i])
        if m is None:
            continue
        name = m.group(1).strip(" *_`'\".")
        try:
            label = ArgLabel.parse(name)
        except ValueError:
            raise ParseError(f"judge named an unknown label: {name!r}") from None
        rationale = "\n".join(lines[:i]).strip() or NO_RATIONALE
        return JudgeReply(label, rationale, text)
    raise ParseError(f"no 'LABEL: <name>' line in reply: {text[-120:]!r}")

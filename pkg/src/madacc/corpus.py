"""Reading brat standoff essays and turning them into masked, prompt-ready instances.

Each essay is a pair ``<id>.txt`` / ``<id>.ann``. Component lines look like::

    T1<TAB>Claim 0 14<TAB>Cars are good.

Offsets count Unicode code points in the ``.txt`` content. Relation, attribute
and note lines are skipped.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedAnnotation, MissingEssayFile, OverlappingSpans
from .labels import ArgLabel

TARGET_OPEN, TARGET_CLOSE = "<TARGET>", "</TARGET>"
ARG_OPEN, ARG_CLOSE = "<ARG>", "</ARG>"
TAG_RE = re.compile(r"</?(?:TARGET|ARG)>")

_T_LINE = re.compile(r"^(T\d+)\t(\S+) (\d+) (\d+)\t(.*)$")

CONTEXT_ESSAY = "essay"
CONTEXT_PARAGRAPH = "paragraph"


@dataclass(frozen=True)
class ArgComponent:
    component_id: str
    gold_label: ArgLabel
    span_start: int
    span_end: int
    surface_text: str


@dataclass(frozen=True)
class Essay:
    essay_id: str
    text: str
    components: tuple[ArgComponent, ...]


@dataclass(frozen=True)
class Instance:
    instance_id: str
    essay_id: str
    component_id: str
    masked_text: str
    gold_label: ArgLabel
    target: ArgComponent | None = None

    @property
    def target_text(self) -> str:
        start = self.masked_text.index(TARGET_OPEN) + len(TARGET_OPEN)
        return self.masked_text[start:self.masked_text.index(TARGET_CLOSE)]

    def excerpt(self, width: int = 80) -> str:
        """The TARGET span with up to ``width`` characters of context on each side."""
        start = self.masked_text.index(TARGET_OPEN)
        end = self.masked_text.index(TARGET_CLOSE) + len(TARGET_CLOSE)
        lo, hi = max(0, start - width), min(len(self.masked_text), end + width)
        text = " ".join(self.masked_text[lo:hi].split())
        return ("..." if lo else "") + text + ("..." if hi < len(self.masked_text) else "")

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "essay_id": self.essay_id,
            "component_id": self.component_id,
            "masked_text": self.masked_text,
            "gold_label": self.gold_label.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Instance":
        return cls(
            instance_id=data["instance_id"],
            essay_id=data["essay_id"],
            component_id=data["component_id"],
            masked_text=data["masked_text"],
            gold_label=ArgLabel(data["gold_label"]),
        )


def _squash(s: str) -> str:
    return " ".join(s.split())


def parse_essay(text: str, ann: str, essay_id: str = "", source: str = "") -> Essay:
    """Build an :class:`Essay` from the contents of a ``.txt`` and ``.ann`` pair."""
    source = source or (f"{essay_id}.ann" if essay_id else "")
    components = []
    seen_ids = set()
    for line_no, line in enumerate(ann.splitlines(), start=1):
        if not line.startswith("T"):
            continue
        m = _T_LINE.match(line)
        if m is None:
            raise MalformedAnnotation(f"cannot parse component line {line!r}", source, line_no)
        comp_id, label_name, start, end, surface = m.groups()
        try:
            label = ArgLabel(label_name)
        except ValueError:
            raise MalformedAnnotation(f"unknown label {label_name!r}", source, line_no) from None
        start, end = int(start), int(end)
        if not 0 <= start < end <= len(text):
            raise MalformedAnnotation(
                f"offsets {start}-{end} outside text of length {len(text)}", source, line_no
            )
        if _squash(text[start:end]) != _squash(surface):
            raise MalformedAnnotation(
                f"surface text {surface!r} does not match text {text[start:end]!r}",
                source,
                line_no,
            )
        if comp_id in seen_ids:
            raise MalformedAnnotation(f"duplicate component id {comp_id}", source, line_no)
        seen_ids.add(comp_id)
        components.append(ArgComponent(comp_id, label, start, end, text[start:end]))

    components.sort(key=lambda c: (c.span_start, c.span_end))
    for prev, cur in zip(components, components[1:]):
        if cur.span_start < prev.span_end:
            raise OverlappingSpans(
                f"{source or essay_id}: {prev.component_id} [{prev.span_start},{prev.span_end}) "
                f"overlaps {cur.component_id} [{cur.span_start},{cur.span_end})"
            )
    return Essay(essay_id, text, tuple(components))


def _paragraph_bounds(text: str, start: int, end: int) -> tuple[int, int]:
    lo = text.rfind("\n", 0, start) + 1
    hi = text.find("\n", end)
    return lo, len(text) if hi == -1 else hi


def _tag(text: str, offset: int, components: Iterable[ArgComponent], target_id: str) -> str:
    # insert from the back so earlier offsets stay valid
    out = text
    for comp in sorted(components, key=lambda c: c.span_start, reverse=True):
        s, e = comp.span_start - offset, comp.span_end - offset
        if comp.component_id == target_id:
            opening, closing = TARGET_OPEN, TARGET_CLOSE
        else:
            opening, closing = ARG_OPEN, ARG_CLOSE
        out = out[:s] + opening + out[s:e] + closing + out[e:]
    return out


def make_instances(essay: Essay, context: str = CONTEXT_ESSAY) -> list[Instance]:
    """One instance per component, the component under TARGET tags and the rest under ARG."""
    if context not in (CONTEXT_ESSAY, CONTEXT_PARAGRAPH):
        raise ValueError(f"unknown context mode {context!r}")
    instances = []
    for target in essay.components:
        if context == CONTEXT_ESSAY:
            lo, hi = 0, len(essay.text)
            members = essay.components
        else:
            lo, hi = _paragraph_bounds(essay.text, target.span_start, target.span_end)
            members = [c for c in essay.components if c.span_start >= lo and c.span_end <= hi]
        masked = _tag(essay.text[lo:hi], lo, members, target.component_id)
        instances.append(
            Instance(
                instance_id=f"{essay.essay_id}:{target.component_id}",
                essay_id=essay.essay_id,
                component_id=target.component_id,
                masked_text=masked,
                gold_label=target.gold_label,
                target=target,
            )
        )
    return instances


def strip_tags(masked_text: str) -> str:
    return TAG_RE.sub("", masked_text)


def read_text(path: Path) -> str:
    # newline="" keeps \r\n intact so offsets stay aligned
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def load_essay(corpus_dir: Path | str, essay_id: str) -> Essay:
    corpus_dir = Path(corpus_dir)
    txt, ann = corpus_dir / f"{essay_id}.txt", corpus_dir / f"{essay_id}.ann"
    for path in (txt, ann):
        if not path.is_file():
            raise MissingEssayFile(essay_id, path)
    return parse_essay(read_text(txt), read_text(ann), essay_id=essay_id, source=str(ann))


def read_split(split_file: Path | str) -> list[str]:
    """Essay ids from a split file.

    Plain files list one id per line (blank lines and ``#`` comments skipped).
    The UKP ``train-test-split.csv`` layout (``"essay001";"TEST"``) is also
    accepted, in which case only the TEST rows are returned.
    """
    lines = Path(split_file).read_text(encoding="utf-8").splitlines()
    rows = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if rows and ";" in rows[0]:
        ids = []
        for row in csv.reader(rows, delimiter=";"):
            if len(row) >= 2 and row[1].strip().upper() == "TEST":
                ids.append(row[0].strip())
        return ids
    return rows


def load_split(corpus_dir: Path | str, split_file: Path | str) -> list[Essay]:
    return [load_essay(corpus_dir, essay_id) for essay_id in read_split(split_file)]


def write_instances(instances: Iterable[Instance], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")


def iter_jsonl(path: Path | str) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: malformed JSON ({exc.msg})") from None


def read_instances(path: Path | str) -> list[Instance]:
    out = []
    for line_no, data in iter_jsonl(path):
        try:
            out.append(Instance.from_json(data))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{line_no}: bad instance record ({exc})") from None
    return out

"""Label set and the probability distribution the Manager produces over it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


class ArgLabel(str, Enum):
    MAJOR_CLAIM = "MajorClaim"
    CLAIM = "Claim"
    PREMISE = "Premise"

    @property
    def order(self) -> int:
        return _ORDER[self]

    @property
    def definition(self) -> str:
        return _DEFINITIONS[self]

    @classmethod
    def parse(cls, name: str) -> "ArgLabel":
        """Match a label name case-insensitively, ignoring spaces, '_' and '-'."""
        key = "".join(ch for ch in name.lower() if ch.isalnum())
        try:
            return _BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown argument label: {name!r}") from None

    def __str__(self) -> str:
        return self.value


LABELS: tuple[ArgLabel, ...] = (ArgLabel.MAJOR_CLAIM, ArgLabel.CLAIM, ArgLabel.PREMISE)

_ORDER = {label: i for i, label in enumerate(LABELS)}
_BY_KEY = {label.value.lower(): label for label in LABELS}
_DEFINITIONS = {
    ArgLabel.MAJOR_CLAIM: (
        "The root of the argument structure; it states the central thesis of the whole document."
    ),
    ArgLabel.CLAIM: (
        "An intermediate node that receives support from other components and is itself "
        "the topic that evidentiary statements argue for."
    ),
    ArgLabel.PREMISE: (
        "A leaf node that provides support (an example, evidence or a reason) "
        "for a Claim or for another Premise."
    ),
}


@dataclass(frozen=True)
class LabelDistribution:
    """Probabilities for MajorClaim, Claim and Premise, in canonical order.

    Build one with :func:`normalize`; the constructor does not rescale.
    """

    probs: tuple[float, float, float]

    def __getitem__(self, label: ArgLabel) -> float:
        return self.probs[label.order]

    def items(self):
        return zip(LABELS, self.probs)

    def to_dict(self) -> dict[str, float]:
        return {label.value: p for label, p in self.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "LabelDistribution":
        """Read the serialized form; re-normalize when the sum drifts more than 1e-6."""
        raw = {ArgLabel.parse(k): float(v) for k, v in data.items()}
        probs = tuple(raw.get(label, 0.0) for label in LABELS)
        if all(p >= 0 for p in probs) and abs(sum(probs) - 1.0) <= 1e-6:
            return cls(probs)  # type: ignore[arg-type]
        return normalize(raw)

    @classmethod
    def uniform(cls) -> "LabelDistribution":
        return cls((1 / 3, 1 / 3, 1 / 3))


@dataclass(frozen=True)
class StancePair:
    proponent: ArgLabel
    opponent: ArgLabel

    def __post_init__(self):
        if self.proponent == self.opponent:
            raise ValueError("proponent and opponent must defend different labels")

    def swapped(self) -> "StancePair":
        return StancePair(self.opponent, self.proponent)


def _clean(value: float) -> float:
    # untrusted LLM numbers: NaN, infinities and negatives count as zero
    if not math.isfinite(value) or value < 0:
        return 0.0
    return float(value)


def normalize(raw: Mapping[ArgLabel, float]) -> LabelDistribution:
    values = [_clean(raw.get(label, 0.0)) for label in LABELS]
    total = math.fsum(values)
    if total <= 0:
        return LabelDistribution.uniform()
    return LabelDistribution(tuple(v / total for v in values))  # type: ignore[arg-type]


def top_two(dist: LabelDistribution) -> tuple[ArgLabel, ArgLabel]:
    """The two most probable labels; ties go to the earlier label in canonical order."""
    ranked = sorted(LABELS, key=lambda label: (-dist[label], label.order))
    return ranked[0], ranked[1]


def argmax(dist: LabelDistribution) -> ArgLabel:
    return top_two(dist)[0]


def label_definitions_block() -> str:
    return "\n".join(f"- {label.value}: {label.definition}" for label in LABELS)

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .labels import ArgLabel


class Speaker(str, Enum):
    PROPONENT = "Proponent"
    OPPONENT = "Opponent"

    def __str__(self) -> str:
        return self.value


def speaker_for_turn(index: int) -> Speaker:
    """Proponent opens and takes odd turns; Opponent takes even turns."""
    return Speaker.PROPONENT if index % 2 == 1 else Speaker.OPPONENT


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: Speaker
    defended_label: ArgLabel
    content: str

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "speaker": self.speaker.value,
            "defended_label": self.defended_label.value,
            "content": self.content,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Turn":
        return cls(
            int(data["index"]),
            Speaker(data["speaker"]),
            ArgLabel(data["defended_label"]),
            data["content"],
        )


@dataclass(frozen=True)
class Transcript:
    turns: tuple[Turn, ...] = ()

    def __post_init__(self):
        labels: dict[Speaker, ArgLabel] = {}
        for expected, turn in enumerate(self.turns, start=1):
            if turn.index != expected:
                raise ValueError(f"turn indices must be contiguous from 1, got {turn.index} at {expected}")
            if turn.speaker != speaker_for_turn(expected):
                raise ValueError(f"turn {expected} must be spoken by {speaker_for_turn(expected)}")
            if labels.setdefault(turn.speaker, turn.defended_label) != turn.defended_label:
                raise ValueError(f"{turn.speaker} changed its defended label at turn {expected}")

    def __len__(self) -> int:
        return len(self.turns)

    def __iter__(self):
        return iter(self.turns)

    def append(self, turn: Turn) -> "Transcript":
        return Transcript(self.turns + (turn,))

    def is_complete(self, total_turns: int) -> bool:
        return len(self.turns) == total_turns

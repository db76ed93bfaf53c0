"""Dialogue corpus data model and loaders.

A corpus is a sequence of multi-turn dialogues between a hater and an
operator. Each turn pairs one hateful message with its counter response.
Single-turn pair datasets are represented as one-turn dialogues so the rest
of the pipeline never special-cases them.

Loaders exist for three on-disk layouts:

* ``canonical``   JSON Lines, one dialogue per line (the format this package
                  writes):
                  ``{"dialogue_id": str, "topic": str,
                     "turns": [{"hate": str, "counter": str}, ...]}``
* ``dialoconan``  CSV rows ``(dialogue_id, turn_id, text, type, target)``
                  with ``type`` in {HS, CN}; HS/CN rows are paired into turns.
* ``conan_pairs`` CSV rows with ``hateSpeech``/``counterSpeech`` columns;
                  each row becomes a one-turn dialogue with a synthetic id.

Text is whitespace-normalized on load (runs of whitespace collapse to one
space, ends stripped); casing is preserved. Unknown extra columns/keys are
ignored.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyCorpusError, SchemaError

# The six hate targets covered by the multi-turn dialogue corpus.
HATE_TARGETS = ("JEWS", "LGBT+", "MIGRANTS", "MUSLIMS", "POC", "WOMEN")

_TOPIC_ALIASES = {
    "jews": "JEWS",
    "jewish people": "JEWS",
    "lgbt": "LGBT+",
    "lgbt+": "LGBT+",
    "lgbtq": "LGBT+",
    "lgbtq+": "LGBT+",
    "migrants": "MIGRANTS",
    "migrant": "MIGRANTS",
    "immigrants": "MIGRANTS",
    "muslims": "MUSLIMS",
    "muslim": "MUSLIMS",
    "islam": "MUSLIMS",
    "poc": "POC",
    "people of color": "POC",
    "people of colour": "POC",
    "black people": "POC",
    "women": "WOMEN",
    "woman": "WOMEN",
}


def normalize_text(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def normalize_topic(raw: str) -> str:
    """Map known hate-target spellings to their canonical form.

    Unknown topics pass through unchanged (synthetic corpora use arbitrary
    topic labels), so this never raises.
    """
    key = normalize_text(raw).lower()
    return _TOPIC_ALIASES.get(key, normalize_text(raw))


@dataclass(frozen=True)
class Turn:
    """One hate/counter exchange inside a dialogue."""

    turn_index: int
    hate_text: str
    counter_text: str
    topic: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "hate_text", normalize_text(self.hate_text))
        object.__setattr__(self, "counter_text", normalize_text(self.counter_text))
        object.__setattr__(self, "topic", normalize_topic(self.topic))
        if self.turn_index < 0:
            raise SchemaError(f"turn_index must be non-negative, got {self.turn_index}")
        if not self.hate_text:
            raise SchemaError(f"turn {self.turn_index}: empty hate text")
        if not self.counter_text:
            raise SchemaError(f"turn {self.turn_index}: empty counter text")


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    topic: str
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "topic", normalize_topic(self.topic))
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise SchemaError(f"dialogue {self.dialogue_id!r} has no turns")
        for i, turn in enumerate(self.turns):
            if turn.turn_index != i:
                raise SchemaError(
                    f"dialogue {self.dialogue_id!r}: turn indices must be "
                    f"contiguous from 0, found {turn.turn_index} at position {i}"
                )
            if turn.topic != self.topic:
                raise SchemaError(
                    f"dialogue {self.dialogue_id!r}: turn {i} topic {turn.topic!r} "
                    f"differs from dialogue topic {self.topic!r}"
                )


@dataclass(frozen=True)
class DialogueCorpus:
    dialogues: tuple[Dialogue, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dialogues", tuple(self.dialogues))

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self) -> Iterator[Dialogue]:
        return iter(self.dialogues)

    @property
    def total_turns(self) -> int:
        return sum(len(d.turns) for d in self.dialogues)

    @property
    def topics(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for d in self.dialogues:
            seen.setdefault(d.topic)
        return tuple(seen)


@dataclass(frozen=True)
class GenerationExample:
    """One training unit: dialogue context, current query, gold response."""

    dialogue_id: str
    turn_index: int
    context: tuple[tuple[str, str], ...]  # (hate, counter) pairs of earlier turns
    query: str
    response: str
    topic: str

    def __post_init__(self) -> None:
        if len(self.context) != self.turn_index:
            raise SchemaError(
                f"context length {len(self.context)} must equal "
                f"turn_index {self.turn_index}"
            )
        if not self.query or not self.response:
            raise SchemaError("query and response must be non-empty")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

CORPUS_FORMATS = ("canonical", "dialoconan", "conan_pairs")


def load_dialogue_corpus(path: str | Path, format: str = "canonical") -> DialogueCorpus:
    """Load a dialogue corpus from disk.

    Args:
        path: corpus file.
        format: one of ``canonical``, ``dialoconan``, ``conan_pairs``.

    Raises:
        SchemaError: a required column or field is missing (the message names it).
        EmptyCorpusError: the file holds no dialogues.
    """
    path = Path(path)
    if format == "canonical":
        dialogues = list(_read_canonical(path))
    elif format == "dialoconan":
        dialogues = list(_read_dialoconan_csv(path))
    elif format == "conan_pairs":
        dialogues = list(_read_conan_pairs_csv(path))
    else:
        raise SchemaError(
            f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}"
        )
    if not dialogues:
        raise EmptyCorpusError(f"no dialogues found in {path}")
    return DialogueCorpus(tuple(dialogues))


def _read_canonical(path: Path) -> Iterator[Dialogue]:
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            yield _dialogue_from_record(record, where=f"{path}:{line_no}")


def _dialogue_from_record(record: dict, where: str) -> Dialogue:
    for key in ("dialogue_id", "topic", "turns"):
        if key not in record:
            raise SchemaError(f"{where}: missing required field {key!r}")
    turns = []
    for i, raw in enumerate(record["turns"]):
        for key in ("hate", "counter"):
            if key not in raw:
                raise SchemaError(f"{where}: turn {i} missing required field {key!r}")
        turns.append(
            Turn(
                turn_index=i,
                hate_text=raw["hate"],
                counter_text=raw["counter"],
                topic=record["topic"],
            )
        )
    return Dialogue(
        dialogue_id=str(record["dialogue_id"]),
        topic=record["topic"],
        turns=tuple(turns),
    )


def _open_csv(path: Path) -> tuple[csv.DictReader, io.TextIOWrapper]:
    fh = path.open(encoding="utf-8-sig", newline="")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        fh.close()
        raise EmptyCorpusError(f"no rows found in {path}")
    return reader, fh


def _pick_column(fieldnames: Iterable[str], *candidates: str) -> str | None:
    lowered = {name.lower(): name for name in fieldnames}
    for cand in candidates:
        if cand.lower() in lowered:
            return lowered[cand.lower()]
    return None


def _require_column(path: Path, fieldnames: Iterable[str], *candidates: str) -> str:
    col = _pick_column(fieldnames, *candidates)
    if col is None:
        raise SchemaError(f"{path}: missing required column {candidates[0]!r}")
    return col


def _read_dialoconan_csv(path: Path) -> Iterator[Dialogue]:
    """Pair HS/CN rows of a release-style CSV into turns.

    Rows are grouped by dialogue id in file order, sorted by turn id within a
    dialogue, and each HS row is paired with the CN row that follows it. Both
    conventions in the wild (shared turn id per pair, or alternating ids) sort
    into the same HS/CN interleaving.
    """
    reader, fh = _open_csv(path)
    with fh:
        names = reader.fieldnames or []
        col_did = _require_column(path, names, "dialogue_id")
        col_tid = _require_column(path, names, "turn_id")
        col_text = _require_column(path, names, "text")
        col_type = _require_column(path, names, "type")
        col_target = _require_column(path, names, "target", "topic")

        by_dialogue: dict[str, list[dict]] = {}
        for row_no, row in enumerate(reader, start=2):
            by_dialogue.setdefault(str(row[col_did]), []).append(
                {
                    "turn_id": _as_sort_key(row[col_tid]),
                    "text": row[col_text],
                    "type": (row[col_type] or "").strip().upper(),
                    "target": row[col_target],
                    "row": row_no,
                }
            )

    for dialogue_id, rows in by_dialogue.items():
        rows.sort(key=lambda r: (r["turn_id"], 0 if r["type"] == "HS" else 1))
        turns: list[Turn] = []
        pending_hate: dict | None = None
        topic = rows[0]["target"]
        for row in rows:
            if row["type"] == "HS":
                if pending_hate is not None:
                    raise SchemaError(
                        f"{path}: dialogue {dialogue_id!r}: two consecutive HS rows "
                        f"(row {row['row']})"
                    )
                pending_hate = row
            elif row["type"] == "CN":
                if pending_hate is None:
                    raise SchemaError(
                        f"{path}: dialogue {dialogue_id!r}: CN row without a "
                        f"preceding HS row (row {row['row']})"
                    )
                turns.append(
                    Turn(
                        turn_index=len(turns),
                        hate_text=pending_hate["text"],
                        counter_text=row["text"],
                        topic=topic,
                    )
                )
                pending_hate = None
            else:
                raise SchemaError(
                    f"{path}: row {row['row']}: type must be HS or CN, "
                    f"got {row['type']!r}"
                )
        if pending_hate is not None:
            raise SchemaError(
                f"{path}: dialogue {dialogue_id!r}: trailing HS row without a CN row"
            )
        yield Dialogue(dialogue_id=dialogue_id, topic=topic, turns=tuple(turns))


def _as_sort_key(value: str) -> tuple[int, float | str]:
    try:
        return (0, float(value))
    except (TypeError, ValueError):
        return (1, str(value))


# Single-turn pair corpora carry no target column in some releases; they
# cover Islamophobic content only, so that target is the documented default.
CONAN_DEFAULT_TOPIC = "MUSLIMS"


def _read_conan_pairs_csv(path: Path) -> Iterator[Dialogue]:
    reader, fh = _open_csv(path)
    with fh:
        names = reader.fieldnames or []
        col_hate = _require_column(path, names, "hateSpeech", "hate_speech", "hate")
        col_counter = _require_column(
            path, names, "counterSpeech", "counter_speech", "counter"
        )
        col_target = _pick_column(names, "target", "topic")
        for idx, row in enumerate(reader):
            topic = row[col_target] if col_target else CONAN_DEFAULT_TOPIC
            turn = Turn(
                turn_index=0,
                hate_text=row[col_hate],
                counter_text=row[col_counter],
                topic=topic,
            )
            yield Dialogue(
                dialogue_id=f"pair-{idx:06d}", topic=topic, turns=(turn,)
            )


# ---------------------------------------------------------------------------
# Saving and derived examples
# ---------------------------------------------------------------------------

def dialogue_to_record(dialogue: Dialogue) -> dict:
    return {
        "dialogue_id": dialogue.dialogue_id,
        "topic": dialogue.topic,
        "turns": [
            {"hate": t.hate_text, "counter": t.counter_text} for t in dialogue.turns
        ],
    }


def save_corpus(corpus: DialogueCorpus, path: str | Path) -> None:
    """Write the canonical JSON Lines form (one dialogue per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for dialogue in corpus:
            fh.write(json.dumps(dialogue_to_record(dialogue), ensure_ascii=False))
            fh.write("\n")


def build_generation_examples(corpus: DialogueCorpus) -> list[GenerationExample]:
    """One example per turn; context is all strictly earlier turns in order."""
    examples: list[GenerationExample] = []
    for dialogue in corpus:
        context: list[tuple[str, str]] = []
        for turn in dialogue.turns:
            examples.append(
                GenerationExample(
                    dialogue_id=dialogue.dialogue_id,
                    turn_index=turn.turn_index,
                    context=tuple(context),
                    query=turn.hate_text,
                    response=turn.counter_text,
                    topic=dialogue.topic,
                )
            )
            context.append((turn.hate_text, turn.counter_text))
    return examples

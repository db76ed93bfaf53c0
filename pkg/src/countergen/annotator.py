"""Silver-standard annotation: run all four feature families over a corpus.

Each turn is annotated independently on both sides. Personality and scheme
ports return exactly one code per side, the value ensemble a (possibly
empty) subset, and the speech-act ensemble annotates the counter side only.
Ports that fail on a turn flag it with an error record instead of aborting
the run; flagged turns keep empty feature sets so corpus alignment survives.

The two classifiers this pipeline does not train itself (personality traits,
argument schemes) plug in through ClassifierPort; a generic trainable
baseline (tiny encoder + linear softmax head) is provided so the pipeline is
self-contained end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import Dialogue, DialogueCorpus, Turn
from .encoders import EncoderSpec, TinyTextEncoder, Vocabulary
from .errors import SchemaError, StateError
from .features import (
    FAMILY_ARGSCH,
    FAMILY_ARGTYPE,
    FAMILY_BIG5,
    FAMILY_HUMVAL,
    FeatureVocabulary,
    default_vocabulary,
)
from .training import TrainHistory, TrainingConfig, run_training

# Raw labels produced by the upstream scheme classifier (aliases accepted).
RAW_SCHEME_LABELS = (
    "From Consequence",
    "Source Knowledge",
    "Source Authority",
    "Means for Goal",
    "Goal from Means",
    "Rule or Principle",
)

_SCHEME_MERGE = {
    "from consequence": "from_consequence",
    "source knowledge": "from_source_authority_knowledge",
    "from source knowledge": "from_source_authority_knowledge",
    "source authority": "from_source_authority_knowledge",
    "from source authority": "from_source_authority_knowledge",
    "means for goal": "goal_means",
    "goal from means": "goal_means",
    "goal for means": "goal_means",
    "rule or principle": "rule_or_principle",
}


def merge_scheme_labels(raw: str) -> str:
    """Map the six raw scheme labels onto the four merged feature codes.

    Authority and knowledge collapse into one code, as do the two goal/means
    directions; the remaining labels map through unchanged.
    """
    key = " ".join(raw.split()).lower()
    try:
        return _SCHEME_MERGE[key]
    except KeyError:
        raise SchemaError(f"unknown scheme label: {raw!r}") from None


# ---------------------------------------------------------------------------
# Ports
# ---------------------------------------------------------------------------

@dataclass
class ClassifierPort:
    """A named label source for one feature family.

    ``predict`` maps a text to a label or set of labels; the speech-act
    family instead receives the (hate, counter) pair. ``info`` feeds the run
    metadata (checkpoint ids, thresholds).
    """

    name: str
    family: str
    predict: Callable
    info: dict = field(default_factory=dict)


def stub_port(family: str, labels: Iterable[str], name: str = "stub") -> ClassifierPort:
    """Fixed-output port for tests and smoke runs."""
    fixed = set(labels)

    def predict(*_args) -> set[str]:
        return set(fixed)

    return ClassifierPort(
        name=name, family=family, predict=predict, info={"kind": "stub"}
    )


class SingleLabelTextModel(nn.Module):
    """Generic trainable baseline: tiny encoder + linear softmax over codes."""

    def __init__(
        self,
        codes: Sequence[str],
        vocab: Vocabulary,
        encoder_spec: EncoderSpec | None = None,
    ):
        super().__init__()
        self.codes = tuple(codes)
        self.vocab = vocab
        self.encoder = TinyTextEncoder(vocab, encoder_spec or EncoderSpec())
        self.head = nn.Linear(self.encoder.hidden_size, len(self.codes))
        self.trained = False

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        return self.head(self.encoder.pool_texts(texts))

    def predict(self, text: str) -> str:
        if not self.trained:
            raise StateError("baseline classifier is untrained")
        with torch.no_grad():
            logits = self.forward([text])[0]
        return self.codes[int(torch.argmax(logits))]


def train_single_label_model(
    model: SingleLabelTextModel,
    train_items: Sequence[tuple[str, str]],
    val_items: Sequence[tuple[str, str]],
    config: TrainingConfig,
) -> TrainHistory:
    """Fit the baseline on (text, code) examples with a cross-entropy loss."""
    index = {c: i for i, c in enumerate(model.codes)}
    for _, code in list(train_items) + list(val_items):
        if code not in index:
            raise SchemaError(f"label {code!r} outside the model's codes")

    def batch_loss(m: SingleLabelTextModel, batch: list[tuple[str, str]]):
        logits = m.forward([text for text, _ in batch])
        targets = torch.tensor([index[code] for _, code in batch])
        return F.cross_entropy(logits, targets)

    history = run_training(model, train_items, val_items, batch_loss, config)
    model.trained = True
    return history


def baseline_port(
    family: str, model: SingleLabelTextModel, name: str = "baseline"
) -> ClassifierPort:
    return ClassifierPort(
        name=name,
        family=family,
        predict=lambda text: {model.predict(text)},
        info={"kind": "baseline", "codes": list(model.codes)},
    )


def save_single_label_model(directory: str | Path, model: SingleLabelTextModel) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / "weights.pt")
    model.vocab.save(directory / "vocab.json")
    metadata = {
        "model_type": "single_label",
        "codes": list(model.codes),
        "encoder_spec": model.encoder.spec.to_dict(),
    }
    (directory / "metadata.json").write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_single_label_model(directory: str | Path) -> SingleLabelTextModel:
    directory = Path(directory)
    metadata = json.loads((directory / "metadata.json").read_text(encoding="utf-8"))
    if metadata.get("model_type") != "single_label":
        raise SchemaError(f"{directory} is not a single-label checkpoint")
    vocab = Vocabulary.load(directory / "vocab.json")
    model = SingleLabelTextModel(
        tuple(metadata["codes"]), vocab, EncoderSpec.from_dict(metadata["encoder_spec"])
    )
    model.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
    model.eval()
    model.trained = True
    return model


# ---------------------------------------------------------------------------
# Annotated corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnotatedTurn:
    turn: Turn
    hate_features: frozenset[str]
    counter_features: frozenset[str]
    error: str | None = None


@dataclass(frozen=True)
class AnnotatedDialogue:
    dialogue_id: str
    topic: str
    turns: tuple[AnnotatedTurn, ...]


@dataclass(frozen=True)
class AnnotatedCorpus:
    dialogues: tuple[AnnotatedDialogue, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __iter__(self):
        return iter(self.dialogues)

    def __len__(self) -> int:
        return len(self.dialogues)

    @property
    def total_turns(self) -> int:
        return sum(len(d.turns) for d in self.dialogues)


def _as_label_set(value) -> set[str]:
    if isinstance(value, str):
        return {value}
    return set(value)


def _one_label(labels: set[str], family: str) -> set[str]:
    if len(labels) != 1:
        raise SchemaError(
            f"{family} port must return exactly one label, got {sorted(labels)}"
        )
    return labels


def annotate_corpus(
    corpus: DialogueCorpus,
    big5_port: ClassifierPort,
    humval_port: ClassifierPort,
    scheme_port: ClassifierPort,
    argtype_port: ClassifierPort,
    vocabulary: FeatureVocabulary | None = None,
) -> AnnotatedCorpus:
    """Annotate every turn of the corpus with all four feature families.

    Sides are annotated independently: each text-level port sees one side's
    text only, and the speech-act port sees the (hate, counter) pair but its
    labels land on the counter side only. Scheme ports may return either a
    raw upstream label (merged here) or an already-merged code.
    """
    vocabulary = vocabulary or default_vocabulary()

    def side_features(text: str) -> frozenset[str]:
        big5 = _one_label(_as_label_set(big5_port.predict(text)), FAMILY_BIG5)
        humval = _as_label_set(humval_port.predict(text))
        raw_scheme = _one_label(_as_label_set(scheme_port.predict(text)), FAMILY_ARGSCH)
        scheme = {
            label if label in vocabulary.codes(FAMILY_ARGSCH) else merge_scheme_labels(label)
            for label in raw_scheme
        }
        labels = (
            vocabulary.filter_to_families(big5, [FAMILY_BIG5])
            | vocabulary.filter_to_families(humval, [FAMILY_HUMVAL])
            | vocabulary.filter_to_families(scheme, [FAMILY_ARGSCH])
        )
        if len(labels) != len(big5 | humval | scheme):
            raise SchemaError("port returned labels outside its family")
        return frozenset(labels)

    annotated_dialogues: list[AnnotatedDialogue] = []
    for dialogue in corpus:
        turns: list[AnnotatedTurn] = []
        for turn in dialogue.turns:
            try:
                hate = side_features(turn.hate_text)
                counter = side_features(turn.counter_text)
                argtype = vocabulary.filter_to_families(
                    _as_label_set(argtype_port.predict(turn.hate_text, turn.counter_text)),
                    [FAMILY_ARGTYPE],
                )
                turns.append(
                    AnnotatedTurn(
                        turn=turn,
                        hate_features=hate,
                        counter_features=frozenset(counter | argtype),
                    )
                )
            except Exception as exc:  # port failure: flag, keep going
                turns.append(
                    AnnotatedTurn(
                        turn=turn,
                        hate_features=frozenset(),
                        counter_features=frozenset(),
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
        annotated_dialogues.append(
            AnnotatedDialogue(
                dialogue_id=dialogue.dialogue_id,
                topic=dialogue.topic,
                turns=tuple(turns),
            )
        )
    metadata = {
        "ports": {
            port.family: {"name": port.name, **port.info}
            for port in (big5_port, humval_port, scheme_port, argtype_port)
        }
    }
    return AnnotatedCorpus(tuple(annotated_dialogues), metadata)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_annotated_corpus(
    annotated: AnnotatedCorpus,
    path: str | Path,
    vocabulary: FeatureVocabulary | None = None,
) -> None:
    """JSON Lines, one dialogue per line; feature lists in canonical order."""
    vocabulary = vocabulary or default_vocabulary()
    with Path(path).open("w", encoding="utf-8") as fh:
        for dialogue in annotated:
            record = {
                "dialogue_id": dialogue.dialogue_id,
                "topic": dialogue.topic,
                "turns": [],
            }
            for at in dialogue.turns:
                turn_record = {
                    "hate": at.turn.hate_text,
                    "counter": at.turn.counter_text,
                    "hate_features": list(vocabulary.sort_codes(at.hate_features)),
                    "counter_features": list(vocabulary.sort_codes(at.counter_features)),
                }
                if at.error is not None:
                    turn_record["error"] = at.error
                record["turns"].append(turn_record)
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_annotated_corpus(path: str | Path) -> AnnotatedCorpus:
    dialogues: list[AnnotatedDialogue] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            for key in ("dialogue_id", "topic", "turns"):
                if key not in record:
                    raise SchemaError(f"{path}:{line_no}: missing required field {key!r}")
            turns = []
            for i, raw in enumerate(record["turns"]):
                turns.append(
                    AnnotatedTurn(
                        turn=Turn(
                            turn_index=i,
                            hate_text=raw["hate"],
                            counter_text=raw["counter"],
                            topic=record["topic"],
                        ),
                        hate_features=frozenset(raw.get("hate_features", ())),
                        counter_features=frozenset(raw.get("counter_features", ())),
                        error=raw.get("error"),
                    )
                )
            dialogues.append(
                AnnotatedDialogue(
                    dialogue_id=str(record["dialogue_id"]),
                    topic=record["topic"],
                    turns=tuple(turns),
                )
            )
    return AnnotatedCorpus(tuple(dialogues))


def annotated_to_corpus(annotated: AnnotatedCorpus) -> DialogueCorpus:
    return DialogueCorpus(
        tuple(
            Dialogue(d.dialogue_id, d.topic, tuple(at.turn for at in d.turns))
            for d in annotated
        )
    )


# ---------------------------------------------------------------------------
# Distribution report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    family: str
    code: str
    side: str  # "hate" | "counter"
    count: int
    proportion: float


def feature_distribution_report(
    annotated: AnnotatedCorpus,
    vocabulary: FeatureVocabulary | None = None,
) -> list[ReportRow]:
    """Per-code counts split by speech side.

    Proportions normalize within (family, side), so single-label families
    sum to 1 per side whenever any code fired.
    """
    vocabulary = vocabulary or default_vocabulary()
    counts: dict[tuple[str, str, str], int] = {}
    for dialogue in annotated:
        for at in dialogue.turns:
            for side, features in (("hate", at.hate_features), ("counter", at.counter_features)):
                for code in features:
                    family = vocabulary.family_of(code)
                    key = (family, code, side)
                    counts[key] = counts.get(key, 0) + 1

    rows: list[ReportRow] = []
    for family in vocabulary.family_names:
        for side in ("hate", "counter"):
            total = sum(
                counts.get((family, code, side), 0) for code in vocabulary.codes(family)
            )
            for code in vocabulary.codes(family):
                count = counts.get((family, code, side), 0)
                rows.append(
                    ReportRow(
                        family=family,
                        code=code,
                        side=side,
                        count=count,
                        proportion=count / total if total else 0.0,
                    )
                )
    return rows


def write_report_csv(rows: Sequence[ReportRow], path: str | Path) -> None:
    import csv

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "code", "side", "count", "proportion"])
        for row in rows:
            writer.writerow(
                [row.family, row.code, row.side, row.count, f"{row.proportion:.6f}"]
            )

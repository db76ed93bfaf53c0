"""Counter-argument speech-act detection with topic-keyword masking.

The detector reads a (hate, counter) pair and emits independent decisions
for six speech acts: denouncing, facts, humor, hypocrisy, positive and
question. To keep models from keying on topic vocabulary, a masked variant
replaces topic-specific keywords with ``#MASK#`` before encoding. Inference
uses a majority ensemble over four trained variants (masked / non-masked
crossed with two encoder families).

Keyword curation: content-POS tokens (adjectives, adverbs, interjections,
nouns, verbs) that occur in exactly one topic at most five times become that
topic's keywords; the sets are then expanded with related word forms and
plurals, keeping cross-topic disjointness.
"""

from __future__ import annotations

import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import DialogueCorpus
from .encoders import EncoderSpec, TinyTextEncoder, Vocabulary, pad_id_batches
from .errors import ConfigError, DimensionError, SchemaError, StateError
from .lexicon import (
    CONTENT_TAGS,
    FallbackPOSTagger,
    LexicalRelations,
    POSTagger,
    StaticLexicalRelations,
    pluralize,
)
from .training import TrainHistory, TrainingConfig, run_training, seed_everything

logger = logging.getLogger(__name__)

MASK_TOKEN = "#MASK#"

# The six speech acts the detector is trained on. "humor" is excluded from
# downstream annotation (see features.ARGTYPE_CODES) but keeps a trained head.
ARGTYPE_TRAINING_CLASSES = (
    "denouncing",
    "facts",
    "humor",
    "hypocrisy",
    "positive",
    "question",
)

DEFAULT_KEYWORD_MAX_COUNT = 5

_WORD_RE = re.compile(r"[\w'-]+")


def word_tokens(text: str) -> list[str]:
    """Lowercased word tokens; hyphens bind ('anti-muslim' is one token)."""
    out = []
    for raw in _WORD_RE.findall(text.lower()):
        tok = raw.strip("'-")
        if tok:
            out.append(tok)
    return out


# ---------------------------------------------------------------------------
# Topic keywords
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopicKeywordSet:
    """Per-topic keyword sets; a keyword belongs to exactly one topic."""

    by_topic: Mapping[str, frozenset[str]]

    def __post_init__(self) -> None:
        seen: dict[str, str] = {}
        normalized = {}
        for topic, words in self.by_topic.items():
            lowered = frozenset(w.lower() for w in words)
            for word in lowered:
                if word in seen:
                    raise SchemaError(
                        f"keyword {word!r} appears in topics {seen[word]!r} "
                        f"and {topic!r}"
                    )
                seen[word] = topic
            normalized[topic] = lowered
        object.__setattr__(self, "by_topic", normalized)

    @property
    def topics(self) -> tuple[str, ...]:
        return tuple(self.by_topic)

    def keywords(self, topic: str) -> frozenset[str]:
        return self.by_topic.get(topic, frozenset())

    def all_keywords(self) -> frozenset[str]:
        out: set[str] = set()
        for words in self.by_topic.values():
            out |= words
        return frozenset(out)

    def to_json(self) -> str:
        return json.dumps(
            {t: sorted(ws) for t, ws in sorted(self.by_topic.items())},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, payload: str) -> "TopicKeywordSet":
        raw = json.loads(payload)
        return cls({t: frozenset(ws) for t, ws in raw.items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TopicKeywordSet":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def curate_topic_keywords(
    corpus: DialogueCorpus,
    tagger: POSTagger | None = None,
    *,
    max_count: int = DEFAULT_KEYWORD_MAX_COUNT,
    reading: str = "exclusive",
) -> TopicKeywordSet:
    """Collect category-specific low-frequency keywords per topic.

    Both sides of every turn contribute tokens. A token qualifies when its
    POS is a content class and, under the default ``exclusive`` reading, it
    occurs in exactly one topic with total count <= ``max_count``. The
    ``frequent`` reading instead assigns a token to its strictly most
    frequent topic and allows at most ``max_count`` occurrences elsewhere.
    """
    if reading not in ("exclusive", "frequent"):
        raise ConfigError(f"unknown keyword reading {reading!r}")
    tagger = tagger or FallbackPOSTagger()

    counts: dict[str, dict[str, int]] = {}
    for dialogue in corpus:
        for turn in dialogue.turns:
            for text in (turn.hate_text, turn.counter_text):
                for tok in word_tokens(text):
                    per_topic = counts.setdefault(tok, {})
                    per_topic[dialogue.topic] = per_topic.get(dialogue.topic, 0) + 1

    topics = corpus.topics
    if len(topics) < 2:
        warnings.warn(
            "corpus has a single topic: keyword exclusivity is vacuous",
            stacklevel=2,
        )

    vocab = sorted(counts)
    tags = tagger.tag(vocab)
    by_topic: dict[str, set[str]] = {t: set() for t in topics}
    for tok, tag in zip(vocab, tags):
        if tag not in CONTENT_TAGS:
            continue
        per_topic = counts[tok]
        if reading == "exclusive":
            if len(per_topic) == 1 and sum(per_topic.values()) <= max_count:
                (topic,) = per_topic
                by_topic[topic].add(tok)
        else:
            ranked = sorted(per_topic.items(), key=lambda kv: (-kv[1], kv[0]))
            if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
                continue  # no strict majority topic
            home, home_count = ranked[0]
            leakage = sum(per_topic.values()) - home_count
            if leakage <= max_count:
                by_topic[home].add(tok)

    return TopicKeywordSet({t: frozenset(ws) for t, ws in by_topic.items()})


def expand_keywords(
    keywords: TopicKeywordSet,
    lexicon: LexicalRelations | None = None,
) -> TopicKeywordSet:
    """Add related word forms and plurals; cross-topic collisions are dropped
    from every topic that produced them."""
    lexicon = lexicon or StaticLexicalRelations()
    candidates: dict[str, set[str]] = {}
    for topic in keywords.topics:
        expanded: set[str] = set()
        for word in keywords.keywords(topic):
            expanded.add(word)
            related = {w.lower() for w in lexicon.related_forms(word)}
            expanded |= related
            expanded.add(pluralize(word))
            expanded |= {pluralize(w) for w in related}
        candidates[topic] = expanded

    owners: dict[str, list[str]] = {}
    for topic, words in candidates.items():
        for word in words:
            owners.setdefault(word, []).append(topic)
    dropped = {word for word, who in owners.items() if len(who) > 1}
    if dropped:
        logger.info("dropped %d cross-topic keyword collisions", len(dropped))
    return TopicKeywordSet(
        {t: frozenset(w for w in ws if w not in dropped) for t, ws in candidates.items()}
    )


def mask_text(text: str, keywords: TopicKeywordSet, topic: str) -> str:
    """Replace whole-word topic-keyword occurrences with ``#MASK#``.

    Matching is case-insensitive; hyphens count as word characters, so
    keyword 'muslim' does not fire inside 'anti-muslim'. Existing mask
    tokens are left untouched, which makes the operation idempotent.
    """
    words = sorted(keywords.keywords(topic), key=lambda w: (-len(w), w))
    if not words:
        return text
    pattern = re.compile(
        r"(?<![\w-])(?:" + "|".join(re.escape(w) for w in words) + r")(?![\w-])",
        re.IGNORECASE,
    )
    parts = text.split(MASK_TOKEN)
    return MASK_TOKEN.join(pattern.sub(MASK_TOKEN, part) for part in parts)


def mask_all_topics(text: str, keywords: TopicKeywordSet) -> str:
    for topic in keywords.topics:
        text = mask_text(text, keywords, topic)
    return text


# ---------------------------------------------------------------------------
# Labeled pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledPair:
    """A (hate, counter) pair with gold speech-act labels."""

    hate: str
    counter: str
    labels: tuple[str, ...]
    topic: str | None = None

    def __post_init__(self) -> None:
        unknown = [l for l in self.labels if l not in ARGTYPE_TRAINING_CLASSES]
        if unknown:
            raise SchemaError(
                f"labels outside the argument-type classes: {sorted(unknown)}"
            )


def load_labeled_pairs(path: str | Path) -> list[LabeledPair]:
    """JSON Lines {"hate": str, "counter": str, "labels": [str]} (+ "topic")."""
    pairs: list[LabeledPair] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            for key in ("hate", "counter", "labels"):
                if key not in record:
                    raise SchemaError(f"{path}:{line_no}: missing required field {key!r}")
            pairs.append(
                LabeledPair(
                    hate=record["hate"],
                    counter=record["counter"],
                    labels=tuple(record["labels"]),
                    topic=record.get("topic"),
                )
            )
    return pairs


def split_pairs_unseen_counters(
    pairs: Sequence[LabeledPair], *, test_size: int, seed: int = 0
) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Train/test split where every test counter-argument is unseen in training."""
    import random as _random

    by_counter: dict[str, list[LabeledPair]] = {}
    for pair in pairs:
        by_counter.setdefault(pair.counter, []).append(pair)
    keys = sorted(by_counter)
    _random.Random(seed).shuffle(keys)
    test: list[LabeledPair] = []
    test_keys: set[str] = set()
    for key in keys:
        if len(test) >= test_size:
            break
        test.extend(by_counter[key])
        test_keys.add(key)
    train = [p for p in pairs if p.counter not in test_keys]
    return train, test


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArgTypeLabel:
    classes: tuple[str, ...]
    probabilities: tuple[float, ...]
    decisions: tuple[int, ...]

    def decision(self, cls: str) -> int:
        return self.decisions[self.classes.index(cls)]

    def positive_classes(self) -> tuple[str, ...]:
        return tuple(c for c, d in zip(self.classes, self.decisions) if d)


@dataclass
class ArgTypeVariant:
    """One ensemble member configuration."""

    name: str
    masked: bool
    encoder_spec: EncoderSpec = field(default_factory=EncoderSpec)


class ArgTypeModel(nn.Module):
    """Pair encoder with per-class type tokens and attention read-out.

    Input layout: six type tokens, then ``<bos> hate <sep> <sep> counter
    <eos>``. The encoder's states at the six type positions and the BOS
    position pass through two 4-head attention layers; a separate linear
    head reads each class's logit off its own type position.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        encoder_spec: EncoderSpec | None = None,
        *,
        masked: bool = False,
        keywords: TopicKeywordSet | None = None,
        classes: tuple[str, ...] = ARGTYPE_TRAINING_CLASSES,
        threshold: float = 0.5,
    ):
        super().__init__()
        if masked and keywords is None:
            raise ConfigError("masked variant requires a keyword set")
        self.classes = classes
        self.masked = masked
        self.keywords = keywords
        self.threshold = threshold
        self.vocab = vocab
        self.type_tokens = [f"<type:{c}>" for c in classes]
        vocab.add_tokens(self.type_tokens)
        self.spec = encoder_spec or EncoderSpec()
        self.encoder = TinyTextEncoder(vocab, self.spec)
        hidden = self.encoder.hidden_size
        self.attn1 = nn.MultiheadAttention(hidden, num_heads=4, batch_first=True)
        self.attn2 = nn.MultiheadAttention(hidden, num_heads=4, batch_first=True)
        self.heads = nn.ModuleList(nn.Linear(hidden, 1) for _ in classes)
        self.trained = False

    # -- encoding ----------------------------------------------------------

    def _prepare(self, hate: str, counter: str, topic: str | None) -> tuple[str, str]:
        if not self.masked:
            return hate, counter
        assert self.keywords is not None
        if topic is not None and topic in self.keywords.topics:
            return (
                mask_text(hate, self.keywords, topic),
                mask_text(counter, self.keywords, topic),
            )
        return mask_all_topics(hate, self.keywords), mask_all_topics(
            counter, self.keywords
        )

    def encode_pair(self, hate: str, counter: str, topic: str | None = None) -> list[int]:
        hate, counter = self._prepare(hate, counter, topic)
        v = self.vocab
        ids = [v.id_of(t) for t in self.type_tokens]
        ids += [v.bos_id] + v.encode(hate)
        ids += [v.sep_id, v.sep_id] + v.encode(counter) + [v.eos_id]
        return ids[: self.spec.max_len]

    def forward(
        self, input_ids: torch.Tensor, attention_mask: torch.Tensor
    ) -> torch.Tensor:
        hidden, _ = self.encoder(input_ids, attention_mask)
        n = len(self.classes)
        read = hidden[:, : n + 1]  # type positions plus BOS
        x, _ = self.attn1(read, read, read, need_weights=False)
        read = read + x
        x, _ = self.attn2(read, read, read, need_weights=False)
        read = read + x
        logits = [head(read[:, i, :]) for i, head in enumerate(self.heads)]
        return torch.cat(logits, dim=1)

    def logits_for_pairs(
        self, pairs: Sequence[tuple[str, str, str | None]]
    ) -> torch.Tensor:
        sequences = [self.encode_pair(h, c, t) for h, c, t in pairs]
        ids, mask = pad_id_batches(sequences, self.vocab.pad_id)
        return self.forward(ids, mask)

    def predict(
        self, hate: str, counter: str, topic: str | None = None
    ) -> ArgTypeLabel:
        if not self.trained:
            raise StateError("argument-type model is untrained")
        with torch.no_grad():
            logits = self.logits_for_pairs([(hate, counter, topic)])
            probs = torch.sigmoid(logits)[0].tolist()
        return ArgTypeLabel(
            classes=self.classes,
            probabilities=tuple(float(p) for p in probs),
            decisions=tuple(int(p >= self.threshold) for p in probs),
        )


def save_argtype_model(directory: str | Path, model: ArgTypeModel) -> None:
    """Checkpoint: weights, vocabulary, keyword set (masked variants), metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / "weights.pt")
    model.vocab.save(directory / "vocab.json")
    if model.keywords is not None:
        model.keywords.save(directory / "keywords.json")
    metadata = {
        "model_type": "argtype",
        "classes": list(model.classes),
        "masked": model.masked,
        "threshold": model.threshold,
        "encoder_spec": model.spec.to_dict(),
    }
    (directory / "metadata.json").write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_argtype_model(directory: str | Path) -> ArgTypeModel:
    directory = Path(directory)
    metadata = json.loads((directory / "metadata.json").read_text(encoding="utf-8"))
    if metadata.get("model_type") != "argtype":
        raise ConfigError(f"{directory} is not an argument-type checkpoint")
    vocab = Vocabulary.load(directory / "vocab.json")
    keywords = None
    if (directory / "keywords.json").exists():
        keywords = TopicKeywordSet.load(directory / "keywords.json")
    model = ArgTypeModel(
        vocab,
        EncoderSpec.from_dict(metadata["encoder_spec"]),
        masked=metadata["masked"],
        keywords=keywords,
        classes=tuple(metadata["classes"]),
        threshold=metadata["threshold"],
    )
    model.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
    model.eval()
    model.trained = True
    return model


def build_argtype_vocab(
    pairs: Sequence[LabeledPair], keywords: TopicKeywordSet | None = None
) -> Vocabulary:
    texts = []
    for pair in pairs:
        texts.append(pair.hate)
        texts.append(pair.counter)
    extra = [MASK_TOKEN.lower()] if keywords is not None else []
    return Vocabulary.build(texts, extra_tokens=extra)


def train_argtype_model(
    train_pairs: Sequence[LabeledPair],
    val_pairs: Sequence[LabeledPair],
    variant: ArgTypeVariant,
    config: TrainingConfig,
    *,
    keywords: TopicKeywordSet | None = None,
    vocab: Vocabulary | None = None,
) -> tuple[ArgTypeModel, TrainHistory]:
    """Train one ensemble member. BCE over the six per-class logits."""
    if variant.masked and keywords is None:
        raise ConfigError(f"variant {variant.name!r} is masked but got no keywords")
    vocab = vocab or build_argtype_vocab(train_pairs, keywords)
    seed_everything(config.seed)  # weight init must not depend on prior RNG use
    model = ArgTypeModel(
        vocab,
        variant.encoder_spec,
        masked=variant.masked,
        keywords=keywords if variant.masked else None,
    )
    class_index = {c: i for i, c in enumerate(model.classes)}

    def batch_loss(m: ArgTypeModel, batch: list[LabeledPair]):
        logits = m.logits_for_pairs([(p.hate, p.counter, p.topic) for p in batch])
        targets = torch.zeros_like(logits)
        for row, pair in enumerate(batch):
            for label in pair.labels:
                targets[row, class_index[label]] = 1.0
        return F.binary_cross_entropy_with_logits(logits, targets)

    history = run_training(model, train_pairs, val_pairs, batch_loss, config)
    model.trained = True
    return model, history


# ---------------------------------------------------------------------------
# Ensemble
# ---------------------------------------------------------------------------

def argtype_majority(
    decision_rows: Sequence[Sequence[int]],
    probability_rows: Sequence[Sequence[float]],
    *,
    quorum: int = 3,
) -> list[int]:
    """Four-way majority with a documented tie rule: a class fires when at
    least `quorum` members vote 1, or exactly half do and the members' mean
    probability exceeds 0.5."""
    n_models = len(decision_rows)
    if n_models == 0 or len(probability_rows) != n_models:
        raise DimensionError("decision and probability rows must align")
    width = len(decision_rows[0])
    out = []
    for i in range(width):
        votes = sum(row[i] for row in decision_rows)
        if votes >= quorum:
            out.append(1)
        elif votes * 2 == n_models:
            mean_p = float(np.mean([row[i] for row in probability_rows]))
            out.append(int(mean_p > 0.5))
        else:
            out.append(0)
    return out


def ensemble_predict_argtype(
    hate: str,
    counter: str,
    models: Sequence[ArgTypeModel],
    topic: str | None = None,
) -> ArgTypeLabel:
    """Majority ensemble over the four trained variants."""
    if len(models) != 4:
        raise StateError(f"argument-type ensemble expects 4 variants, got {len(models)}")
    predictions = [m.predict(hate, counter, topic) for m in models]
    classes = predictions[0].classes
    for p in predictions:
        if p.classes != classes:
            raise DimensionError("ensemble members disagree on the class list")
    decisions = argtype_majority(
        [p.decisions for p in predictions],
        [p.probabilities for p in predictions],
    )
    probabilities = tuple(
        float(np.mean([p.probabilities[i] for p in predictions]))
        for i in range(len(classes))
    )
    return ArgTypeLabel(
        classes=classes, probabilities=probabilities, decisions=tuple(decisions)
    )

"""Human-value detection: three model families and their majority ensemble.

* classification: one encoder, one linear head per hierarchy level, trained
  with a weighted multi-level binary cross-entropy (weights 0.23/0.33/0.44
  for L1/L2/L3).
* entailment: scores (argument, descriptor) pairs; an L2 category fires when
  any of its descriptors scores above threshold.
* similarity: two-step metric learning. Step 1 embeds the descriptors with a
  quadruple loss and freezes them as centroids; step 2 trains an argument
  embedder into that space. Prediction is single-label: the L2 parent of the
  most similar centroid.

The ensemble decides each L2 category by majority vote (2 of 3).
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encoders import EncoderSpec, TinyTextEncoder, Vocabulary, build_text_encoder
from .errors import (
    ConfigError,
    DimensionError,
    NumericError,
    SchemaError,
    StateError,
)
from .taxonomy import LabeledArgument, Quadruple, SimilarityPair, ValueTaxonomy
from .training import TrainHistory, TrainingConfig, run_training, seed_everything

# The six L2 categories annotated downstream (most frequent in the source data).
TOP6_L2_CATEGORIES = (
    "Achievement",
    "Benevolence: caring",
    "Security: personal",
    "Security: societal",
    "Self-direction: action",
    "Universalism: concern",
)

DEFAULT_DECISION_THRESHOLD = 0.5


def l2_code(l2_name: str) -> str:
    """Feature-code spelling of an L2 category name."""
    return re.sub(r"[^a-z0-9]+", "_", l2_name.lower()).strip("_")


# ---------------------------------------------------------------------------
# Loss functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiTaskWeights:
    """Per-level loss weights; must sum to 1."""

    w_l1: float = 0.23
    w_l2: float = 0.33
    w_l3: float = 0.44

    def __post_init__(self) -> None:
        total = self.w_l1 + self.w_l2 + self.w_l3
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"multitask weights must sum to 1, got {total!r}")


def multitask_loss(
    logits_l1: torch.Tensor,
    logits_l2: torch.Tensor,
    logits_l3: torch.Tensor,
    labels_l1: torch.Tensor,
    labels_l2: torch.Tensor,
    labels_l3: torch.Tensor,
    weights: MultiTaskWeights = MultiTaskWeights(),
) -> torch.Tensor:
    """Weighted mean of the per-level binary cross-entropies (sigmoid outputs).

    Each level's BCE is averaged over classes and batch before weighting.
    """
    levels = [
        (logits_l1, labels_l1, weights.w_l1),
        (logits_l2, labels_l2, weights.w_l2),
        (logits_l3, labels_l3, weights.w_l3),
    ]
    total = None
    for logits, labels, weight in levels:
        if logits.shape != labels.shape:
            raise DimensionError(
                f"logits shape {tuple(logits.shape)} != labels shape {tuple(labels.shape)}"
            )
        bce = F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype))
        total = weight * bce if total is None else total + weight * bce
    assert total is not None
    return total


def _cosine(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    nx = torch.linalg.vector_norm(x, dim=-1)
    ny = torch.linalg.vector_norm(y, dim=-1)
    if bool((nx == 0).any()) or bool((ny == 0).any()):
        raise NumericError("cosine similarity undefined for zero-norm vectors")
    return (x * y).sum(dim=-1) / (nx * ny)


def quadruple_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    easy_negative: torch.Tensor,
    hard_negative: torch.Tensor,
    *,
    alpha: float = 2.0,
    beta: float = 1.0,
    margin: float = 1.0,
    distance: str = "cosine_distance",
) -> torch.Tensor:
    """Quadruple metric-learning loss over embedding vectors.

    With D the pairwise dissimilarity,

        L = alpha * [D(a, p) - D(a, n_easy)]
          + beta  * [D(n_hard, a) - D(n_hard, p)] + margin

    ``distance`` selects D: ``cosine_distance`` (1 - cosine similarity, the
    default: pulling the positive close lowers the loss) or
    ``cosine_similarity`` (the raw similarity, kept available because the
    sign convention is ambiguous in places).

    Accepts single vectors or [B, D] batches; batches reduce by mean.
    """
    tensors = [anchor, positive, easy_negative, hard_negative]
    shapes = {tuple(t.shape) for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"embedding shapes differ: {sorted(shapes)}")

    if distance == "cosine_distance":
        def dist(x, y):
            return 1.0 - _cosine(x, y)
    elif distance == "cosine_similarity":
        def dist(x, y):
            return _cosine(x, y)
    else:
        raise ConfigError(f"unknown distance {distance!r}")

    a, p, ne, nh = tensors
    loss = (
        alpha * (dist(a, p) - dist(a, ne))
        + beta * (dist(nh, a) - dist(nh, p))
        + margin
    )
    return loss.mean()


def similarity_pair_loss(
    argument_embeddings: torch.Tensor,
    descriptor_embeddings: torch.Tensor,
    labels: torch.Tensor,
    *,
    margin: float = 1.0,
) -> torch.Tensor:
    """Contrastive cosine-distance loss for argument/descriptor pairs.

    Positive pairs minimize the cosine distance; negative pairs are pushed to
    at least ``margin`` (1.0 = orthogonality). A batch of positives with
    identical embeddings scores exactly 0.
    """
    if argument_embeddings.shape != descriptor_embeddings.shape:
        raise DimensionError("argument/descriptor embedding shapes differ")
    d = 1.0 - _cosine(argument_embeddings, descriptor_embeddings)
    labels = labels.to(d.dtype)
    loss = labels * d + (1.0 - labels) * torch.clamp(margin - d, min=0.0)
    return loss.mean()


# ---------------------------------------------------------------------------
# Predictions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValuePrediction:
    """Per-category probabilities and binary decisions.

    ``rule`` records how decisions were derived: ``threshold`` (decision is
    probability >= threshold, the classification/entailment convention),
    ``argmax`` (single-label similarity model) or ``majority`` (ensemble).
    """

    labels: tuple[str, ...]
    probabilities: tuple[float, ...]
    decisions: tuple[int, ...]
    threshold: float = DEFAULT_DECISION_THRESHOLD
    rule: str = "threshold"

    def __post_init__(self) -> None:
        if not (len(self.labels) == len(self.probabilities) == len(self.decisions)):
            raise DimensionError("labels/probabilities/decisions lengths differ")
        for p in self.probabilities:
            if not np.isfinite(p) or not 0.0 <= p <= 1.0:
                raise NumericError(f"probability out of [0, 1]: {p!r}")
        if self.rule == "threshold":
            for p, d in zip(self.probabilities, self.decisions):
                if d != int(p >= self.threshold):
                    raise SchemaError(
                        "threshold-rule prediction with inconsistent decision"
                    )

    def probability(self, label: str) -> float:
        return self.probabilities[self.labels.index(label)]

    def decision(self, label: str) -> int:
        return self.decisions[self.labels.index(label)]

    @property
    def positive_labels(self) -> tuple[str, ...]:
        return tuple(l for l, d in zip(self.labels, self.decisions) if d)

    def to_record(self, text: str | None = None) -> dict:
        record: dict = {
            "l2": {
                label: {"prob": float(p), "decision": int(d)}
                for label, p, d in zip(self.labels, self.probabilities, self.decisions)
            }
        }
        if text is not None:
            record = {"text": text, **record}
        return record


def write_predictions(
    path: str | Path, items: Sequence[tuple[str, ValuePrediction]]
) -> None:
    """JSON Lines: {"text": ..., "l2": {label: {"prob": p, "decision": d}}}."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for text, pred in items:
            fh.write(json.dumps(pred.to_record(text), ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Classification model
# ---------------------------------------------------------------------------

class ValueClassificationModel(nn.Module):
    """Encoder with one linear head per taxonomy level (multi-label sigmoid)."""

    def __init__(
        self,
        taxonomy: ValueTaxonomy,
        encoder_spec: EncoderSpec | None = None,
        vocab: Vocabulary | None = None,
        threshold: float = DEFAULT_DECISION_THRESHOLD,
    ):
        super().__init__()
        self.taxonomy = taxonomy
        self.spec = encoder_spec or EncoderSpec()
        self.vocab = vocab or Vocabulary.build(list(taxonomy.descriptors))
        self.encoder = build_text_encoder(self.spec, self.vocab)
        hidden = self.encoder.hidden_size
        self.l1_labels = taxonomy.l1_values
        self.l2_labels = taxonomy.l2_categories
        self.l3_labels = taxonomy.l3_categories
        self.head_l1 = nn.Linear(hidden, len(self.l1_labels))
        self.head_l2 = nn.Linear(hidden, len(self.l2_labels))
        self.head_l3 = nn.Linear(hidden, len(self.l3_labels))
        self.threshold = threshold
        self.trained = False

    def forward(self, texts: Sequence[str]) -> tuple[torch.Tensor, ...]:
        pooled = self.encoder.pool_texts(texts)
        return self.head_l1(pooled), self.head_l2(pooled), self.head_l3(pooled)

    def predict(
        self, argument: str, labels: Sequence[str] | None = None
    ) -> ValuePrediction:
        if not self.trained:
            raise StateError("classification model is untrained")
        labels = tuple(labels) if labels is not None else self.l2_labels
        with torch.no_grad():
            _, logits_l2, _ = self.forward([argument])
            probs = torch.sigmoid(logits_l2)[0]
        by_label = dict(zip(self.l2_labels, probs.tolist()))
        out = [float(by_label.get(label, 0.0)) for label in labels]
        return ValuePrediction(
            labels=labels,
            probabilities=tuple(out),
            decisions=tuple(int(p >= self.threshold) for p in out),
            threshold=self.threshold,
            rule="threshold",
        )


def _level_targets(
    argument: LabeledArgument, model: ValueClassificationModel
) -> tuple[list[float], list[float], list[float]]:
    """Multi-hot targets per level.

    L2 targets are the gold labels, L3 targets their parents. L1 targets use
    the argument's explicit fine labels when present; otherwise every L1
    under a gold L2 is marked (a weak stand-in, since gold data is labeled
    at L2).
    """
    taxonomy = model.taxonomy
    gold_l2 = set(argument.l2_labels)
    gold_l3 = {taxonomy.l3_of_l2(l2) for l2 in gold_l2}
    if argument.l1_labels:
        gold_l1 = set(argument.l1_labels)
    else:
        gold_l1 = {l1 for l1 in taxonomy.l1_values if taxonomy.l1_to_l2[l1] in gold_l2}
    return (
        [1.0 if l1 in gold_l1 else 0.0 for l1 in model.l1_labels],
        [1.0 if l2 in gold_l2 else 0.0 for l2 in model.l2_labels],
        [1.0 if l3 in gold_l3 else 0.0 for l3 in model.l3_labels],
    )


def train_value_classifier(
    model: ValueClassificationModel,
    train_arguments: Sequence[LabeledArgument],
    val_arguments: Sequence[LabeledArgument],
    config: TrainingConfig,
    weights: MultiTaskWeights = MultiTaskWeights(),
) -> TrainHistory:
    def batch_loss(m: ValueClassificationModel, batch: list[LabeledArgument]):
        logits = m.forward([a.text for a in batch])
        targets = [_level_targets(a, m) for a in batch]
        t1 = torch.tensor([t[0] for t in targets])
        t2 = torch.tensor([t[1] for t in targets])
        t3 = torch.tensor([t[2] for t in targets])
        return multitask_loss(*logits, t1, t2, t3, weights)

    history = run_training(model, train_arguments, val_arguments, batch_loss, config)
    model.trained = True
    return history


# ---------------------------------------------------------------------------
# Entailment model
# ---------------------------------------------------------------------------

class EntailmentValueModel(nn.Module):
    """Scores whether an argument entails a value descriptor.

    The encoder sees ``[BOS] argument [SEP] descriptor [EOS]`` and a linear
    layer on the pooled output yields the entailment logit. At production
    scale the encoder would start from NLI-pretrained weights; the tiny
    encoder starts random.
    """

    def __init__(
        self,
        taxonomy: ValueTaxonomy,
        encoder_spec: EncoderSpec | None = None,
        vocab: Vocabulary | None = None,
        threshold: float = DEFAULT_DECISION_THRESHOLD,
    ):
        super().__init__()
        self.taxonomy = taxonomy
        self.spec = encoder_spec or EncoderSpec()
        self.vocab = vocab or Vocabulary.build(list(taxonomy.descriptors))
        self.encoder = build_text_encoder(self.spec, self.vocab)
        self.scorer = nn.Linear(self.encoder.hidden_size, 1)
        self.threshold = threshold
        self.trained = False

    def forward(
        self, arguments: Sequence[str], descriptors: Sequence[str]
    ) -> torch.Tensor:
        pooled = self.encoder.pool_texts(list(arguments), pair=list(descriptors))
        return self.scorer(pooled).squeeze(-1)

    def descriptor_probabilities(self, argument: str) -> dict[str, float]:
        if not self.trained:
            raise StateError("entailment model is untrained")
        descriptors = list(self.taxonomy.descriptors)
        probs: dict[str, float] = {}
        with torch.no_grad():
            for start in range(0, len(descriptors), 64):
                chunk = descriptors[start : start + 64]
                logits = self.forward([argument] * len(chunk), chunk)
                for desc, p in zip(chunk, torch.sigmoid(logits).tolist()):
                    probs[desc] = float(p)
        return probs


def train_entailment_model(
    model: EntailmentValueModel,
    train_pairs: Sequence,
    val_pairs: Sequence,
    config: TrainingConfig,
) -> TrainHistory:
    def batch_loss(m: EntailmentValueModel, batch: list):
        logits = m.forward([p.argument for p in batch], [p.descriptor for p in batch])
        labels = torch.tensor([float(p.label) for p in batch])
        return F.binary_cross_entropy_with_logits(logits, labels)

    history = run_training(model, train_pairs, val_pairs, batch_loss, config)
    model.trained = True
    return history


def aggregate_descriptor_probabilities(
    descriptor_probs: Mapping[str, float],
    descriptor_l2: Mapping[str, str],
    labels: Sequence[str],
    threshold: float = DEFAULT_DECISION_THRESHOLD,
) -> ValuePrediction:
    """Lift per-descriptor probabilities to L2: a category's probability is
    its best child descriptor's, and it fires iff that best child crosses
    the threshold."""
    probs = []
    for label in labels:
        children = [p for d, p in descriptor_probs.items() if descriptor_l2[d] == label]
        probs.append(max(children) if children else 0.0)
    return ValuePrediction(
        labels=tuple(labels),
        probabilities=tuple(float(p) for p in probs),
        decisions=tuple(int(p >= threshold) for p in probs),
        threshold=threshold,
        rule="threshold",
    )


def predict_entailment(
    argument: str,
    model: EntailmentValueModel,
    labels: Sequence[str] | None = None,
) -> ValuePrediction:
    labels = tuple(labels) if labels is not None else model.taxonomy.l2_categories
    descriptor_probs = model.descriptor_probabilities(argument)
    descriptor_l2 = {d: model.taxonomy.l2_of(d) for d in descriptor_probs}
    return aggregate_descriptor_probabilities(
        descriptor_probs, descriptor_l2, labels, model.threshold
    )


# ---------------------------------------------------------------------------
# Similarity model (two-step metric learning)
# ---------------------------------------------------------------------------

class DescriptorEmbedder(nn.Module):
    """Step 1: encoder whose pooled output is the descriptor embedding."""

    def __init__(self, vocab: Vocabulary, spec: EncoderSpec):
        super().__init__()
        self.encoder = TinyTextEncoder(vocab, spec)

    def embed(self, texts: Sequence[str]) -> torch.Tensor:
        return self.encoder.pool_texts(texts)


class ArgumentEmbedder(nn.Module):
    """Step 2: encoder pooled output through 3 fully-connected ReLU layers."""

    def __init__(self, vocab: Vocabulary, spec: EncoderSpec, out_dim: int):
        super().__init__()
        self.encoder = TinyTextEncoder(vocab, spec)
        hidden = self.encoder.hidden_size
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.fc3 = nn.Linear(hidden, out_dim)

    def embed(self, texts: Sequence[str]) -> torch.Tensor:
        x = self.encoder.pool_texts(texts)
        x = F.relu(self.fc1(x))
        x = F.relu(self.fc2(x))
        return self.fc3(x)


@dataclass
class EmbeddingSpace:
    """Frozen descriptor centroids plus (after step 2) an argument embedder."""

    descriptor_order: tuple[str, ...]
    descriptor_l2: tuple[str, ...]       # L2 parent per descriptor, same order
    l2_categories: tuple[str, ...]
    centroids: np.ndarray | None = None  # [N, D] unit-norm, read-only
    embedder: ArgumentEmbedder | None = None

    def __post_init__(self) -> None:
        if self.centroids is not None:
            if self.centroids.shape[0] != len(self.descriptor_order):
                raise DimensionError(
                    "centroid count differs from descriptor count: "
                    f"{self.centroids.shape[0]} vs {len(self.descriptor_order)}"
                )
            self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
            self.centroids.setflags(write=False)

    @property
    def is_trained(self) -> bool:
        return self.centroids is not None and self.embedder is not None


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NumericError("descriptor embedding has zero norm")
    return matrix / norms


def train_descriptor_embedder(
    train_quadruples: Sequence[Quadruple],
    val_quadruples: Sequence[Quadruple],
    taxonomy: ValueTaxonomy,
    encoder_spec: EncoderSpec | None = None,
    config: TrainingConfig | None = None,
    *,
    alpha: float = 2.0,
    beta: float = 1.0,
    margin: float = 1.0,
) -> tuple[EmbeddingSpace, TrainHistory]:
    """Step 1: learn descriptor embeddings and freeze them as centroids."""
    if not train_quadruples:
        raise ConfigError("no training quadruples")
    spec = encoder_spec or EncoderSpec()
    config = config or TrainingConfig(learning_rate=2e-5, patience=5)
    vocab = Vocabulary.build(list(taxonomy.descriptors))
    seed_everything(config.seed)  # weight init must not depend on prior RNG use
    model = DescriptorEmbedder(vocab, spec)

    def batch_loss(m: DescriptorEmbedder, batch: list[Quadruple]):
        texts = (
            [q.anchor for q in batch]
            + [q.positive for q in batch]
            + [q.easy_negative for q in batch]
            + [q.hard_negative for q in batch]
        )
        emb = m.embed(texts)
        n = len(batch)
        return quadruple_loss(
            emb[:n], emb[n : 2 * n], emb[2 * n : 3 * n], emb[3 * n :],
            alpha=alpha, beta=beta, margin=margin,
        )

    history = run_training(model, train_quadruples, val_quadruples, batch_loss, config)

    with torch.no_grad():
        raw = model.embed(list(taxonomy.descriptors)).double().numpy()
    space = EmbeddingSpace(
        descriptor_order=taxonomy.descriptors,
        descriptor_l2=tuple(taxonomy.l2_of(d) for d in taxonomy.descriptors),
        l2_categories=taxonomy.l2_categories,
        centroids=_unit_rows(raw),
    )
    return space, history


def train_argument_embedder(
    train_pairs: Sequence[SimilarityPair],
    val_pairs: Sequence[SimilarityPair],
    space: EmbeddingSpace,
    encoder_spec: EncoderSpec | None = None,
    config: TrainingConfig | None = None,
    *,
    margin: float = 1.0,
) -> tuple[EmbeddingSpace, TrainHistory]:
    """Step 2: train the argument embedder against the frozen centroids."""
    if space.centroids is None:
        raise StateError("descriptor centroids must be trained first")
    spec = encoder_spec or EncoderSpec()
    config = config or TrainingConfig(learning_rate=2e-5, patience=5)
    texts = [p.argument for p in train_pairs] + list(space.descriptor_order)
    vocab = Vocabulary.build(texts)
    out_dim = space.centroids.shape[1]
    seed_everything(config.seed)
    model = ArgumentEmbedder(vocab, spec, out_dim)
    centroid_index = {d: i for i, d in enumerate(space.descriptor_order)}
    centroid_tensor = torch.tensor(space.centroids, dtype=torch.float32)

    def batch_loss(m: ArgumentEmbedder, batch: list[SimilarityPair]):
        emb = m.embed([p.argument for p in batch])
        rows = [centroid_index[p.descriptor] for p in batch]
        targets = centroid_tensor[rows]
        labels = torch.tensor([float(p.label) for p in batch])
        return similarity_pair_loss(emb, targets, labels, margin=margin)

    history = run_training(model, train_pairs, val_pairs, batch_loss, config)
    return dataclasses.replace(space, embedder=model), history


def predict_similarity_from_embedding(
    vector: np.ndarray,
    space: EmbeddingSpace,
    labels: Sequence[str] | None = None,
) -> ValuePrediction:
    """Single-label prediction from a raw argument embedding.

    The L2 parent of the most similar centroid gets decision 1 with
    probability (cosine + 1) / 2; every other category gets 0/0. Ties break
    toward the earlier descriptor.
    """
    if space.centroids is None:
        raise StateError("embedding space has no trained centroids")
    labels = tuple(labels) if labels is not None else space.l2_categories
    vec = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vec.shape[0] != space.centroids.shape[1]:
        raise DimensionError(
            f"embedding dimension {vec.shape[0]} != centroid dimension "
            f"{space.centroids.shape[1]}"
        )
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise NumericError("argument embedding has zero norm")
    sims = space.centroids @ (vec / norm)
    best = int(np.argmax(sims))
    best_l2 = space.descriptor_l2[best]
    prob = float(np.clip((sims[best] + 1.0) / 2.0, 0.0, 1.0))
    probabilities = tuple(prob if l == best_l2 else 0.0 for l in labels)
    decisions = tuple(1 if l == best_l2 else 0 for l in labels)
    return ValuePrediction(
        labels=labels,
        probabilities=probabilities,
        decisions=decisions,
        rule="argmax",
    )


def predict_similarity(
    argument: str,
    space: EmbeddingSpace,
    labels: Sequence[str] | None = None,
) -> ValuePrediction:
    if not space.is_trained:
        raise StateError("embedding space is not fully trained")
    assert space.embedder is not None
    with torch.no_grad():
        vec = space.embedder.embed([argument])[0].double().numpy()
    return predict_similarity_from_embedding(vec, space, labels)


# ---------------------------------------------------------------------------
# Ensemble
# ---------------------------------------------------------------------------

def majority_vote(decision_rows: Sequence[Sequence[int]], quorum: int) -> list[int]:
    """Per-column majority: 1 iff at least `quorum` rows vote 1."""
    if not decision_rows:
        raise DimensionError("no votes to aggregate")
    width = len(decision_rows[0])
    for row in decision_rows:
        if len(row) != width:
            raise DimensionError("vote rows have differing lengths")
    return [
        int(sum(row[i] for row in decision_rows) >= quorum) for i in range(width)
    ]


Predictor = Callable[[str], ValuePrediction]


def ensemble_predict(
    argument: str,
    predictors: Sequence[Predictor | object],
    labels: Sequence[str] | None = None,
) -> ValuePrediction:
    """Majority-based ensemble: a category fires iff at least 2 of 3 members
    decide positive. Reported probability is the members' mean."""
    if len(predictors) != 3:
        raise ConfigError(f"ensemble expects 3 predictors, got {len(predictors)}")
    predictions: list[ValuePrediction] = []
    for predictor in predictors:
        if hasattr(predictor, "predict"):
            pred = predictor.predict(argument, labels=labels)  # type: ignore[attr-defined]
        else:
            pred = predictor(argument)  # type: ignore[operator]
        predictions.append(pred)
    label_sets = {p.labels for p in predictions}
    if len(label_sets) != 1:
        raise DimensionError("ensemble members predicted over different label sets")
    shared = predictions[0].labels
    decisions = majority_vote([p.decisions for p in predictions], quorum=2)
    probabilities = tuple(
        float(np.mean([p.probabilities[i] for p in predictions]))
        for i in range(len(shared))
    )
    return ValuePrediction(
        labels=shared,
        probabilities=probabilities,
        decisions=tuple(decisions),
        rule="majority",
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_value_checkpoint(
    directory: str | Path,
    model: nn.Module,
    *,
    model_type: str,
    taxonomy: ValueTaxonomy,
    threshold: float,
    training_config: TrainingConfig | None,
    encoder_spec: EncoderSpec | None = None,
    extra: dict | None = None,
) -> None:
    """Checkpoint layout: weights.pt, vocab.json, taxonomy.json, metadata.json.

    Metadata carries {model_type, taxonomy_hash, threshold, training_config};
    the taxonomy itself is stored alongside so loading is self-contained.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / "weights.pt")
    vocab = getattr(model, "vocab", None)
    if vocab is None and hasattr(model, "encoder"):
        vocab = getattr(model.encoder, "vocab", None)
    if vocab is not None:
        vocab.save(directory / "vocab.json")
    (directory / "taxonomy.json").write_text(
        taxonomy.canonical_json() + "\n", encoding="utf-8"
    )
    metadata = {
        "model_type": model_type,
        "taxonomy_hash": taxonomy.content_hash(),
        "threshold": threshold,
        "training_config": training_config.to_dict() if training_config else None,
        "encoder_spec": encoder_spec.to_dict() if encoder_spec else None,
    }
    if extra:
        metadata.update(extra)
    (directory / "metadata.json").write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint_metadata(directory: str | Path) -> dict:
    return json.loads((Path(directory) / "metadata.json").read_text(encoding="utf-8"))


def _load_checkpoint_taxonomy(directory: Path) -> ValueTaxonomy:
    from .taxonomy import load_taxonomy

    return load_taxonomy(directory / "taxonomy.json")


def save_classification_model(
    directory: str | Path,
    model: ValueClassificationModel,
    training_config: TrainingConfig | None = None,
) -> None:
    save_value_checkpoint(
        directory,
        model,
        model_type="value_classification",
        taxonomy=model.taxonomy,
        threshold=model.threshold,
        training_config=training_config,
        encoder_spec=model.spec,
    )


def load_classification_model(directory: str | Path) -> ValueClassificationModel:
    directory = Path(directory)
    metadata = load_checkpoint_metadata(directory)
    if metadata["model_type"] != "value_classification":
        raise ConfigError(f"{directory} is not a classification checkpoint")
    taxonomy = _load_checkpoint_taxonomy(directory)
    vocab = Vocabulary.load(directory / "vocab.json")
    model = ValueClassificationModel(
        taxonomy,
        EncoderSpec.from_dict(metadata["encoder_spec"]),
        vocab,
        threshold=metadata["threshold"],
    )
    model.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
    model.eval()
    model.trained = True
    return model


def save_entailment_model(
    directory: str | Path,
    model: EntailmentValueModel,
    training_config: TrainingConfig | None = None,
) -> None:
    save_value_checkpoint(
        directory,
        model,
        model_type="value_entailment",
        taxonomy=model.taxonomy,
        threshold=model.threshold,
        training_config=training_config,
        encoder_spec=model.spec,
    )


def load_entailment_model(directory: str | Path) -> EntailmentValueModel:
    directory = Path(directory)
    metadata = load_checkpoint_metadata(directory)
    if metadata["model_type"] != "value_entailment":
        raise ConfigError(f"{directory} is not an entailment checkpoint")
    taxonomy = _load_checkpoint_taxonomy(directory)
    vocab = Vocabulary.load(directory / "vocab.json")
    model = EntailmentValueModel(
        taxonomy,
        EncoderSpec.from_dict(metadata["encoder_spec"]),
        vocab,
        threshold=metadata["threshold"],
    )
    model.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
    model.eval()
    model.trained = True
    return model


def save_embedding_space(
    directory: str | Path,
    space: EmbeddingSpace,
    taxonomy: ValueTaxonomy,
    training_config: TrainingConfig | None = None,
    embedder_spec: EncoderSpec | None = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if space.centroids is None:
        raise StateError("cannot save an embedding space without centroids")
    np.save(directory / "centroids.npy", space.centroids)
    (directory / "space.json").write_text(
        json.dumps(
            {
                "descriptor_order": list(space.descriptor_order),
                "descriptor_l2": list(space.descriptor_l2),
                "l2_categories": list(space.l2_categories),
            },
            ensure_ascii=False,
        )
        + "\n",
        encoding="utf-8",
    )
    if space.embedder is not None:
        torch.save(space.embedder.state_dict(), directory / "embedder.pt")
        space.embedder.encoder.vocab.save(directory / "vocab.json")
        if embedder_spec is None:
            embedder_spec = space.embedder.encoder.spec
    metadata = {
        "model_type": "value_similarity",
        "taxonomy_hash": taxonomy.content_hash(),
        "threshold": None,
        "training_config": training_config.to_dict() if training_config else None,
        "encoder_spec": embedder_spec.to_dict() if embedder_spec else None,
        "embedding_dim": int(space.centroids.shape[1]),
        "has_embedder": space.embedder is not None,
    }
    (directory / "metadata.json").write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (directory / "taxonomy.json").write_text(
        taxonomy.canonical_json() + "\n", encoding="utf-8"
    )


def load_embedding_space(directory: str | Path) -> EmbeddingSpace:
    directory = Path(directory)
    metadata = load_checkpoint_metadata(directory)
    if metadata["model_type"] != "value_similarity":
        raise ConfigError(f"{directory} is not a similarity checkpoint")
    layout = json.loads((directory / "space.json").read_text(encoding="utf-8"))
    centroids = np.load(directory / "centroids.npy")
    embedder = None
    if metadata.get("has_embedder"):
        vocab = Vocabulary.load(directory / "vocab.json")
        spec = EncoderSpec.from_dict(metadata["encoder_spec"])
        embedder = ArgumentEmbedder(vocab, spec, metadata["embedding_dim"])
        embedder.load_state_dict(
            torch.load(directory / "embedder.pt", weights_only=True)
        )
        embedder.eval()
    return EmbeddingSpace(
        descriptor_order=tuple(layout["descriptor_order"]),
        descriptor_l2=tuple(layout["descriptor_l2"]),
        l2_categories=tuple(layout["l2_categories"]),
        centroids=centroids,
        embedder=embedder,
    )

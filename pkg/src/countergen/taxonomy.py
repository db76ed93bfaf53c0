"""Human-values hierarchy and training-pair construction.

The hierarchy has three levels: 4 broad aspects (L3), 20 value categories
(L2, the prediction target), and finer values (L1), each of which is
explained by one or more descriptor sentences (218 in the official release).

Three training sets are derived from a taxonomy plus a set of arguments
labeled at L2:

* quadruples (anchor / positive / easy negative / hard negative descriptors)
  for metric-learning the descriptor embedding space,
* argument-descriptor entailment pairs with binary labels,
* argument-descriptor similarity pairs, balanced per argument.

File format: JSON ``{"l3": [...], "l2": {name: l3}, "l1": {name: l2},
"descriptors": {sentence: l1}}``. Labeled arguments: JSON Lines
``{"text": str, "l2_labels": [str]}`` with an optional ``l1_labels`` list.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import SchemaError, TaxonomyError

logger = logging.getLogger(__name__)

# Cardinalities of the official release.
OFFICIAL_L3_COUNT = 4
OFFICIAL_L2_COUNT = 20
OFFICIAL_DESCRIPTOR_COUNT = 218

# Default size of the quadruple training set.
DEFAULT_QUADRUPLE_TOTAL = 702


@dataclass(frozen=True)
class ValueTaxonomy:
    """Validated descriptor -> L1 -> L2 -> L3 hierarchy.

    Iteration orders (descriptors, l1_values, ...) follow file order, which
    makes every sampling routine deterministic for a fixed seed.
    """

    l3_categories: tuple[str, ...]
    l2_to_l3: Mapping[str, str]
    l1_to_l2: Mapping[str, str]
    descriptor_to_l1: Mapping[str, str]

    def __post_init__(self) -> None:
        problems: list[str] = []
        l3_set = set(self.l3_categories)
        if len(l3_set) != len(self.l3_categories):
            problems.append("duplicate L3 categories")
        for l2, l3 in self.l2_to_l3.items():
            if l3 not in l3_set:
                problems.append(f"L2 {l2!r} maps to unknown L3 {l3!r}")
        for l1, l2 in self.l1_to_l2.items():
            if l2 not in self.l2_to_l3:
                problems.append(f"L1 {l1!r} maps to unknown L2 {l2!r}")
        for desc, l1 in self.descriptor_to_l1.items():
            if l1 not in self.l1_to_l2:
                problems.append(f"descriptor {desc!r} maps to unknown L1 {l1!r}")
        if not self.descriptor_to_l1:
            problems.append("taxonomy has no descriptors")
        if problems:
            raise TaxonomyError("; ".join(problems))

    # -- views ---------------------------------------------------------------

    @property
    def l2_categories(self) -> tuple[str, ...]:
        return tuple(self.l2_to_l3)

    @property
    def l1_values(self) -> tuple[str, ...]:
        return tuple(self.l1_to_l2)

    @property
    def descriptors(self) -> tuple[str, ...]:
        return tuple(self.descriptor_to_l1)

    def l1_of(self, descriptor: str) -> str:
        try:
            return self.descriptor_to_l1[descriptor]
        except KeyError:
            raise TaxonomyError(f"unknown descriptor: {descriptor!r}") from None

    def l2_of(self, descriptor: str) -> str:
        return self.l1_to_l2[self.l1_of(descriptor)]

    def l3_of_l2(self, l2: str) -> str:
        try:
            return self.l2_to_l3[l2]
        except KeyError:
            raise TaxonomyError(f"unknown L2 category: {l2!r}") from None

    def descriptors_of_l1(self, l1: str) -> tuple[str, ...]:
        return tuple(d for d, parent in self.descriptor_to_l1.items() if parent == l1)

    def descriptors_of_l2(self, l2: str) -> tuple[str, ...]:
        return tuple(d for d in self.descriptor_to_l1 if self.l2_of(d) == l2)

    def l1_of_l2(self, l2: str) -> tuple[str, ...]:
        return tuple(l1 for l1, parent in self.l1_to_l2.items() if parent == l2)

    # -- identity ------------------------------------------------------------

    def canonical_json(self) -> str:
        payload = {
            "l3": list(self.l3_categories),
            "l2": dict(self.l2_to_l3),
            "l1": dict(self.l1_to_l2),
            "descriptors": dict(self.descriptor_to_l1),
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def is_official_shape(self) -> bool:
        return (
            len(self.l3_categories) == OFFICIAL_L3_COUNT
            and len(self.l2_to_l3) == OFFICIAL_L2_COUNT
            and len(self.descriptor_to_l1) == OFFICIAL_DESCRIPTOR_COUNT
        )

    def validate_official_shape(self) -> None:
        """Raise unless the taxonomy has the official 4/20/218 cardinalities."""
        if not self.is_official_shape():
            raise TaxonomyError(
                "taxonomy does not match the official cardinalities: "
                f"expected {OFFICIAL_L3_COUNT} L3 / {OFFICIAL_L2_COUNT} L2 / "
                f"{OFFICIAL_DESCRIPTOR_COUNT} descriptors, got "
                f"{len(self.l3_categories)} / {len(self.l2_to_l3)} / "
                f"{len(self.descriptor_to_l1)}"
            )


def load_taxonomy(path: str | Path) -> ValueTaxonomy:
    """Load and structurally validate a taxonomy file.

    Structural invariants (every node has exactly one parent at the next
    level up) always hold for the returned object; official cardinalities
    are checked separately via ``validate_official_shape`` so that small
    test taxonomies load through the same path.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("l3", "l2", "l1", "descriptors"):
        if key not in raw:
            raise SchemaError(f"{path}: missing required field {key!r}")
    return ValueTaxonomy(
        l3_categories=tuple(raw["l3"]),
        l2_to_l3=dict(raw["l2"]),
        l1_to_l2=dict(raw["l1"]),
        descriptor_to_l1=dict(raw["descriptors"]),
    )


def save_taxonomy(taxonomy: ValueTaxonomy, path: str | Path) -> None:
    Path(path).write_text(taxonomy.canonical_json() + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Labeled arguments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledArgument:
    """An argument text with gold L2 labels (and optional fine L1 labels)."""

    text: str
    l2_labels: tuple[str, ...]
    l1_labels: tuple[str, ...] = ()


def load_labeled_arguments(path: str | Path) -> list[LabeledArgument]:
    path = Path(path)
    arguments: list[LabeledArgument] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            for key in ("text", "l2_labels"):
                if key not in record:
                    raise SchemaError(f"{path}:{line_no}: missing required field {key!r}")
            arguments.append(
                LabeledArgument(
                    text=record["text"],
                    l2_labels=tuple(record["l2_labels"]),
                    l1_labels=tuple(record.get("l1_labels", ())),
                )
            )
    return arguments


# ---------------------------------------------------------------------------
# Quadruples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quadruple:
    """Metric-learning unit: anchor with one positive and two negatives.

    By construction: positive shares the anchor's L1; the hard negative
    shares the anchor's L2 but not its L1; the easy negative shares neither.
    When an anchor's L2 holds a single L1 no hard negative exists, and a
    second easy negative is drawn in its place (counted in the sampler's
    stats).
    """

    anchor: str
    positive: str
    easy_negative: str
    hard_negative: str


def sample_quadruples(
    taxonomy: ValueTaxonomy,
    *,
    total: int | None = DEFAULT_QUADRUPLE_TOTAL,
    count_per_descriptor: int | None = None,
    seed: int = 0,
    stats: dict | None = None,
) -> list[Quadruple]:
    """Sample descriptor quadruples, deterministically for a fixed seed.

    Descriptors are visited round-robin in taxonomy order until ``total``
    quadruples exist; passing ``count_per_descriptor`` instead fixes the
    number per anchor. Anchors whose L1 has a single descriptor are skipped
    (no positive exists).

    Args:
        stats: optional dict that receives run metadata
            (``skipped_single_descriptor_l1``, ``hard_negative_fallbacks``).
    """
    if (total is None) == (count_per_descriptor is None):
        raise SchemaError("specify exactly one of total / count_per_descriptor")
    if count_per_descriptor is not None and count_per_descriptor <= 0:
        raise SchemaError("count_per_descriptor must be positive")
    if total is not None and total <= 0:
        raise SchemaError("total must be positive")

    rng = random.Random(seed)
    run_stats = {"skipped_single_descriptor_l1": 0, "hard_negative_fallbacks": 0}

    anchors: list[str] = []
    skipped_l1: set[str] = set()
    for desc in taxonomy.descriptors:
        l1 = taxonomy.l1_of(desc)
        if len(taxonomy.descriptors_of_l1(l1)) < 2:
            if l1 not in skipped_l1:
                skipped_l1.add(l1)
                logger.warning(
                    "L1 %r has a single descriptor; skipped as anchor (no positive)", l1
                )
            continue
        anchors.append(desc)
    run_stats["skipped_single_descriptor_l1"] = len(skipped_l1)
    if not anchors:
        raise TaxonomyError("no L1 class has two or more descriptors")

    by_l2: dict[str, tuple[str, ...]] = {
        l2: taxonomy.descriptors_of_l2(l2) for l2 in taxonomy.l2_categories
    }
    all_descriptors = taxonomy.descriptors

    def draw_one(anchor: str) -> Quadruple:
        anchor_l1 = taxonomy.l1_of(anchor)
        anchor_l2 = taxonomy.l2_of(anchor)
        positive = rng.choice(
            [d for d in taxonomy.descriptors_of_l1(anchor_l1) if d != anchor]
        )
        easy_pool = [d for d in all_descriptors if taxonomy.l2_of(d) != anchor_l2]
        if not easy_pool:
            raise TaxonomyError("taxonomy needs at least two L2 categories")
        easy = rng.choice(easy_pool)
        hard_pool = [
            d
            for d in by_l2[anchor_l2]
            if taxonomy.l1_of(d) != anchor_l1 and d not in (anchor, positive)
        ]
        if hard_pool:
            hard = rng.choice(hard_pool)
        else:
            # Single-L1 category: fall back to a second easy negative.
            run_stats["hard_negative_fallbacks"] += 1
            hard = rng.choice([d for d in easy_pool if d != easy] or easy_pool)
        return Quadruple(anchor, positive, easy, hard)

    quadruples: list[Quadruple] = []
    if count_per_descriptor is not None:
        for anchor in anchors:
            for _ in range(count_per_descriptor):
                quadruples.append(draw_one(anchor))
    else:
        assert total is not None
        i = 0
        while len(quadruples) < total:
            quadruples.append(draw_one(anchors[i % len(anchors)]))
            i += 1

    if stats is not None:
        stats.update(run_stats)
    return quadruples


def train_validation_split(
    items: Sequence, *, validation_fraction: float = 0.1, seed: int = 0
) -> tuple[list, list]:
    """Random split with a seeded shuffle; validation gets the stated fraction."""
    if not 0.0 <= validation_fraction < 1.0:
        raise SchemaError("validation_fraction must be in [0, 1)")
    order = list(range(len(items)))
    random.Random(seed).shuffle(order)
    n_val = round(len(items) * validation_fraction)
    val_idx = set(order[:n_val])
    train = [items[i] for i in range(len(items)) if i not in val_idx]
    val = [items[i] for i in range(len(items)) if i in val_idx]
    return train, val


# ---------------------------------------------------------------------------
# Entailment and similarity pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntailmentPair:
    argument: str
    descriptor: str
    label: int  # 1 iff the descriptor's L2 is among the argument's gold labels


@dataclass(frozen=True)
class SimilarityPair:
    argument: str
    descriptor: str
    label: int


def _gold_descriptor_sets(
    argument: LabeledArgument, taxonomy: ValueTaxonomy
) -> tuple[list[str], set[str]]:
    positives: list[str] = []
    gold_l2 = set(argument.l2_labels)
    unknown = gold_l2.difference(taxonomy.l2_categories)
    if unknown:
        raise SchemaError(
            f"argument carries labels outside the taxonomy: {sorted(unknown)}"
        )
    for desc in taxonomy.descriptors:
        if taxonomy.l2_of(desc) in gold_l2:
            positives.append(desc)
    return positives, gold_l2


def build_entailment_pairs(
    arguments: Sequence[LabeledArgument],
    taxonomy: ValueTaxonomy,
    *,
    negative_ratio: float = 1.0,
    seed: int = 0,
) -> list[EntailmentPair]:
    """Positive pairs for every descriptor under an argument's gold L2 labels,
    plus negatives sampled from the remaining descriptors at the given ratio.

    Arguments with no gold labels contribute ``round(negative_ratio)`` (at
    least one) negatives only. Negatives never share an L2 with a gold label.
    """
    if negative_ratio < 0:
        raise SchemaError("negative_ratio must be non-negative")
    rng = random.Random(seed)
    pairs: list[EntailmentPair] = []
    for argument in arguments:
        positives, gold_l2 = _gold_descriptor_sets(argument, taxonomy)
        negative_pool = [
            d for d in taxonomy.descriptors if taxonomy.l2_of(d) not in gold_l2
        ]
        if positives:
            n_neg = round(negative_ratio * len(positives))
        else:
            n_neg = max(1, round(negative_ratio))
        n_neg = min(n_neg, len(negative_pool))
        for desc in positives:
            pairs.append(EntailmentPair(argument.text, desc, 1))
        for desc in rng.sample(negative_pool, n_neg):
            pairs.append(EntailmentPair(argument.text, desc, 0))
    return pairs


def build_similarity_pairs(
    arguments: Sequence[LabeledArgument],
    taxonomy: ValueTaxonomy,
    *,
    seed: int = 0,
) -> list[SimilarityPair]:
    """Balanced similarity pairs: K positives and exactly K negatives per argument.

    Negatives are drawn by sampling one descriptor per non-gold L1 class and
    keeping K of those at random; if fewer non-gold L1 classes than K exist,
    additional descriptors are drawn from the non-gold pool (a warning is
    logged if exact balance is impossible). Unlabeled arguments contribute a
    single negative.
    """
    rng = random.Random(seed)
    pairs: list[SimilarityPair] = []
    for argument in arguments:
        positives, gold_l2 = _gold_descriptor_sets(argument, taxonomy)
        k = len(positives)
        non_gold_l1 = [
            l1 for l1 in taxonomy.l1_values if taxonomy.l1_to_l2[l1] not in gold_l2
        ]
        per_l1 = [rng.choice(taxonomy.descriptors_of_l1(l1)) for l1 in non_gold_l1]
        wanted = k if k > 0 else 1
        if len(per_l1) >= wanted:
            negatives = rng.sample(per_l1, wanted)
        else:
            negatives = list(per_l1)
            remainder = [
                d
                for d in taxonomy.descriptors
                if taxonomy.l2_of(d) not in gold_l2 and d not in negatives
            ]
            rng.shuffle(remainder)
            negatives.extend(remainder[: wanted - len(negatives)])
            if len(negatives) < wanted:
                logger.warning(
                    "argument has %d positives but only %d possible negatives",
                    k,
                    len(negatives),
                )
        for desc in positives:
            pairs.append(SimilarityPair(argument.text, desc, 1))
        for desc in negatives:
            pairs.append(SimilarityPair(argument.text, desc, 0))
    return pairs

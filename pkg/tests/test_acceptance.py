"""Acceptance suite: eight criteria, one test and one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. The heavyweight training runs come from shared session fixtures
(conftest.py), so this module re-asserts their results without retraining.
Headline full-scale numbers are out of desk-scale reach by design; these
checks are property-based plus toy-scale directional experiments, with the
published data-prep counts asserted whenever the real datasets are mounted
(COUNTERGEN_SEMEVAL_DIR).
"""

from __future__ import annotations

import itertools
import math
import os
import random
import time

import numpy as np
import pytest
import torch

from countergen.evaluation import corpus_bleu, perplexity_from_batches, rouge_l

BUDGETS = {1: 60, 2: 60, 3: 60, 4: 120, 6: 600, 7: 300}


def report(criterion: int, name: str, detail: str, started: float | None = None) -> None:
    line = f"[acceptance] criterion {criterion} ({name}): PASS"
    if detail:
        line += f" - {detail}"
    if started is not None:
        elapsed = time.monotonic() - started
        line += f" [{elapsed:.1f}s]"
        assert elapsed < BUDGETS[criterion], f"criterion {criterion} over budget"
    print(line, flush=True)


# ---------------------------------------------------------------------------
# 1. Loss functions
# ---------------------------------------------------------------------------

def test_criterion_1_loss_functions():
    from countergen.value_detector import MultiTaskWeights, multitask_loss, quadruple_loss

    started = time.monotonic()
    t = lambda *v: torch.tensor(v, dtype=torch.float64)

    # hand-computed values, exact to 1e-9
    assert abs(float(quadruple_loss(t(1, 0), t(1, 0), t(1, 0), t(1, 0))) - 1.0) < 1e-9
    assert abs(float(quadruple_loss(t(1, 0), t(1, 0), t(0, 1), t(0, 1))) + 1.0) < 1e-9
    assert abs(float(quadruple_loss(t(1, 0), t(0, 1), t(1, 0), t(1, 0))) - 2.0) < 1e-9

    # finite-difference gradient check at 10 random points, 1e-4 relative
    torch.manual_seed(2024)
    eps = 1e-6
    for _ in range(10):
        tensors = [
            (torch.randn(6, dtype=torch.float64) + 0.1).requires_grad_(True)
            for _ in range(4)
        ]
        quadruple_loss(*tensors).backward()
        for which, tensor in enumerate(tensors):
            numeric = torch.zeros_like(tensor)
            for i in range(tensor.numel()):
                plus = [x.detach().clone() for x in tensors]
                minus = [x.detach().clone() for x in tensors]
                plus[which][i] += eps
                minus[which][i] -= eps
                numeric[i] = (
                    float(quadruple_loss(*plus)) - float(quadruple_loss(*minus))
                ) / (2 * eps)
            rel = float((numeric - tensor.grad).norm()) / max(float(tensor.grad.norm()), 1e-8)
            assert rel < 1e-4

    # multitask: ln 2 at zero logits, linearity in the weights
    zeros = torch.zeros(3, 4, dtype=torch.float64)
    labels = torch.randint(0, 2, (3, 4)).to(torch.float64)
    assert abs(float(multitask_loss(zeros, zeros, zeros, labels, labels, labels))
               - math.log(2)) < 1e-9
    logits = [torch.randn(2, 3, dtype=torch.float64) for _ in range(3)]
    targets = [torch.randint(0, 2, (2, 3)).to(torch.float64) for _ in range(3)]
    parts = [
        float(multitask_loss(*logits, *targets,
                             MultiTaskWeights(float(i == 0), float(i == 1), float(i == 2))))
        for i in range(3)
    ]
    combined = float(multitask_loss(*logits, *targets))
    assert abs(combined - (0.23 * parts[0] + 0.33 * parts[1] + 0.44 * parts[2])) < 1e-12

    report(1, "loss functions", "hand values exact, gradients within 1e-4", started)


# ---------------------------------------------------------------------------
# 2. Set logic: delta, ensembles, scheme merging
# ---------------------------------------------------------------------------

def test_criterion_2_set_logic():
    from countergen.annotator import merge_scheme_labels
    from countergen.argtype_detector import argtype_majority
    from countergen.features import default_vocabulary
    from countergen.generator import feature_delta
    from countergen.value_detector import majority_vote

    started = time.monotonic()
    vocabulary = default_vocabulary()
    codes = list(vocabulary.codes())
    rng = random.Random(99)

    # feature delta vs raw set operations on random code sets
    for _ in range(500):
        query = frozenset(rng.sample(codes, rng.randint(0, 10)))
        response = frozenset(rng.sample(codes, rng.randint(0, 10)))
        placement = feature_delta(query, response)
        assert placement.encoder_codes == query - response
        assert placement.decoder_codes == response - query

    # 3-member ensemble over all 2^3 vote patterns
    for votes in itertools.product([0, 1], repeat=3):
        expected = 1 if sum(votes) >= 2 else 0
        assert majority_vote([[v] for v in votes], quorum=2) == [expected]

    # 4-member ensemble over all 2^4 patterns, both tie directions
    for votes in itertools.product([0, 1], repeat=4):
        for mean_prob in (0.3, 0.7):
            got = argtype_majority([[v] for v in votes], [[mean_prob]] * 4)
            total = sum(votes)
            expected = 1 if total >= 3 else (int(mean_prob > 0.5) if total == 2 else 0)
            assert got == [expected]

    # scheme merging: full 6-label table plus aliases
    table = {
        "From Consequence": "from_consequence",
        "Source Knowledge": "from_source_authority_knowledge",
        "Source Authority": "from_source_authority_knowledge",
        "From Source Authority": "from_source_authority_knowledge",
        "From Source Knowledge": "from_source_authority_knowledge",
        "Means for Goal": "goal_means",
        "Goal from Means": "goal_means",
        "Goal for Means": "goal_means",
        "Rule or Principle": "rule_or_principle",
    }
    for raw, expected in table.items():
        assert merge_scheme_labels(raw) == expected

    report(2, "set logic", "delta, 2^3 and 2^4 ensembles, scheme merging", started)


# ---------------------------------------------------------------------------
# 3. Keyword masking
# ---------------------------------------------------------------------------

def test_criterion_3_masking():
    from countergen.argtype_detector import (
        TopicKeywordSet,
        curate_topic_keywords,
        mask_text,
        word_tokens,
    )
    from countergen.corpus import Dialogue, DialogueCorpus, Turn
    from countergen.lexicon import CONTENT_TAGS, FallbackPOSTagger

    started = time.monotonic()
    rng = random.Random(123)

    # 200-document synthetic corpus with known exclusive tokens
    exclusive = {"t1": ["unicorn", "glitter"], "t2": ["robot", "circuit"]}
    shared = ["city", "group", "people", "story"]
    dialogues = []
    doc = 0
    for topic, words in exclusive.items():
        turns = []
        for i in range(50):  # 50 turns x 2 sides = 100 documents per topic
            def text():
                base = [rng.choice(shared) for _ in range(rng.randint(3, 6))]
                if rng.random() < 0.04:
                    base.append(rng.choice(words))
                return " ".join(base)

            turns.append(Turn(i, text(), text(), topic))
            doc += 2
        dialogues.append(Dialogue(topic, topic, tuple(turns)))
    corpus = DialogueCorpus(tuple(dialogues))
    assert doc == 200

    produced = curate_topic_keywords(corpus)

    # brute-force counting oracle
    tagger = FallbackPOSTagger()
    counts: dict[str, dict[str, int]] = {}
    for dialogue in corpus.dialogues:
        for turn in dialogue.turns:
            for text in (turn.hate_text, turn.counter_text):
                for token in word_tokens(text):
                    counts.setdefault(token, {})
                    counts[token][dialogue.topic] = counts[token].get(dialogue.topic, 0) + 1
    expected: dict[str, set[str]] = {t: set() for t in corpus.topics}
    for token, per_topic in counts.items():
        if tagger.tag_one(token) in CONTENT_TAGS and len(per_topic) == 1:
            if sum(per_topic.values()) <= 5:
                (topic,) = per_topic
                expected[topic].add(token)
    assert {t: set(produced.keywords(t)) for t in produced.topics} == expected

    # substitution oracle on fixed cases
    keywords = TopicKeywordSet({"t": frozenset({"muslim", "islam", "mask"})})
    assert mask_text("Muslims are bad", TopicKeywordSet({"t": frozenset({"muslims"})}), "t") \
        == "#MASK# are bad"
    assert mask_text("anti-muslim muslim", keywords, "t") == "anti-muslim #MASK#"

    # idempotence on 1,000 random strings
    alphabet = ["muslim", "islam", "mask", "#MASK#", "word", ",", "anti-muslim", "x-y"]
    for _ in range(1000):
        text = " ".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
        once = mask_text(text, keywords, "t")
        assert mask_text(once, keywords, "t") == once

    report(3, "keyword masking", "curation oracle, boundary cases, idempotence", started)


# ---------------------------------------------------------------------------
# 4. Metrics
# ---------------------------------------------------------------------------

def test_criterion_4_metrics():
    from tests.test_evaluation import (
        FIXTURE_BLEU,
        FIXTURE_HYPS,
        FIXTURE_REFS,
        UniformModel,
        random_batches,
    )

    started = time.monotonic()
    assert corpus_bleu(FIXTURE_HYPS, FIXTURE_HYPS) == 100.0
    assert corpus_bleu(["a b c"], ["a b c"]) == 100.0  # short-input identity
    assert corpus_bleu(["aaa bbb"], ["ccc ddd"]) == 0.0
    assert abs(corpus_bleu(FIXTURE_HYPS, FIXTURE_REFS) - FIXTURE_BLEU) < 1e-4

    assert rouge_l("same words here", "same words here") == 1.0
    assert rouge_l("aaa", "bbb") == 0.0
    assert abs(rouge_l("the cat sat", "the cat ate") - 2 / 3) < 1e-9

    vocab_size = 97
    batches = random_batches(random.Random(5), vocab_size)
    ppl = perplexity_from_batches(UniformModel(vocab_size), batches, pad_id=0)
    assert abs(ppl - vocab_size) / vocab_size < 0.02

    report(4, "metrics", f"frozen BLEU fixture {FIXTURE_BLEU:.4f}, uniform PPL = V", started)


# ---------------------------------------------------------------------------
# 5. Data-prep counts
# ---------------------------------------------------------------------------

def test_criterion_5_data_prep_counts():
    from countergen.taxonomy import (
        LabeledArgument,
        build_entailment_pairs,
        build_similarity_pairs,
        load_taxonomy,
        sample_quadruples,
    )
    from countergen.toydata import toy_taxonomy_path

    taxonomy = load_taxonomy(toy_taxonomy_path())
    quadruples = sample_quadruples(taxonomy, seed=0)
    assert len(quadruples) == 702  # default total matches the published count
    for q in quadruples:
        assert taxonomy.l1_of(q.anchor) == taxonomy.l1_of(q.positive)
        assert taxonomy.l2_of(q.easy_negative) != taxonomy.l2_of(q.anchor)
        assert taxonomy.l2_of(q.hard_negative) == taxonomy.l2_of(q.anchor)
        assert taxonomy.l1_of(q.hard_negative) != taxonomy.l1_of(q.anchor)
        assert len({q.anchor, q.positive, q.easy_negative, q.hard_negative}) == 4

    arguments = [
        LabeledArgument(text=f"text {i}", l2_labels=(taxonomy.l2_categories[i % 4],))
        for i in range(30)
    ]
    entailment = build_entailment_pairs(arguments, taxonomy, seed=1)
    gold = {a.text: set(a.l2_labels) for a in arguments}
    for pair in entailment:
        assert (taxonomy.l2_of(pair.descriptor) in gold[pair.argument]) == bool(pair.label)
    similarity = build_similarity_pairs(arguments, taxonomy, seed=1)
    per_argument: dict[str, list[int]] = {}
    for pair in similarity:
        per_argument.setdefault(pair.argument, []).append(pair.label)
    for labels in per_argument.values():
        assert sum(labels) == len(labels) - sum(labels)  # balanced

    detail = "toy invariants hold"
    semeval = os.environ.get("COUNTERGEN_SEMEVAL_DIR")
    if semeval:
        from pathlib import Path

        from countergen.taxonomy import load_labeled_arguments

        root = Path(semeval)
        official = load_taxonomy(root / "taxonomy.json")
        official.validate_official_shape()
        train = load_labeled_arguments(root / "train.jsonl")
        validation = load_labeled_arguments(root / "validation.jsonl")
        assert len(sample_quadruples(official, seed=0)) == 702
        assert len(build_entailment_pairs(train, official, seed=0)) == 189_312
        assert len(build_entailment_pairs(validation, official, seed=0)) == 65_900
        assert len(build_similarity_pairs(train, official, seed=0)) == 200_059
        assert len(build_similarity_pairs(validation, official, seed=0)) == 69_607
        detail = "published pair counts reproduced on the mounted splits"
    else:
        detail += "; official splits not mounted (COUNTERGEN_SEMEVAL_DIR), counts skipped"

    report(5, "data-prep counts", detail)


# ---------------------------------------------------------------------------
# 6. Toy end-to-end generation
# ---------------------------------------------------------------------------

def test_criterion_6_template_generation(template_toy):
    assert template_toy.accuracy_with_codes >= 0.9
    assert template_toy.accuracy_without_codes <= 0.3
    assert template_toy.ppl_with_codes <= template_toy.ppl_baseline
    assert template_toy.elapsed < BUDGETS[6]
    report(
        6,
        "toy generation",
        f"accuracy {template_toy.accuracy_with_codes:.2f} with codes vs "
        f"{template_toy.accuracy_without_codes:.2f} without; "
        f"PPL {template_toy.ppl_with_codes:.3f} <= {template_toy.ppl_baseline:.3f} "
        f"[{template_toy.elapsed:.0f}s]",
    )


# ---------------------------------------------------------------------------
# 7. Toy detectors
# ---------------------------------------------------------------------------

def test_criterion_7_toy_detectors(argtype_toy, classifier_toy, embedder_toy):
    assert argtype_toy.macro_f1 >= 0.9 and argtype_toy.steps <= 300
    assert classifier_toy.macro_f1 >= 0.9 and classifier_toy.steps <= 300
    assert embedder_toy.within_l1_cos > embedder_toy.cross_l2_cos
    assert embedder_toy.top1_recovery >= 0.9
    total = argtype_toy.elapsed + classifier_toy.elapsed + embedder_toy.elapsed
    assert total < BUDGETS[7]
    report(
        7,
        "toy detectors",
        f"argtype F1 {argtype_toy.macro_f1:.2f}, values F1 {classifier_toy.macro_f1:.2f}, "
        f"similarity recovery {embedder_toy.top1_recovery:.2f} [{total:.0f}s]",
    )


# ---------------------------------------------------------------------------
# 8. Grid integrity
# ---------------------------------------------------------------------------

def test_criterion_8_grid_integrity(grid_toy):
    assert len(grid_toy.reports) == 16
    assert all(r.status == "ok" for r in grid_toy.reports)
    assert len({r.sample_count for r in grid_toy.reports}) == 1
    full = {r.variant: r for r in grid_toy.reports}
    for rerun in grid_toy.rerun_reports:
        assert rerun.bleu == full[rerun.variant].bleu
        assert rerun.rouge_l == full[rerun.variant].rouge_l
        assert abs(rerun.perplexity - full[rerun.variant].perplexity) <= 1e-6
    baseline = full["baseline"]
    above = [
        r.variant
        for r in grid_toy.reports
        if r.variant != "baseline" and r.perplexity > baseline.perplexity
    ]
    assert not above, f"rows above baseline PPL: {above}"
    report(
        8,
        "grid integrity",
        f"16 rows, restricted rerun bit-exact, all code rows at or below "
        f"baseline PPL {baseline.perplexity:.3f} [{grid_toy.elapsed:.0f}s]",
    )

"""Value detection models: aggregation rules, ensemble, toy trainings."""

from __future__ import annotations

import itertools
import random

import numpy as np
import pytest
import torch

from countergen.errors import (
    ConfigError,
    DimensionError,
    NumericError,
    SchemaError,
    StateError,
)
from countergen.training import EarlyStopper, TrainingConfig, run_training
from countergen.value_detector import (
    EmbeddingSpace,
    ValuePrediction,
    aggregate_descriptor_probabilities,
    ensemble_predict,
    load_embedding_space,
    majority_vote,
    predict_similarity,
    predict_similarity_from_embedding,
    save_embedding_space,
)

LABELS = ("v1", "v2", "v3", "v4", "v5", "v6")


def prediction(decisions, probs=None, rule="threshold"):
    if probs is None:
        probs = [0.9 if d else 0.1 for d in decisions]
    return ValuePrediction(
        labels=LABELS[: len(decisions)],
        probabilities=tuple(probs),
        decisions=tuple(decisions),
        rule=rule,
    )


# -- ValuePrediction invariants ------------------------------------------------

def test_threshold_rule_consistency_enforced():
    with pytest.raises(SchemaError):
        ValuePrediction(("a",), (0.9,), (0,), rule="threshold")


def test_probabilities_must_be_in_unit_interval():
    with pytest.raises(NumericError):
        ValuePrediction(("a",), (1.5,), (1,), rule="argmax")


def test_prediction_record_shape():
    pred = prediction([1, 0, 0, 0, 0, 0])
    record = pred.to_record("some text")
    assert record["text"] == "some text"
    assert record["l2"]["v1"] == {"prob": 0.9, "decision": 1}


# -- entailment aggregation -------------------------------------------------------

def test_all_probabilities_below_threshold_give_all_zero():
    probs = {f"d{i}": 0.4 for i in range(6)}
    parents = {f"d{i}": LABELS[i % 3] for i in range(6)}
    pred = aggregate_descriptor_probabilities(probs, parents, LABELS[:3])
    assert pred.decisions == (0, 0, 0)


def test_single_descriptor_at_09_fires_only_its_l2():
    probs = {"d0": 0.9, "d1": 0.2, "d2": 0.2}
    parents = {"d0": "v2", "d1": "v1", "d2": "v3"}
    pred = aggregate_descriptor_probabilities(probs, parents, LABELS[:3])
    assert pred.decisions == (0, 1, 0)
    assert pred.probability("v2") == pytest.approx(0.9)


def test_aggregation_matches_bruteforce_max_oracle():
    rng = random.Random(31)
    for _ in range(100):
        descriptors = [f"d{i}" for i in range(12)]
        parents = {d: rng.choice(LABELS) for d in descriptors}
        probs = {d: rng.random() for d in descriptors}
        pred = aggregate_descriptor_probabilities(probs, parents, LABELS)
        # oracle: explicit max over children, decision at 0.5
        for i, label in enumerate(LABELS):
            best = 0.0
            for d in descriptors:
                if parents[d] == label and probs[d] > best:
                    best = probs[d]
            assert pred.probabilities[i] == pytest.approx(best)
            assert pred.decisions[i] == (1 if best >= 0.5 else 0)


# -- majority ensemble ---------------------------------------------------------------

def test_majority_examples():
    assert majority_vote([[1], [1], [0]], quorum=2) == [1]
    assert majority_vote([[1], [0], [0]], quorum=2) == [0]
    assert majority_vote([[0], [0], [0]], quorum=2) == [0]


def test_ensemble_matches_exhaustive_vote_oracle():
    # all 2^3 vote patterns per class, across 6 classes at once
    patterns = list(itertools.product([0, 1], repeat=3))
    for votes in itertools.product(patterns, repeat=2):  # vary two classes jointly
        members = []
        for m in range(3):
            decisions = [votes[0][m], votes[1][m], 0, 0, 0, 0]
            members.append(lambda _t, d=tuple(decisions): prediction(d, rule="majority"))
        out = ensemble_predict("text", members, labels=LABELS)
        for cls_index in range(2):
            expected = 1 if sum(votes[cls_index][m] for m in range(3)) >= 2 else 0
            assert out.decisions[cls_index] == expected


def test_ensemble_monotone_in_member_votes():
    rng = random.Random(5)
    for _ in range(50):
        base = [[rng.randint(0, 1) for _ in range(6)] for _ in range(3)]
        flipped = [list(row) for row in base]
        m, c = rng.randrange(3), rng.randrange(6)
        flipped[m][c] = 1  # flip one member vote 0 -> 1 (or keep 1)
        a = majority_vote(base, quorum=2)
        b = majority_vote(flipped, quorum=2)
        assert all(y >= x for x, y in zip(a, b))


def test_ensemble_requires_three_members():
    with pytest.raises(ConfigError):
        ensemble_predict("t", [lambda t: prediction([0] * 6)] * 2)


def test_ensemble_rejects_mismatched_label_sets():
    members = [
        lambda t: prediction([0] * 6),
        lambda t: prediction([0] * 6),
        lambda t: ValuePrediction(("other",), (0.0,), (0,)),
    ]
    with pytest.raises(DimensionError):
        ensemble_predict("t", members)


def test_ensemble_mean_probability():
    members = [
        lambda t: prediction([1, 0], [0.9, 0.3], rule="argmax"),
        lambda t: prediction([1, 0], [0.6, 0.0], rule="argmax"),
        lambda t: prediction([0, 0], [0.0, 0.3], rule="argmax"),
    ]
    out = ensemble_predict("t", members, labels=LABELS[:2])
    assert out.decisions == (1, 0)
    assert out.probabilities[0] == pytest.approx(0.5)
    assert out.probabilities[1] == pytest.approx(0.2)


# -- similarity prediction -------------------------------------------------------------

def unit_space():
    centroids = np.eye(4)
    return EmbeddingSpace(
        descriptor_order=("da", "db", "dc", "dd"),
        descriptor_l2=("L_a", "L_a", "L_b", "L_c"),
        l2_categories=("L_a", "L_b", "L_c"),
        centroids=centroids,
    )


def test_embedding_equal_to_centroid_predicts_its_l2():
    space = unit_space()
    pred = predict_similarity_from_embedding(np.array([0.0, 0.0, 1.0, 0.0]), space)
    assert pred.positive_labels == ("L_b",)
    assert pred.probability("L_b") == pytest.approx(1.0)  # cosine 1 -> (1+1)/2


def test_argmax_scale_invariance():
    space = unit_space()
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.normal(size=4)
        if np.linalg.norm(v) < 1e-6:
            continue
        a = predict_similarity_from_embedding(v, space)
        b = predict_similarity_from_embedding(123.4 * v, space)
        assert a.positive_labels == b.positive_labels


def test_single_positive_decision_always():
    space = unit_space()
    rng = np.random.default_rng(9)
    for _ in range(50):
        v = rng.normal(size=4)
        pred = predict_similarity_from_embedding(v, space)
        assert sum(pred.decisions) == 1


def test_zero_embedding_rejected():
    with pytest.raises(NumericError):
        predict_similarity_from_embedding(np.zeros(4), unit_space())


def test_untrained_space_rejected():
    space = unit_space()  # no embedder attached
    with pytest.raises(StateError):
        predict_similarity("text", space)


def test_centroids_are_write_protected():
    space = unit_space()
    with pytest.raises(ValueError):
        space.centroids[0, 0] = 5.0


# -- early stopping -----------------------------------------------------------------

def test_early_stop_after_patience_non_improving_epochs():
    stopper = EarlyStopper(patience=5)
    assert not stopper.update(1.0)
    stops = [stopper.update(1.0) for _ in range(5)]
    assert stops == [False, False, False, False, True]


def test_improvement_resets_the_counter():
    stopper = EarlyStopper(patience=2)
    stopper.update(1.0)
    stopper.update(1.1)
    assert not stopper.update(0.9)
    assert not stopper.update(1.0)
    assert stopper.update(1.0)


def test_run_training_stops_at_patience(monkeypatch):
    # a model whose validation loss can never improve
    model = torch.nn.Linear(2, 1)
    items = [0.0] * 8

    def batch_loss(m, batch):
        return (m.weight * 0).sum() + 1.0  # constant loss, still differentiable

    config = TrainingConfig(
        learning_rate=1e-3, batch_size=4, max_epochs=50, patience=5, seed=0
    )
    history = run_training(model, items, items, batch_loss, config)
    # epoch 1 improves from +inf; then 5 non-improving epochs
    assert history.stopped_epoch == 6


# -- toy trainings (session fixtures; also consumed by the acceptance suite) -----------

def test_descriptor_embedder_separates_l1_from_l2(embedder_toy):
    assert embedder_toy.within_l1_cos > embedder_toy.cross_l2_cos


def test_descriptor_embedder_is_deterministic():
    from countergen.taxonomy import sample_quadruples, train_validation_split
    from countergen.toydata import make_toy_taxonomy
    from countergen.value_detector import train_descriptor_embedder
    from countergen.encoders import EncoderSpec

    taxonomy = make_toy_taxonomy(l2_count=2, l1_per_l2=2, descriptors_per_l1=2)
    quadruples = sample_quadruples(taxonomy, total=40, seed=2)
    train, val = train_validation_split(quadruples, validation_fraction=0.1, seed=2)
    spec = EncoderSpec(d_model=32, max_len=32)
    config = TrainingConfig(
        learning_rate=1e-3, batch_size=8, max_epochs=3, patience=3, seed=77
    )
    torch.manual_seed(1)  # perturb global state; training must reseed itself
    space_a, _ = train_descriptor_embedder(train, val, taxonomy, spec, config)
    torch.manual_seed(2)
    space_b, _ = train_descriptor_embedder(train, val, taxonomy, spec, config)
    assert np.array_equal(space_a.centroids, space_b.centroids)


def test_argument_embedder_recovers_descriptors(embedder_toy):
    assert embedder_toy.top1_recovery >= 0.9


def test_centroids_frozen_across_step2(embedder_toy):
    assert np.array_equal(
        embedder_toy.space_step1.centroids, embedder_toy.space_step2.centroids
    )


def test_embedding_space_round_trip(tmp_path, embedder_toy):
    from countergen.toydata import make_toy_taxonomy

    taxonomy = make_toy_taxonomy(l2_count=2, l1_per_l2=2, descriptors_per_l1=2)
    save_embedding_space(tmp_path / "space", embedder_toy.space_step2, taxonomy)
    loaded = load_embedding_space(tmp_path / "space")
    assert np.array_equal(loaded.centroids, embedder_toy.space_step2.centroids)
    for descriptor in taxonomy.descriptors[:4]:
        a = predict_similarity(descriptor, embedder_toy.space_step2)
        b = predict_similarity(descriptor, loaded)
        assert a.positive_labels == b.positive_labels


def test_classification_toy_macro_f1(classifier_toy):
    assert classifier_toy.macro_f1 >= 0.9
    assert classifier_toy.steps <= 300


def test_classification_checkpoint_round_trip(tmp_path, classifier_toy, toy_taxonomy):
    import json

    from countergen.value_detector import (
        load_classification_model,
        save_classification_model,
    )

    save_classification_model(tmp_path / "clf", classifier_toy.model)
    metadata = json.loads((tmp_path / "clf" / "metadata.json").read_text())
    assert metadata["model_type"] == "value_classification"
    assert metadata["taxonomy_hash"] == toy_taxonomy.content_hash()
    assert metadata["threshold"] == 0.5
    assert "training_config" in metadata
    loaded = load_classification_model(tmp_path / "clf")
    for text in ("curiositypractice at school", "plain filler words"):
        a = classifier_toy.model.predict(text)
        b = loaded.predict(text)
        assert a.decisions == b.decisions
        assert a.probabilities == pytest.approx(b.probabilities)


def test_prediction_jsonl_interface(tmp_path):
    import json

    from countergen.value_detector import write_predictions

    pred = prediction([1, 0, 0, 0, 0, 0])
    path = tmp_path / "preds.jsonl"
    write_predictions(path, [("some text", pred)])
    record = json.loads(path.read_text().strip())
    assert record["text"] == "some text"
    assert record["l2"]["v1"] == {"prob": 0.9, "decision": 1}
    assert set(record["l2"]) == set(LABELS)


def test_classification_untrained_predict_rejected(toy_taxonomy):
    from countergen.value_detector import ValueClassificationModel

    model = ValueClassificationModel(toy_taxonomy)
    with pytest.raises(StateError):
        model.predict("anything")


def test_entailment_prediction_aggregates_over_trained_model(toy_taxonomy):
    # few-step training only: checks the plumbing end to end, not quality
    from countergen.encoders import EncoderSpec, Vocabulary
    from countergen.taxonomy import build_entailment_pairs
    from countergen.toydata import make_toy_value_arguments
    from countergen.value_detector import (
        EntailmentValueModel,
        predict_entailment,
        train_entailment_model,
    )

    arguments = make_toy_value_arguments(toy_taxonomy, 24, seed=8)
    pairs = build_entailment_pairs(arguments, toy_taxonomy, seed=8)
    vocab = Vocabulary.build(
        [a.text for a in arguments] + list(toy_taxonomy.descriptors)
    )
    model = EntailmentValueModel(toy_taxonomy, EncoderSpec(d_model=32, max_len=48), vocab)
    with pytest.raises(StateError):
        predict_entailment("x", model)
    config = TrainingConfig(
        learning_rate=1e-3, batch_size=16, max_epochs=1, patience=1, max_steps=5, seed=1
    )
    train_entailment_model(model, pairs[:40], pairs[40:60], config)
    pred = predict_entailment(arguments[0].text, model)
    assert pred.labels == toy_taxonomy.l2_categories
    assert all(0.0 <= p <= 1.0 for p in pred.probabilities)

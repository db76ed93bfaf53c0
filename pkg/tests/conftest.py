"""Shared fixtures.

The expensive planted-signal training runs are session-scoped: they execute
once and both the module tests and the acceptance suite assert against the
same cached results. Every fixture records its wall-clock runtime so the
acceptance suite can check its budgets.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np
import pytest

from countergen.argtype_detector import (
    ARGTYPE_TRAINING_CLASSES,
    ArgTypeVariant,
    train_argtype_model,
)
from countergen.encoders import EncoderSpec, Vocabulary
from countergen.evaluation import macro_f1, parse_variant_name, run_feature_grid
from countergen.generator import (
    GenerationConfig,
    Seq2SeqSpec,
    annotated_examples,
    generate,
    train_generator,
)
from countergen.taxonomy import (
    LabeledArgument,
    build_similarity_pairs,
    sample_quadruples,
    train_validation_split,
)
from countergen.toydata import (
    make_multifamily_corpus,
    make_template_corpus,
    make_toy_argtype_pairs,
    make_toy_taxonomy,
    make_toy_value_arguments,
    template_of_response,
)
from countergen.training import TrainingConfig
from countergen.value_detector import (
    ValueClassificationModel,
    predict_similarity,
    train_argument_embedder,
    train_descriptor_embedder,
    train_value_classifier,
)


@pytest.fixture(scope="session")
def toy_taxonomy():
    return make_toy_taxonomy()


@dataclass
class EmbedderRun:
    space_step1: object
    space_step2: object
    within_l1_cos: float
    cross_l2_cos: float
    top1_recovery: float
    history_step1: object
    elapsed: float


@pytest.fixture(scope="session")
def embedder_toy() -> EmbedderRun:
    """Two-step similarity training on the 2-L2 / 4-L1 / 8-descriptor taxonomy."""
    start = time.monotonic()
    taxonomy = make_toy_taxonomy(l2_count=2, l1_per_l2=2, descriptors_per_l1=2, l3_count=2)
    quadruples = sample_quadruples(taxonomy, total=120, seed=4)
    q_train, q_val = train_validation_split(quadruples, validation_fraction=0.1, seed=4)
    spec = EncoderSpec(d_model=48, nhead=4, num_layers=2, dim_feedforward=96, max_len=32)
    config = TrainingConfig(
        learning_rate=1e-3, batch_size=16, max_epochs=30, patience=30, max_steps=200, seed=9
    )
    space1, history1 = train_descriptor_embedder(q_train, q_val, taxonomy, spec, config)

    centroids = np.asarray(space1.centroids)
    l1 = [taxonomy.l1_of(d) for d in taxonomy.descriptors]
    l2 = [taxonomy.l2_of(d) for d in taxonomy.descriptors]
    n = len(taxonomy.descriptors)
    pairs = list(itertools.combinations(range(n), 2))
    within = [float(centroids[i] @ centroids[j]) for i, j in pairs if l1[i] == l1[j]]
    cross = [float(centroids[i] @ centroids[j]) for i, j in pairs if l2[i] != l2[j]]

    # Step 2 on arguments that repeat descriptor text verbatim.
    arguments = [
        LabeledArgument(text=d, l2_labels=(taxonomy.l2_of(d),))
        for d in taxonomy.descriptors
    ] * 12
    sim_pairs = build_similarity_pairs(arguments, taxonomy, seed=6)
    s_train, s_val = train_validation_split(sim_pairs, validation_fraction=0.1, seed=6)
    config2 = TrainingConfig(
        learning_rate=1e-3, batch_size=16, max_epochs=30, patience=30, max_steps=250, seed=10
    )
    space2, _ = train_argument_embedder(s_train, s_val, space1, spec, config2)
    hits = sum(
        predict_similarity(d, space2).positive_labels[0] == taxonomy.l2_of(d)
        for d in taxonomy.descriptors
    )
    return EmbedderRun(
        space_step1=space1,
        space_step2=space2,
        within_l1_cos=sum(within) / len(within),
        cross_l2_cos=sum(cross) / len(cross),
        top1_recovery=hits / len(taxonomy.descriptors),
        history_step1=history1,
        elapsed=time.monotonic() - start,
    )


@dataclass
class ClassifierToyRun:
    model: object
    macro_f1: float
    steps: int
    elapsed: float


@pytest.fixture(scope="session")
def classifier_toy(toy_taxonomy) -> ClassifierToyRun:
    """Planted-keyword multi-level value classifier."""
    start = time.monotonic()
    train_args = make_toy_value_arguments(toy_taxonomy, 240, seed=1)
    val_args = make_toy_value_arguments(toy_taxonomy, 60, seed=2)
    vocab = Vocabulary.build(
        [a.text for a in train_args + val_args] + list(toy_taxonomy.descriptors)
    )
    model = ValueClassificationModel(
        toy_taxonomy, EncoderSpec(d_model=48, max_len=32), vocab
    )
    config = TrainingConfig(
        learning_rate=1e-3, batch_size=16, max_epochs=30, patience=30, max_steps=300, seed=3
    )
    history = train_value_classifier(model, train_args, val_args, config)
    true_rows, pred_rows = [], []
    for arg in val_args:
        pred = model.predict(arg.text)
        true_rows.append([int(l in arg.l2_labels) for l in toy_taxonomy.l2_categories])
        pred_rows.append(list(pred.decisions))
    return ClassifierToyRun(
        model=model,
        macro_f1=macro_f1(true_rows, pred_rows),
        steps=history.steps,
        elapsed=time.monotonic() - start,
    )


@dataclass
class ArgTypeToyRun:
    model: object
    macro_f1: float
    steps: int
    elapsed: float


@pytest.fixture(scope="session")
def argtype_toy() -> ArgTypeToyRun:
    """Planted-marker speech-act detector."""
    start = time.monotonic()
    train_pairs = make_toy_argtype_pairs(240, seed=1)
    val_pairs = make_toy_argtype_pairs(60, seed=2)
    variant = ArgTypeVariant(
        "plain-a", masked=False, encoder_spec=EncoderSpec(d_model=48, max_len=48)
    )
    config = TrainingConfig(
        learning_rate=1e-3, batch_size=16, max_epochs=30, patience=30, max_steps=300, seed=5
    )
    model, history = train_argtype_model(train_pairs, val_pairs, variant, config)
    true_rows, pred_rows = [], []
    for pair in val_pairs:
        label = model.predict(pair.hate, pair.counter, pair.topic)
        true_rows.append([int(c in pair.labels) for c in ARGTYPE_TRAINING_CLASSES])
        pred_rows.append(list(label.decisions))
    return ArgTypeToyRun(
        model=model,
        macro_f1=macro_f1(true_rows, pred_rows),
        steps=history.steps,
        elapsed=time.monotonic() - start,
    )


@dataclass
class TemplateRun:
    checkpoint: object
    baseline_checkpoint: object
    history: object
    baseline_history: object
    val_examples: list
    accuracy_with_codes: float
    accuracy_without_codes: float
    ppl_with_codes: float
    ppl_baseline: float
    elapsed: float


TEMPLATE_SPEC = Seq2SeqSpec(d_model=64, nhead=4, encoder_layers=2, decoder_layers=2,
                            dim_feedforward=128, max_len=64)
TEMPLATE_TRAINING = TrainingConfig(
    learning_rate=3e-3, batch_size=16, max_epochs=8, patience=8, seed=11
)


@pytest.fixture(scope="session")
def template_toy() -> TemplateRun:
    """Code-selects-template generation task with and without codes."""
    from countergen.evaluation import perplexity

    start = time.monotonic()
    corpus = make_template_corpus(n_turns=200, seed=3)
    examples = annotated_examples(corpus)
    train, val = train_validation_split(examples, validation_fraction=0.2, seed=5)

    coded_config = GenerationConfig(
        active_families=("argType",), beam_width=5, max_target_len=16, max_source_len=64
    )
    coded_ck, coded_hist = train_generator(
        train, val, coded_config, TEMPLATE_SPEC, TEMPLATE_TRAINING
    )
    hits = 0
    for ex in val:
        result = generate(
            ex.example.context,
            ex.example.query,
            ex.response_features,
            coded_ck,
            query_features=ex.query_features,
        )
        hits += template_of_response(result.response) == next(iter(ex.response_features))

    base_config = GenerationConfig(
        active_families=(), beam_width=5, max_target_len=16, max_source_len=64
    )
    base_ck, base_hist = train_generator(
        train, val, base_config, TEMPLATE_SPEC, TEMPLATE_TRAINING
    )
    base_hits = 0
    for ex in val:
        result = generate(ex.example.context, ex.example.query, frozenset(), base_ck)
        base_hits += (
            template_of_response(result.response) == next(iter(ex.response_features))
        )

    return TemplateRun(
        checkpoint=coded_ck,
        baseline_checkpoint=base_ck,
        history=coded_hist,
        baseline_history=base_hist,
        val_examples=val,
        accuracy_with_codes=hits / len(val),
        accuracy_without_codes=base_hits / len(val),
        ppl_with_codes=perplexity(coded_ck, val),
        ppl_baseline=perplexity(base_ck, val),
        elapsed=time.monotonic() - start,
    )


@dataclass
class GridRun:
    reports: list
    generations: dict
    rerun_reports: list
    elapsed: float


GRID_GEN_CONFIG = GenerationConfig(beam_width=3, max_target_len=12, max_source_len=64)
GRID_SPEC = Seq2SeqSpec(d_model=48, nhead=4, encoder_layers=2, decoder_layers=2,
                        dim_feedforward=96, max_len=64)
GRID_TRAINING = TrainingConfig(
    learning_rate=3e-3, batch_size=24, max_epochs=5, patience=5, seed=17
)


@pytest.fixture(scope="session")
def grid_toy() -> GridRun:
    """Full 16-row grid over the four-family slot corpus plus a restricted rerun."""
    start = time.monotonic()
    corpus = make_multifamily_corpus(n_turns=240, seed=21)
    examples = annotated_examples(corpus)
    reports, generations = run_feature_grid(
        examples,
        gen_config=GRID_GEN_CONFIG,
        seq2seq_spec=GRID_SPEC,
        training_config=GRID_TRAINING,
        validation_fraction=0.2,
        split_seed=17,
    )
    rerun_reports, _ = run_feature_grid(
        examples,
        subsets=[parse_variant_name("baseline"), parse_variant_name("argSch+big5")],
        gen_config=GRID_GEN_CONFIG,
        seq2seq_spec=GRID_SPEC,
        training_config=GRID_TRAINING,
        validation_fraction=0.2,
        split_seed=17,
    )
    return GridRun(
        reports=reports,
        generations=generations,
        rerun_reports=rerun_reports,
        elapsed=time.monotonic() - start,
    )

"""Train the three toy value detectors and combine them by majority vote.

Planted-keyword data keeps this runnable in about a minute on a CPU while
exercising the real training paths: the multi-level classifier, the
entailment scorer, and the two-step metric-learning similarity model.
"""

from countergen.encoders import EncoderSpec, Vocabulary
from countergen.evaluation import macro_f1
from countergen.taxonomy import (
    build_entailment_pairs,
    build_similarity_pairs,
    sample_quadruples,
    train_validation_split,
)
from countergen.toydata import make_toy_taxonomy, make_toy_value_arguments
from countergen.training import TrainingConfig
from countergen.value_detector import (
    EntailmentValueModel,
    ValueClassificationModel,
    ensemble_predict,
    predict_entailment,
    predict_similarity,
    train_argument_embedder,
    train_descriptor_embedder,
    train_entailment_model,
    train_value_classifier,
)

taxonomy = make_toy_taxonomy()
train_args = make_toy_value_arguments(taxonomy, 200, seed=1)
val_args = make_toy_value_arguments(taxonomy, 50, seed=2)
vocab = Vocabulary.build([a.text for a in train_args + val_args] + list(taxonomy.descriptors))
spec = EncoderSpec(d_model=48, max_len=48)
fast = TrainingConfig(learning_rate=1e-3, batch_size=16, max_epochs=20, patience=20,
                      max_steps=300, seed=7)

print("1/3 classification model (multi-level heads, weighted BCE 0.23/0.33/0.44)")
classifier = ValueClassificationModel(taxonomy, spec, vocab)
train_value_classifier(classifier, train_args, val_args, fast)

print("2/3 entailment model (argument x descriptor pairs)")
ent_train = build_entailment_pairs(train_args, taxonomy, seed=3)
ent_val = build_entailment_pairs(val_args, taxonomy, seed=4)
entailment = EntailmentValueModel(taxonomy, spec, vocab)
train_entailment_model(entailment, ent_train, ent_val, fast)

print("3/3 similarity model (quadruple loss, frozen centroids, argument embedder)")
quadruples = sample_quadruples(taxonomy, total=300, seed=5)
q_train, q_val = train_validation_split(quadruples, validation_fraction=0.1, seed=5)
space, _ = train_descriptor_embedder(q_train, q_val, taxonomy, spec, fast)
sim_train = build_similarity_pairs(train_args, taxonomy, seed=6)
sim_val = build_similarity_pairs(val_args, taxonomy, seed=7)
space, _ = train_argument_embedder(sim_train, sim_val, space, spec, fast)

labels = taxonomy.l2_categories
members = [
    classifier,
    lambda text: predict_entailment(text, entailment, labels=labels),
    lambda text: predict_similarity(text, space, labels=labels),
]

true_rows, pred_rows = [], []
for arg in val_args:
    combined = ensemble_predict(arg.text, members, labels=labels)
    true_rows.append([int(l in arg.l2_labels) for l in labels])
    pred_rows.append(list(combined.decisions))
print(f"\nensemble macro-F1 on held-out toy arguments: {macro_f1(true_rows, pred_rows):.3f}")

sample = val_args[0]
print(f"\nsample argument: {sample.text!r} (gold {sample.l2_labels})")
print("ensemble says:", ensemble_predict(sample.text, members, labels=labels).positive_labels)

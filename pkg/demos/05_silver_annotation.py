"""Annotate a corpus with all four feature families and report distributions.

Ports are pluggable label sources; here the personality and scheme ports are
stubs and the speech-act port is a freshly trained toy detector, which is
exactly how an external classifier would be wired in production.
"""

from countergen.annotator import (
    ClassifierPort,
    annotate_corpus,
    feature_distribution_report,
    stub_port,
)
from countergen.argtype_detector import ArgTypeVariant, train_argtype_model
from countergen.corpus import load_dialogue_corpus
from countergen.encoders import EncoderSpec
from countergen.features import FAMILY_ARGSCH, FAMILY_ARGTYPE, FAMILY_BIG5, FAMILY_HUMVAL, ARGTYPE_CODES
from countergen.toydata import make_toy_argtype_pairs, toy_corpus_path
from countergen.training import TrainingConfig

corpus = load_dialogue_corpus(toy_corpus_path())

print("training a toy speech-act detector for the argtype port...")
pairs = make_toy_argtype_pairs(160, seed=0)
model, _ = train_argtype_model(
    pairs[:140], pairs[140:],
    ArgTypeVariant("plain", masked=False, encoder_spec=EncoderSpec(d_model=48, max_len=48)),
    TrainingConfig(learning_rate=1e-3, batch_size=16, max_epochs=15, patience=15,
                   max_steps=250, seed=1),
)

def argtype_predict(hate: str, counter: str) -> set[str]:
    label = model.predict(hate, counter)
    return set(label.positive_classes()) & set(ARGTYPE_CODES)  # humor excluded

annotated = annotate_corpus(
    corpus,
    stub_port(FAMILY_BIG5, {"agreeableness"}),
    stub_port(FAMILY_HUMVAL, {"universalism_concern"}),
    stub_port(FAMILY_ARGSCH, {"Rule or Principle"}),  # raw label, merged in the pipeline
    ClassifierPort(name="toy-argtype", family=FAMILY_ARGTYPE, predict=argtype_predict),
)

turn = annotated.dialogues[0].turns[0]
print(f"\nhate features:    {sorted(turn.hate_features)}")
print(f"counter features: {sorted(turn.counter_features)}")

print("\nper-code distribution (non-zero rows):")
for row in feature_distribution_report(annotated):
    if row.count:
        print(f"  {row.family:<8s} {row.code:<32s} {row.side:<8s} "
              f"{row.count:3d}  {row.proportion:.2f}")

"""Train the control-code generator on the template corpus and steer it.

One speech-act code fully determines the response template, so after a
minute of CPU training the generator reproduces whichever template the
requested code selects. Codes are placed by delta: desired codes absent
from the query seed the decoder.
"""

from countergen.generator import (
    GenerationConfig,
    Seq2SeqSpec,
    annotated_examples,
    feature_delta,
    generate,
    train_generator,
)
from countergen.taxonomy import train_validation_split
from countergen.toydata import RESPONSE_TEMPLATES, make_template_corpus
from countergen.training import TrainingConfig

placement = feature_delta({"openness", "facts"}, {"facts", "rule_or_principle"})
print("delta placement example:")
print(f"  query-only features -> encoder: {sorted(placement.encoder_codes)}")
print(f"  response-only features -> decoder: {sorted(placement.decoder_codes)}")

corpus = make_template_corpus(n_turns=200, seed=3)
train, val = train_validation_split(annotated_examples(corpus), validation_fraction=0.2, seed=5)

config = GenerationConfig(active_families=("argType",), beam_width=5,
                          max_target_len=16, max_source_len=64)
print("\ntraining the toy generator (about a minute on CPU)...")
checkpoint, history = train_generator(
    train, val, config,
    Seq2SeqSpec(d_model=64, max_len=64),
    TrainingConfig(learning_rate=3e-3, batch_size=16, max_epochs=8, patience=8, seed=11),
)
print(f"validation loss by epoch: {[f'{v:.3f}' for v in history.val_loss]}")

query = "people post angry claims online every day"
print(f"\nquery: {query!r}")
for code in RESPONSE_TEMPLATES:
    result = generate((), query, {code}, checkpoint)
    print(f"  <{code}> -> {result.response}")

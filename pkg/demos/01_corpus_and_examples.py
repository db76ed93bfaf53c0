"""Load a dialogue corpus and derive per-turn generation examples.

The corpus model is uniform across sources: multi-turn dialogues of
(hate, counter) exchanges. Single-turn pair datasets load as one-turn
dialogues. Every turn becomes one generation example whose context is all
strictly earlier turns.
"""

from countergen.corpus import build_generation_examples, load_dialogue_corpus
from countergen.toydata import toy_corpus_path

corpus = load_dialogue_corpus(toy_corpus_path())
print(f"loaded {len(corpus)} dialogues, {corpus.total_turns} turns, topics {corpus.topics}")

dialogue = corpus.dialogues[0]
print(f"\ndialogue {dialogue.dialogue_id!r} ({dialogue.topic}):")
for turn in dialogue.turns:
    print(f"  [{turn.turn_index}] hate:    {turn.hate_text}")
    print(f"      counter: {turn.counter_text}")

examples = build_generation_examples(corpus)
print(f"\n{len(examples)} generation examples (= total turns)")
for ex in examples[:3]:
    print(f"  turn {ex.turn_index}: context holds {len(ex.context)} earlier pairs")
    print(f"    query:    {ex.query}")
    print(f"    response: {ex.response}")

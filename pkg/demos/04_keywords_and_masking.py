"""Curate topic keywords, expand them lexically, and mask text.

Keywords are content-POS tokens exclusive to one topic with at most five
occurrences; expansion adds related word forms and plurals while keeping
the per-topic sets disjoint. Masking replaces whole-word matches with
#MASK# (hyphenated compounds stay intact) and is idempotent.
"""

from countergen.argtype_detector import curate_topic_keywords, expand_keywords, mask_text
from countergen.lexicon import StaticLexicalRelations
from countergen.corpus import Dialogue, DialogueCorpus, Turn

corpus = DialogueCorpus(
    (
        Dialogue("d1", "MUSLIMS", (
            Turn(0, "islam is taking over", "islam teaches peace like other faiths", "MUSLIMS"),
            Turn(1, "the quran proves it", "reading the quran in context shows otherwise", "MUSLIMS"),
        )),
        Dialogue("d2", "MIGRANTS", (
            Turn(0, "migrant families steal jobs", "migrant families fill shortages", "MIGRANTS"),
            Turn(1, "borders are overrun", "orderly borders and refuge can coexist", "MIGRANTS"),
        )),
    )
)

keywords = curate_topic_keywords(corpus)
for topic in keywords.topics:
    print(f"{topic}: {sorted(keywords.keywords(topic))}")

expanded = expand_keywords(keywords, StaticLexicalRelations())
print("\nafter expansion:")
for topic in expanded.topics:
    print(f"{topic}: {sorted(expanded.keywords(topic))}")

text = "Islam and anti-islam voices argue; islam again."
print(f"\noriginal: {text}")
masked = mask_text(text, expanded, "MUSLIMS")
print(f"masked:   {masked}")
print(f"again:    {mask_text(masked, expanded, 'MUSLIMS')}  (idempotent)")

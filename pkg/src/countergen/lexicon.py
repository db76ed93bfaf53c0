"""Pluggable linguistic resources for keyword curation.

Keyword curation needs three capabilities that production deployments take
from heavyweight dependencies (a POS tagger, a lexical-relation database,
a pluralizer). Each sits behind a small port with a bundled fallback so the
pipeline runs hermetically:

* FallbackPOSTagger: closed-class word table; unknown tokens default to NOUN
  (the open class), numbers and punctuation get their own tags.
* StaticLexicalRelations: dict-backed related-forms lookup; misses return
  an empty set, which keeps the keyword unexpanded.
* pluralize(): suffix rules plus a table of common irregulars.

Adapters wrapping spacy and WordNet can be plugged in by implementing the
same protocols; they are deliberately not bundled.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping, Protocol, Sequence

# Coarse tags used by the curation filter.
TAG_ADJ = "ADJ"
TAG_ADV = "ADV"
TAG_INTJ = "INTJ"
TAG_NOUN = "NOUN"
TAG_VERB = "VERB"
TAG_AUX = "AUX"
TAG_DET = "DET"
TAG_PRON = "PRON"
TAG_ADP = "ADP"
TAG_CONJ = "CONJ"
TAG_PART = "PART"
TAG_NUM = "NUM"
TAG_PUNCT = "PUNCT"

# Tags whose tokens are eligible as topic keywords.
CONTENT_TAGS = frozenset({TAG_ADJ, TAG_ADV, TAG_INTJ, TAG_NOUN, TAG_VERB})


class POSTagger(Protocol):
    def tag(self, tokens: Sequence[str]) -> list[str]:
        """Coarse POS tag per token (context-free over token types)."""
        ...


class LexicalRelations(Protocol):
    def related_forms(self, word: str) -> set[str]:
        """Derivationally related forms and pertainyms; empty set on a miss."""
        ...


_DETERMINERS = """
a an the this that these those some any no every each either neither all both
half such what which whose another
""".split()

_PRONOUNS = """
i you he she it we they me him her us them my your his its our their mine
yours hers ours theirs myself yourself himself herself itself ourselves
yourselves themselves who whom whoever someone anyone everyone somebody
anybody everybody nobody something anything everything nothing one ones
""".split()

_ADPOSITIONS = """
about above across after against along among around at before behind below
beneath beside besides between beyond by despite down during except for from
in inside into near of off on onto out outside over past per since through
throughout till to toward towards under underneath until up upon via with
within without
""".split()

_CONJUNCTIONS = """
and but or nor so yet if because although though while whereas unless whether
than as when whenever where wherever why how that
""".split()

_AUXILIARIES = """
be am is are was were been being have has had having do does did doing will
would shall should can could may might must ought
""".split()

_PARTICLES = ["not", "n't"]

_INTERJECTIONS = "oh wow ouch hey hi hello alas hmm yeah no yes ok okay".split()


class FallbackPOSTagger:
    """Lexicon tagger: function words by table, the rest default to NOUN.

    Good enough for keyword curation, where only the closed/open class split
    matters: function words must not become topic keywords, and unseen
    content words must remain eligible.
    """

    def __init__(self) -> None:
        self.table: dict[str, str] = {}
        for words, tag in (
            (_DETERMINERS, TAG_DET),
            (_PRONOUNS, TAG_PRON),
            (_ADPOSITIONS, TAG_ADP),
            (_CONJUNCTIONS, TAG_CONJ),
            (_AUXILIARIES, TAG_AUX),
            (_PARTICLES, TAG_PART),
            (_INTERJECTIONS, TAG_INTJ),
        ):
            for word in words:
                self.table[word] = tag

    def tag_one(self, token: str) -> str:
        tok = token.lower()
        if tok in self.table:
            return self.table[tok]
        if re.fullmatch(r"[\d.,]+", tok):
            return TAG_NUM
        if not re.search(r"[a-z]", tok):
            return TAG_PUNCT
        if tok.endswith("ly") and len(tok) > 4:
            return TAG_ADV
        return TAG_NOUN

    def tag(self, tokens: Sequence[str]) -> list[str]:
        return [self.tag_one(t) for t in tokens]


# A handful of derivational relations typical of the hate-target domain; the
# production path plugs in a real lexical database through the same port.
_DEFAULT_RELATED: dict[str, tuple[str, ...]] = {
    "islam": ("islamic", "islamist"),
    "muslim": ("islam", "islamic"),
    "jew": ("jewish", "judaism"),
    "judaism": ("jewish", "judaic"),
    "migrant": ("migration", "migrate", "migratory"),
    "migration": ("migrant", "migrate"),
    "immigrant": ("immigration", "immigrate"),
    "refugee": ("refuge",),
    "gay": ("gayness",),
    "homosexual": ("homosexuality",),
    "woman": ("womanly", "womanhood"),
    "feminism": ("feminist",),
    "race": ("racial", "racism"),
    "racism": ("racist", "racial"),
    "africa": ("african",),
}


class StaticLexicalRelations:
    """Dict-backed related-forms provider (the bundled fallback)."""

    def __init__(self, table: Mapping[str, Iterable[str]] | None = None):
        source = table if table is not None else _DEFAULT_RELATED
        self.table = {k.lower(): {w.lower() for w in v} for k, v in source.items()}

    def related_forms(self, word: str) -> set[str]:
        return set(self.table.get(word.lower(), ()))


_IRREGULAR_PLURALS = {
    "man": "men",
    "woman": "women",
    "person": "people",
    "child": "children",
    "foot": "feet",
    "tooth": "teeth",
    "goose": "geese",
    "mouse": "mice",
    "life": "lives",
    "wife": "wives",
    "knife": "knives",
    "leaf": "leaves",
    "wolf": "wolves",
    "half": "halves",
    "self": "selves",
    "hero": "heroes",
    "potato": "potatoes",
    "crisis": "crises",
}


def pluralize(word: str) -> str:
    """Suffix-rule pluralizer. Words already ending in a plural-looking 's'
    (other than sibilant stems like 'bus') pass through unchanged."""
    w = word.lower()
    if w in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[w]
    if re.search(r"(ss|us|is)$", w):
        return w + "es"
    if w.endswith("s"):
        return w
    if re.search(r"(x|z|ch|sh)$", w):
        return w + "es"
    if re.search(r"[^aeiou]y$", w):
        return w[:-1] + "ies"
    return w + "s"

"""Synthetic fixtures: small taxonomies, corpora and planted-signal tasks.

Everything here is deliberately artificial. Toy corpora use innocuous
placeholder topics and text; their purpose is to exercise pipeline
mechanics (schemas, feature plumbing, learnability of planted signals) on a
CPU in seconds, not to resemble real hateful content.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

from .annotator import AnnotatedCorpus, AnnotatedDialogue, AnnotatedTurn
from .argtype_detector import ARGTYPE_TRAINING_CLASSES, LabeledPair
from .corpus import Dialogue, DialogueCorpus, Turn
from .features import (
    ARGTYPE_CODES,
    BIG5_CODES,
    HUMVAL_CODES,
    SCHEME_CODES,
)
from .taxonomy import LabeledArgument, ValueTaxonomy

_L2_POOL = (
    "curiosity",
    "kindness",
    "security",
    "tradition",
    "ambition",
    "fairness",
    "freedom",
    "loyalty",
)

_L1_VARIANTS = ("practice", "outlook", "habit", "principle")

_DESC_TEMPLATES = (
    "people who cherish {w} every single day",
    "someone guided by {w} at home",
    "acting with {w} toward strangers",
    "holding on to {w} under pressure",
    "teaching {w} to the next generation",
)

_FILLER = (
    "city group online post people work claim story news plan street market "
    "neighbors meeting school debate question reply thread forum"
).split()


def make_toy_taxonomy(
    l2_count: int = 4,
    l1_per_l2: int = 2,
    descriptors_per_l1: int = 3,
    l3_count: int = 2,
) -> ValueTaxonomy:
    """Small hierarchy whose descriptors carry a planted per-L1 keyword.

    Descriptors of one L1 share a distinctive token, which makes the metric
    learning objective winnable by a tiny encoder within a few hundred steps.
    """
    if l2_count > len(_L2_POOL):
        raise ValueError(f"at most {len(_L2_POOL)} toy L2 categories")
    if l1_per_l2 > len(_L1_VARIANTS):
        raise ValueError(f"at most {len(_L1_VARIANTS)} L1 values per L2")
    l3 = tuple(f"aspect-{k}" for k in range(l3_count))
    l2_to_l3 = {}
    l1_to_l2 = {}
    descriptor_to_l1 = {}
    for i in range(l2_count):
        l2 = _L2_POOL[i]
        l2_to_l3[l2] = l3[i % l3_count]
        for j in range(l1_per_l2):
            l1 = f"{l2} {_L1_VARIANTS[j]}"
            l1_to_l2[l1] = l2
            keyword = f"{l2}{_L1_VARIANTS[j]}"
            for k in range(descriptors_per_l1):
                descriptor_to_l1[_DESC_TEMPLATES[k % len(_DESC_TEMPLATES)].format(w=keyword)] = l1
    return ValueTaxonomy(
        l3_categories=l3,
        l2_to_l3=l2_to_l3,
        l1_to_l2=l1_to_l2,
        descriptor_to_l1=descriptor_to_l1,
    )


def l1_keyword(l1: str) -> str:
    """The planted token shared by a toy L1's descriptors."""
    l2, variant = l1.rsplit(" ", 1)
    return f"{l2}{variant}"


def make_toy_value_arguments(
    taxonomy: ValueTaxonomy,
    count: int,
    seed: int = 0,
    labels_per_argument: int = 1,
) -> list[LabeledArgument]:
    """Arguments whose text plants one L1 keyword per gold L2 label."""
    rng = random.Random(seed)
    l2s = list(taxonomy.l2_categories)
    arguments = []
    for _ in range(count):
        gold = rng.sample(l2s, min(labels_per_argument, len(l2s)))
        words = rng.choices(_FILLER, k=rng.randint(3, 6))
        for l2 in gold:
            l1 = rng.choice(list(taxonomy.l1_of_l2(l2)))
            words.insert(rng.randrange(len(words) + 1), l1_keyword(l1))
        arguments.append(LabeledArgument(text=" ".join(words), l2_labels=tuple(sorted(gold))))
    return arguments


# ---------------------------------------------------------------------------
# Dialogue corpora
# ---------------------------------------------------------------------------

def make_toy_dialogue_corpus(
    n_dialogues: int = 10,
    turns_per_dialogue: int = 3,
    topics: tuple[str, ...] = ("robots", "unicorns"),
    seed: int = 0,
) -> DialogueCorpus:
    """Random innocuous dialogues for plumbing tests."""
    rng = random.Random(seed)
    dialogues = []
    for d in range(n_dialogues):
        topic = topics[d % len(topics)]
        turns = []
        for t in range(turns_per_dialogue):
            hate = f"{topic} are {rng.choice(['bad', 'overrated', 'a problem'])} " + " ".join(
                rng.choices(_FILLER, k=rng.randint(3, 6))
            )
            counter = f"{topic} deserve fairness " + " ".join(
                rng.choices(_FILLER, k=rng.randint(3, 6))
            )
            turns.append(Turn(turn_index=t, hate_text=hate, counter_text=counter, topic=topic))
        dialogues.append(Dialogue(dialogue_id=f"toy-{d:03d}", topic=topic, turns=tuple(turns)))
    return DialogueCorpus(tuple(dialogues))


# ---------------------------------------------------------------------------
# Planted-signal detector tasks
# ---------------------------------------------------------------------------

_ARGTYPE_SIGNAL = {
    "denouncing": "rejectmark",
    "facts": "statmark",
    "humor": "jokemark",
    "hypocrisy": "doublemark",
    "positive": "welcomemark",
    "question": "askmark",
}


def make_toy_argtype_pairs(
    count: int, seed: int = 0, max_labels: int = 2
) -> list[LabeledPair]:
    """Pairs whose counter text plants one marker word per gold class."""
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        n_labels = rng.randint(1, max_labels)
        labels = tuple(sorted(rng.sample(ARGTYPE_TRAINING_CLASSES, n_labels)))
        counter_words = rng.choices(_FILLER, k=rng.randint(3, 6))
        for label in labels:
            counter_words.insert(
                rng.randrange(len(counter_words) + 1), _ARGTYPE_SIGNAL[label]
            )
        pairs.append(
            LabeledPair(
                hate=" ".join(rng.choices(_FILLER, k=rng.randint(3, 6))),
                counter=" ".join(counter_words),
                labels=labels,
                topic="robots",
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# Generator tasks
# ---------------------------------------------------------------------------

# Five speech-act codes, each bound to one fixed response template.
RESPONSE_TEMPLATES = {
    "denouncing": "that claim is harmful and we reject it completely",
    "facts": "careful studies show a very different picture entirely",
    "hypocrisy": "you blame others while doing the very same thing",
    "positive": "our town grows stronger when everyone feels welcome",
    "question": "what actual evidence do you have for that claim",
}


def make_template_corpus(
    n_turns: int = 200, seed: int = 0, topic: str = "robots"
) -> AnnotatedCorpus:
    """Annotated corpus where one control code fully determines the response.

    Each one-turn dialogue carries a random query; its counter response is
    the template of the single speech-act code in its counter features.
    Queries carry no signal about the template, so a generator can only hit
    the right template by reading the code.
    """
    rng = random.Random(seed)
    codes = list(RESPONSE_TEMPLATES)
    dialogues = []
    for i in range(n_turns):
        code = codes[i % len(codes)]
        query = " ".join(rng.choices(_FILLER, k=rng.randint(4, 8)))
        turn = Turn(
            turn_index=0,
            hate_text=query,
            counter_text=RESPONSE_TEMPLATES[code],
            topic=topic,
        )
        dialogues.append(
            AnnotatedDialogue(
                dialogue_id=f"tpl-{i:04d}",
                topic=topic,
                turns=(
                    AnnotatedTurn(
                        turn=turn,
                        hate_features=frozenset(),
                        counter_features=frozenset({code}),
                    ),
                ),
            )
        )
    rng.shuffle(dialogues)
    return AnnotatedCorpus(tuple(dialogues))


def template_of_response(response: str) -> str | None:
    """Which template a generated response matches exactly, if any."""
    for code, template in RESPONSE_TEMPLATES.items():
        if response.strip() == template:
            return code
    return None


_FAMILY_SLOT_WORDS = {
    code: f"{code.replace('_', '')}mark"
    for code in BIG5_CODES + HUMVAL_CODES + SCHEME_CODES + ARGTYPE_CODES
}


def make_multifamily_corpus(
    n_turns: int = 240, seed: int = 0, topic: str = "robots"
) -> AnnotatedCorpus:
    """Annotated corpus where each family's code selects one response word.

    The counter response is four slot words (one per family, each a
    one-to-one function of that family's sampled code) plus a fixed tail.
    Activating any family at training time therefore makes its slot
    predictable, which is what the grid's perplexity ordering checks.
    """
    rng = random.Random(seed)
    dialogues = []
    family_codes = (BIG5_CODES, HUMVAL_CODES, SCHEME_CODES, ARGTYPE_CODES)
    for i in range(n_turns):
        picked = [rng.choice(codes) for codes in family_codes]
        response = " ".join(_FAMILY_SLOT_WORDS[c] for c in picked) + " indeed"
        query = " ".join(rng.choices(_FILLER, k=rng.randint(4, 8)))
        turn = Turn(
            turn_index=0, hate_text=query, counter_text=response, topic=topic
        )
        dialogues.append(
            AnnotatedDialogue(
                dialogue_id=f"multi-{i:04d}",
                topic=topic,
                turns=(
                    AnnotatedTurn(
                        turn=turn,
                        hate_features=frozenset(),
                        counter_features=frozenset(picked),
                    ),
                ),
            )
        )
    return AnnotatedCorpus(tuple(dialogues))


# ---------------------------------------------------------------------------
# Bundled files
# ---------------------------------------------------------------------------

def bundled_path(name: str) -> Path:
    """Path of a data file shipped inside the package."""
    return Path(str(resources.files("countergen").joinpath("data", name)))


def toy_corpus_path() -> Path:
    return bundled_path("toy_corpus.jsonl")


def toy_taxonomy_path() -> Path:
    return bundled_path("toy_taxonomy.json")

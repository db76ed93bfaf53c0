"""The control-code vocabulary: 20 feature codes grouped into 4 families.

Two families describe qualities of the speaker's text (personality traits,
human values) and two describe the structure of the argument (reasoning
scheme, counter-argument speech act). Code names are stable identifiers:
they double as vocabulary tokens in the generator, so renaming one is a
breaking change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import SchemaError

# Family identifiers, in canonical order (value families first).
FAMILY_BIG5 = "big5"
FAMILY_HUMVAL = "humVal"
FAMILY_ARGSCH = "argSch"
FAMILY_ARGTYPE = "argType"

FAMILY_ORDER = (FAMILY_BIG5, FAMILY_HUMVAL, FAMILY_ARGSCH, FAMILY_ARGTYPE)

# Which families are "value" features vs "structure" features.
VALUE_FAMILIES = (FAMILY_BIG5, FAMILY_HUMVAL)
STRUCTURE_FAMILIES = (FAMILY_ARGSCH, FAMILY_ARGTYPE)

BIG5_CODES = (
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
)

# The six most frequent L2 value categories; the full 20-category hierarchy
# lives in the taxonomy module, annotation uses only these.
HUMVAL_CODES = (
    "achievement",
    "benevolence_caring",
    "security_personal",
    "security_societal",
    "self_direction_action",
    "universalism_concern",
)

SCHEME_CODES = (
    "from_consequence",
    "from_source_authority_knowledge",
    "goal_means",
    "rule_or_principle",
)

# Counter-argument speech acts retained for annotation. The argument-type
# detector is additionally trained on "humor", which is dropped here because
# of its low prevalence in annotated dialogues.
ARGTYPE_CODES = (
    "denouncing",
    "facts",
    "hypocrisy",
    "positive",
    "question",
)

DEFAULT_FAMILIES: Mapping[str, tuple[str, ...]] = {
    FAMILY_BIG5: BIG5_CODES,
    FAMILY_HUMVAL: HUMVAL_CODES,
    FAMILY_ARGSCH: SCHEME_CODES,
    FAMILY_ARGTYPE: ARGTYPE_CODES,
}


@dataclass(frozen=True)
class FeatureVocabulary:
    """Closed set of feature codes, partitioned into disjoint families.

    The default vocabulary carries the 20 production codes. Tests may build
    smaller vocabularies, but family names must come from FAMILY_ORDER so
    that canonical ordering stays defined.
    """

    families: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_FAMILIES)
    )

    def __post_init__(self) -> None:
        seen: dict[str, str] = {}
        for family, codes in self.families.items():
            if family not in FAMILY_ORDER:
                raise SchemaError(f"unknown feature family: {family!r}")
            for code in codes:
                if code in seen:
                    raise SchemaError(
                        f"code {code!r} appears in both {seen[code]!r} and {family!r}"
                    )
                seen[code] = family

    @property
    def family_names(self) -> tuple[str, ...]:
        return tuple(f for f in FAMILY_ORDER if f in self.families)

    def codes(self, family: str | None = None) -> tuple[str, ...]:
        """All codes in canonical order (family order, then declaration order)."""
        if family is not None:
            if family not in self.families:
                raise SchemaError(f"unknown feature family: {family!r}")
            return tuple(self.families[family])
        out: list[str] = []
        for fam in self.family_names:
            out.extend(self.families[fam])
        return tuple(out)

    def family_of(self, code: str) -> str:
        for family in self.family_names:
            if code in self.families[family]:
                return family
        raise SchemaError(f"unknown feature code: {code!r}")

    def __contains__(self, code: str) -> bool:
        return any(code in codes for codes in self.families.values())

    def validate_codes(self, codes: Iterable[str]) -> frozenset[str]:
        """Return the codes as a frozenset, rejecting anything outside the vocabulary."""
        out = frozenset(codes)
        unknown = [c for c in out if c not in self]
        if unknown:
            raise SchemaError(f"codes outside the feature vocabulary: {sorted(unknown)}")
        return out

    def filter_to_families(
        self, codes: Iterable[str], families: Iterable[str]
    ) -> frozenset[str]:
        """Keep only codes whose family is in `families` (validating both)."""
        active = set(families)
        unknown_fam = active.difference(self.families)
        if unknown_fam:
            raise SchemaError(f"unknown feature families: {sorted(unknown_fam)}")
        kept = [c for c in self.validate_codes(codes) if self.family_of(c) in active]
        return frozenset(kept)

    def sort_codes(self, codes: Iterable[str]) -> tuple[str, ...]:
        """Canonical deterministic order: family order, then declaration order."""
        order = {code: i for i, code in enumerate(self.codes())}
        validated = self.validate_codes(codes)
        return tuple(sorted(validated, key=order.__getitem__))

    def token(self, code: str) -> str:
        """Vocabulary-token spelling of a code as used by the generator."""
        if code not in self:
            raise SchemaError(f"unknown feature code: {code!r}")
        return f"<{code}>"

    def tokens(self, codes: Iterable[str]) -> tuple[str, ...]:
        return tuple(self.token(c) for c in self.sort_codes(codes))


def default_vocabulary() -> FeatureVocabulary:
    return FeatureVocabulary()

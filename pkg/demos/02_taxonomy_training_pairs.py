"""Build the three training sets the value detectors learn from.

From a descriptor -> L1 -> L2 -> L3 hierarchy plus L2-labeled arguments:
quadruples (metric learning), entailment pairs, and balanced similarity
pairs. The default quadruple total matches the published 702.
"""

from countergen.taxonomy import (
    build_entailment_pairs,
    build_similarity_pairs,
    load_taxonomy,
    sample_quadruples,
    train_validation_split,
)
from countergen.toydata import make_toy_value_arguments, toy_taxonomy_path

taxonomy = load_taxonomy(toy_taxonomy_path())
print(
    f"taxonomy: {len(taxonomy.l3_categories)} L3 / {len(taxonomy.l2_categories)} L2 / "
    f"{len(taxonomy.l1_values)} L1 / {len(taxonomy.descriptors)} descriptors"
)

quadruples = sample_quadruples(taxonomy, seed=0)
train, val = train_validation_split(quadruples, validation_fraction=0.1, seed=0)
print(f"\n{len(quadruples)} quadruples sampled ({len(train)} train / {len(val)} validation)")
q = quadruples[0]
print(f"  anchor:        {q.anchor!r}  (L1 {taxonomy.l1_of(q.anchor)!r})")
print(f"  positive:      {q.positive!r}  (same L1)")
print(f"  easy negative: {q.easy_negative!r}  (different L2)")
print(f"  hard negative: {q.hard_negative!r}  (same L2, different L1)")

arguments = make_toy_value_arguments(taxonomy, 50, seed=1)
entailment = build_entailment_pairs(arguments, taxonomy, seed=1)
similarity = build_similarity_pairs(arguments, taxonomy, seed=1)
print(f"\n{len(arguments)} labeled arguments ->")
print(f"  {len(entailment)} entailment pairs "
      f"({sum(p.label for p in entailment)} positive)")
print(f"  {len(similarity)} similarity pairs, balanced per argument")

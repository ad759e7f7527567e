"""
Build a tiny mechanism KB in memory and search it
=================================================

Run from the repository root after `pip install -e .`:

    python3 demos/build_and_search.py
"""

from mechkb.embed import FallbackEmbedding
from mechkb.index import build_index, search_threshold
from mechkb.normalize import DEFAULT_CONFIG, make_surface
from mechkb.schema import (
    MechanismRelation,
    Provenance,
    RelationClass,
    RelationQuery,
)

# a mechanism relation is a directed (E1, E2, class) tuple between two
# free-form spans; DIRECT marks explicit activity, INDIRECT an influence
rows = [
    ("ivermectin", "viral replication", RelationClass.DIRECT, 0.97),
    ("warm climate", "coronavirus transmission", RelationClass.INDIRECT, 0.91),
    ("microscope", "drugs", RelationClass.DIRECT, 0.95),
    ("neural network model", "drug design", RelationClass.DIRECT, 0.95),
    ("vitamin d deficiency", "disease severity", RelationClass.INDIRECT, 0.92),
]

relations = []
for i, (arg1, arg2, cls, confidence) in enumerate(rows):
    relations.append(MechanismRelation.create(
        arg1=make_surface(arg1),
        arg2=make_surface(arg2),
        relation_class=cls,
        confidence=confidence,
        provenance=Provenance(
            doc_id="demo-doc",
            sentence_index=i,
            sentence=f"... {arg1} ... {arg2} ...",
            title="demo",
            url="https://example.org/demo",
        ),
    ))

# the fallback embedder hashes character n-grams; it is deterministic and
# needs no network, which keeps this demo self-contained
provider = FallbackEmbedding(dim=256)
index = build_index(relations, provider, DEFAULT_CONFIG)
print("built index:", index.manifest["counts"])

# a two-sided query scores each relation as min(sim_e1, sim_e2): both
# sides must be close, one good side cannot carry the other
query = RelationQuery(
    e1_alternatives=("deep learning",),
    e2_alternatives=("drugs",),
    k=5,
    min_confidence=0.0,
)
print("\nquery e1='deep learning', e2='drugs':")
for result in search_threshold(query, index, provider):
    rel = result.relation
    print(f"  {result.score:.4f}  {rel.arg1.normalized!r} -> "
          f"{rel.arg2.normalized!r}  [{rel.relation_class.value}]")
# 'neural network model'/'drug design' wins: both of its sides are somewhat
# similar, while 'microscope'/'drugs' has a perfect e2 and a near-zero e1

# open-ended query: only E1 given, ranking by that side alone
query = RelationQuery(e1_alternatives=("warmer climates",), k=3,
                      min_confidence=0.0)
print("\nopen-ended e1='warmer climates':")
for result in search_threshold(query, index, provider):
    rel = result.relation
    print(f"  {result.score:.4f}  {rel.arg1.normalized!r} -> "
          f"{rel.arg2.normalized!r}")

# symmetric queries try both argument orders and keep each relation's best
query = RelationQuery(
    e1_alternatives=("coronavirus transmission",),
    e2_alternatives=("warm climate",),
    k=1,
    symmetric=True,
    min_confidence=0.0,
)
top = search_threshold(query, index, provider)[0]
print("\nsymmetric query, reversed arguments still found:")
print(f"  {top.score:.4f}  {top.relation.arg1.normalized!r} -> "
      f"{top.relation.arg2.normalized!r}")

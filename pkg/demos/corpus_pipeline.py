"""
Full pipeline: raw extraction records -> on-disk index -> search
================================================================

Run from the repository root after `pip install -e .`:

    python3 demos/corpus_pipeline.py
"""

import pathlib
import tempfile

from mechkb.embed import FallbackEmbedding
from mechkb.index import build_index, load_index, save_index, search_threshold
from mechkb.ingest import run_ingest
from mechkb.schema import RelationQuery

# the bundled corpus: 50 sentence-level extraction records with confidences,
# coreference clusters, duplicates, and a handful of malformed shapes
corpus = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus50.jsonl"

# ingest filters by extractor confidence (inclusive >= 0.90), resolves
# pronouns through coref clusters, validates spans, and deduplicates
outcome = run_ingest([corpus], threshold=0.90)
print("ingest accounting:")
for key, value in outcome.report.to_dict().items():
    print(f"  {key:28s} {value}")
for kind, relation_id, *detail in outcome.warnings[:3]:
    print(f"  warning: {kind} on relation {relation_id} {detail!r}")

# a coreferent pronoun was replaced by its cluster's longest mention, so
# the KB row reads 'ivermectin' where the sentence said 'The drug'
resolved = [r for r in outcome.relations
            if r.provenance.doc_id == "cord-0001"
            and r.provenance.sentence_index == 2]
print("\ncoref-resolved row:", resolved[0].arg1.normalized,
      "->", resolved[0].arg2.normalized)
print("  from sentence:", resolved[0].provenance.sentence)

# build the index and round-trip it through a directory on disk
provider = FallbackEmbedding(dim=256)
index = build_index(outcome.relations, provider)
with tempfile.TemporaryDirectory() as tmp:
    index_dir = pathlib.Path(tmp) / "kb"
    save_index(index, index_dir)
    files = sorted(p.name for p in index_dir.iterdir())
    print("\nindex directory:", ", ".join(files))
    reloaded = load_index(index_dir)

# search the reloaded snapshot; scores are identical to the fresh build
query = RelationQuery(
    e1_alternatives=("ivermectin",),
    e2_alternatives=("covid-19",),
    k=5,
)
print("\ntop relations for e1='ivermectin', e2='covid-19':")
for result in search_threshold(query, reloaded, provider):
    rel = result.relation
    print(f"  {result.score:.4f}  conf={rel.confidence:.2f}  "
          f"{rel.arg1.normalized!r} -> {rel.arg2.normalized!r}  "
          f"({rel.provenance.doc_id} s{rel.provenance.sentence_index})")

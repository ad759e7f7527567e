"""Shared construction helpers for the test suite."""

from __future__ import annotations

from mechkb.normalize import DEFAULT_CONFIG, NormalizationConfig, make_surface
from mechkb.schema import MechanismRelation, Provenance, RelationClass


def make_relation(
    arg1: str,
    arg2: str,
    cls: str = "DIRECT",
    confidence: float = 0.95,
    doc_id: str = "d1",
    sentence_index: int = 0,
    sentence: str | None = None,
    title: str = "",
    url: str = "",
    config: NormalizationConfig = DEFAULT_CONFIG,
) -> MechanismRelation:
    provenance = Provenance(
        doc_id=doc_id,
        sentence=sentence if sentence is not None else f"{arg1} affects {arg2}.",
        sentence_index=sentence_index,
        title=title,
        url=url,
    )
    return MechanismRelation.create(
        arg1=make_surface(arg1, config),
        arg2=make_surface(arg2, config),
        relation_class=RelationClass.from_string(cls),
        confidence=confidence,
        provenance=provenance,
    )


def oracle_rows(relations) -> list[dict]:
    """Convert package relations into the row dicts the search oracle scans."""
    return [
        {
            "rid": r.relation_id,
            "a1": r.arg1.normalized,
            "a2": r.arg2.normalized,
            "cls": r.relation_class.value,
            "conf": r.confidence,
        }
        for r in relations
    ]

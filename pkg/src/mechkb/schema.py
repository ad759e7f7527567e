"""Core domain types for the mechanism knowledge base.

Every type is an immutable value object with a dict round-trip
(``from_dict(to_dict(x)) == x``), safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ._fnv import fnv1a64
from .errors import InvalidRelation

# Field separator for the relation identity hash; never occurs in
# normalized surfaces (it is whitespace-collapsed away).
_ID_SEPARATOR = b"\x1f"


class RelationClass(enum.Enum):
    """Directed mechanism class: explicit activity vs. influence/association."""

    DIRECT = "DIRECT"
    INDIRECT = "INDIRECT"

    @classmethod
    def from_string(cls, value: str) -> "RelationClass":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown relation class: {value!r}") from None


def relation_id(
    arg1_norm: str,
    arg2_norm: str,
    relation_class: RelationClass,
    doc_id: str,
    sentence_index: int,
) -> int:
    """Deterministic 64-bit content hash identifying one relation instance.

    FNV-1a over the UTF-8 bytes of the five fields joined with byte 0x1F.
    Order-sensitive: swapping arg1 and arg2 changes the id.
    """
    if not arg1_norm or not arg2_norm or not doc_id:
        raise InvalidRelation("relation identity fields must be non-empty")
    if sentence_index < 0:
        raise InvalidRelation("sentence_index must be non-negative")
    payload = _ID_SEPARATOR.join(
        part.encode("utf-8")
        for part in (
            arg1_norm,
            arg2_norm,
            relation_class.value,
            doc_id,
            str(sentence_index),
        )
    )
    return fnv1a64(payload)


@dataclass(frozen=True)
class EntitySurface:
    """An entity span: the raw text plus its normalized form."""

    raw: str
    normalized: str
    token_count: int = field(default=-1)

    def __post_init__(self) -> None:
        if not self.normalized:
            raise InvalidRelation("normalized surface must be non-empty")
        if self.token_count < 0:
            object.__setattr__(self, "token_count", len(self.normalized.split()))

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "normalized": self.normalized,
            "token_count": self.token_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntitySurface":
        return cls(
            raw=d["raw"],
            normalized=d["normalized"],
            token_count=d.get("token_count", -1),
        )


@dataclass(frozen=True)
class Provenance:
    """Where a relation came from: document, sentence, and display metadata."""

    doc_id: str
    sentence: str
    sentence_index: int
    title: str = ""
    url: str = ""

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise InvalidRelation("doc_id must be non-empty")
        if not self.sentence:
            raise InvalidRelation("sentence must be non-empty")
        if self.sentence_index < 0:
            raise InvalidRelation("sentence_index must be non-negative")

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "sentence_index": self.sentence_index,
            "sentence": self.sentence,
            "title": self.title,
            "url": self.url,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(
            doc_id=d["doc_id"],
            sentence=d["sentence"],
            sentence_index=d["sentence_index"],
            title=d.get("title", ""),
            url=d.get("url", ""),
        )


@dataclass(frozen=True)
class MechanismRelation:
    """The KB unit: a directed (arg1, arg2, class) tuple with provenance."""

    arg1: EntitySurface
    arg2: EntitySurface
    relation_class: RelationClass
    confidence: float
    provenance: Provenance
    relation_id: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidRelation(f"confidence out of [0,1]: {self.confidence}")

    @classmethod
    def create(
        cls,
        arg1: EntitySurface,
        arg2: EntitySurface,
        relation_class: RelationClass,
        confidence: float,
        provenance: Provenance,
    ) -> "MechanismRelation":
        """Build a relation with its content hash computed from the parts."""
        rid = relation_id(
            arg1.normalized,
            arg2.normalized,
            relation_class,
            provenance.doc_id,
            provenance.sentence_index,
        )
        return cls(arg1, arg2, relation_class, confidence, provenance, rid)

    @property
    def is_self_relation(self) -> bool:
        return self.arg1.normalized == self.arg2.normalized

    def to_dict(self) -> dict:
        return {
            "relation_id": self.relation_id,
            "class": self.relation_class.value,
            "confidence": self.confidence,
            "arg1": self.arg1.to_dict(),
            "arg2": self.arg2.to_dict(),
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MechanismRelation":
        rel = cls(
            arg1=EntitySurface.from_dict(d["arg1"]),
            arg2=EntitySurface.from_dict(d["arg2"]),
            relation_class=RelationClass.from_string(d["class"]),
            confidence=d["confidence"],
            provenance=Provenance.from_dict(d["provenance"]),
            relation_id=d["relation_id"],
        )
        expected = relation_id(
            rel.arg1.normalized,
            rel.arg2.normalized,
            rel.relation_class,
            rel.provenance.doc_id,
            rel.provenance.sentence_index,
        )
        if expected != rel.relation_id:
            raise InvalidRelation(
                f"stored relation_id {rel.relation_id} does not match content hash"
            )
        return rel


@dataclass(frozen=True)
class CorefMention:
    """One mention inside a coreference cluster."""

    text: str
    sentence_index: int

    def to_dict(self) -> dict:
        return {"text": self.text, "sentence_index": self.sentence_index}

    @classmethod
    def from_dict(cls, d: dict) -> "CorefMention":
        return cls(text=d["text"], sentence_index=d["sentence_index"])


@dataclass(frozen=True)
class CorefCluster:
    """Mentions of one entity within a document, in document order."""

    mentions: tuple[CorefMention, ...]

    def __post_init__(self) -> None:
        if not self.mentions:
            raise ValueError("coref cluster must have at least one mention")

    def to_list(self) -> list:
        return [m.to_dict() for m in self.mentions]

    @classmethod
    def from_list(cls, items: list) -> "CorefCluster":
        return cls(mentions=tuple(CorefMention.from_dict(m) for m in items))


@dataclass(frozen=True)
class RecordRelation:
    """One raw extracted relation inside an ExtractionRecord."""

    arg1_raw: str
    arg2_raw: str
    relation_class: RelationClass
    confidence: float
    predicate: str | None = None

    def to_dict(self) -> dict:
        d = {
            "arg1": self.arg1_raw,
            "arg2": self.arg2_raw,
            "class": self.relation_class.value,
            "confidence": self.confidence,
        }
        if self.predicate is not None:
            d["predicate"] = self.predicate
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RecordRelation":
        for key in ("arg1", "arg2", "class", "confidence"):
            if key not in d:
                raise ValueError(f"relation missing field: {key}")
        return cls(
            arg1_raw=d["arg1"],
            arg2_raw=d["arg2"],
            relation_class=RelationClass.from_string(d["class"]),
            confidence=d["confidence"],
            predicate=d.get("predicate"),
        )


@dataclass(frozen=True)
class ExtractionRecord:
    """One upstream extractor output for one sentence of one document."""

    doc_id: str
    sentence_index: int
    sentence: str
    relations: tuple[RecordRelation, ...]
    coref_clusters: tuple[CorefCluster, ...] = ()
    title: str = ""
    url: str = ""

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "sentence_index": self.sentence_index,
            "sentence": self.sentence,
            "relations": [r.to_dict() for r in self.relations],
            "coref_clusters": [c.to_list() for c in self.coref_clusters],
            "title": self.title,
            "url": self.url,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionRecord":
        for key in ("doc_id", "sentence_index", "sentence", "relations"):
            if key not in d:
                raise ValueError(f"record missing field: {key}")
        if not isinstance(d["relations"], list):
            raise ValueError("relations must be a list")
        clusters = d.get("coref_clusters", [])
        if not isinstance(clusters, list):
            raise ValueError("coref_clusters must be a list")
        return cls(
            doc_id=d["doc_id"],
            sentence_index=d["sentence_index"],
            sentence=d["sentence"],
            relations=tuple(RecordRelation.from_dict(r) for r in d["relations"]),
            coref_clusters=tuple(CorefCluster.from_list(c) for c in clusters),
            title=d.get("title", ""),
            url=d.get("url", ""),
        )


def validate_record(record: ExtractionRecord) -> list[str]:
    """Check ExtractionRecord invariants; returns one message per violation."""
    errors: list[str] = []
    if not record.doc_id:
        errors.append("doc_id: empty")
    if not record.sentence:
        errors.append("sentence: empty")
    if not isinstance(record.sentence_index, int) or record.sentence_index < 0:
        errors.append("sentence_index: must be a non-negative integer")
    for i, rel in enumerate(record.relations):
        if not rel.arg1_raw or not rel.arg1_raw.strip():
            errors.append(f"relations[{i}].arg1: empty entity span")
        if not rel.arg2_raw or not rel.arg2_raw.strip():
            errors.append(f"relations[{i}].arg2: empty entity span")
        if not isinstance(rel.confidence, (int, float)) or not (
            0.0 <= rel.confidence <= 1.0
        ):
            errors.append(f"relations[{i}].confidence: confidence out of [0,1]")
    return errors


@dataclass(frozen=True)
class RelationQuery:
    """A search query: alternatives per side, class filter, k, symmetry."""

    e1_alternatives: tuple[str, ...]
    e2_alternatives: tuple[str, ...] = ()
    class_filter: RelationClass | None = None
    k: int = 20
    symmetric: bool = False
    min_confidence: float = 0.9

    def __post_init__(self) -> None:
        if not self.e1_alternatives:
            raise ValueError("at least one e1 alternative is required")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in [0,1]")

    @property
    def one_sided(self) -> bool:
        return not self.e2_alternatives

    def to_dict(self) -> dict:
        return {
            "e1_alternatives": list(self.e1_alternatives),
            "e2_alternatives": list(self.e2_alternatives),
            "class_filter": self.class_filter.value if self.class_filter else None,
            "k": self.k,
            "symmetric": self.symmetric,
            "min_confidence": self.min_confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationQuery":
        cf = d.get("class_filter")
        return cls(
            e1_alternatives=tuple(d["e1_alternatives"]),
            e2_alternatives=tuple(d.get("e2_alternatives", ())),
            class_filter=RelationClass.from_string(cf) if cf else None,
            k=d.get("k", 20),
            symmetric=d.get("symmetric", False),
            min_confidence=d.get("min_confidence", 0.9),
        )


@dataclass(frozen=True)
class ScoredResult:
    """A relation with its min-aggregated similarity against a query."""

    relation: MechanismRelation
    score: float
    matched_e1_alt: int
    matched_e2_alt: int | None = None

    def sort_key(self) -> tuple:
        # score descending, relation_id ascending: a total order
        return (-self.score, self.relation.relation_id)

    def to_dict(self) -> dict:
        return {
            "relation": self.relation.to_dict(),
            "score": self.score,
            "matched_e1_alt": self.matched_e1_alt,
            "matched_e2_alt": self.matched_e2_alt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredResult":
        return cls(
            relation=MechanismRelation.from_dict(d["relation"]),
            score=d["score"],
            matched_e1_alt=d["matched_e1_alt"],
            matched_e2_alt=d.get("matched_e2_alt"),
        )

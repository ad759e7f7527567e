"""Surface normalization and coreference unification.

Entity spans are standardized (NFC, lowercasing, punctuation removal,
suffix-rule lemmatization) so corpus aggregation and embedding share one
vocabulary. Normalization is idempotent: applying it to its own output is
a no-op.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

from .errors import EmptyAfterNormalization
from .schema import CorefCluster, EntitySurface, MechanismRelation


def lemmatize_token(token: str) -> str:
    """Conservative suffix-rule lemmatizer for lowercase, punctuation-free tokens.

    Rules cascade in order, each applied to the current form, so the result
    is a fixed point (required for idempotent normalization):
      1. "ies" -> "y" when longer than 4 chars
      2. "ses"/"xes"/"zes"/"ches"/"shes" -> drop "es"
      3. trailing "s" dropped when longer than 3 chars, unless ending
         in "ss"/"us"/"is"
    """
    t = token
    if len(t) > 4 and t.endswith("ies"):
        t = t[:-3] + "y"
    if t.endswith(("ses", "xes", "zes", "ches", "shes")):
        t = t[:-2]
    if len(t) > 3 and t.endswith("s") and not t.endswith(("ss", "us", "is")):
        t = t[:-1]
    return t


def _identity_lemmatizer(token: str) -> str:
    return token


LEMMATIZERS = {
    "suffix-rules": lemmatize_token,
    "identity": _identity_lemmatizer,
}


@dataclass(frozen=True)
class NormalizationConfig:
    """Normalization switches, recorded in the KB manifest so query-time
    normalization matches build-time normalization exactly."""

    lowercase: bool = True
    strip_punctuation: bool = True
    lemmatize: bool = True
    lemmatizer: str = "suffix-rules"

    def __post_init__(self) -> None:
        if self.lemmatizer not in LEMMATIZERS:
            raise ValueError(f"unknown lemmatizer strategy: {self.lemmatizer!r}")

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "lemmatize": self.lemmatize,
            "lemmatizer": self.lemmatizer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationConfig":
        return cls(
            lowercase=d["lowercase"],
            strip_punctuation=d["strip_punctuation"],
            lemmatize=d["lemmatize"],
            lemmatizer=d["lemmatizer"],
        )


DEFAULT_CONFIG = NormalizationConfig()


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_surface(raw: str, config: NormalizationConfig = DEFAULT_CONFIG) -> str:
    """Standardize an entity span: NFC, lowercase, punctuation to spaces,
    whitespace collapse, per-token lemmatization.

    Raises EmptyAfterNormalization when nothing survives (e.g. "...").
    """
    text = unicodedata.normalize("NFC", raw)
    if config.lowercase:
        # lowercasing a cased base letter can strand a combining mark in
        # decomposed form (e.g. "T"+U+0308 -> "t"+U+0308), so recompose
        text = unicodedata.normalize("NFC", text.lower())
    if config.strip_punctuation:
        text = "".join(" " if _is_punctuation(ch) else ch for ch in text)
    tokens = text.split()
    if config.lemmatize:
        lemmatizer = LEMMATIZERS[config.lemmatizer]
        tokens = [lemmatizer(t) for t in tokens]
    result = " ".join(tokens)
    if not result:
        raise EmptyAfterNormalization(f"surface is empty after normalization: {raw!r}")
    return result


def normalize_or_empty(raw: str, config: NormalizationConfig = DEFAULT_CONFIG) -> str:
    """normalize_surface, but empty results come back as "" instead of raising."""
    try:
        return normalize_surface(raw, config)
    except EmptyAfterNormalization:
        return ""


def make_surface(raw: str, config: NormalizationConfig = DEFAULT_CONFIG) -> EntitySurface:
    """Build an EntitySurface whose normalized form honors the config."""
    return EntitySurface(raw=raw, normalized=normalize_surface(raw, config))


def coref_representative(
    cluster: CorefCluster, config: NormalizationConfig = DEFAULT_CONFIG
) -> str:
    """The cluster mention with the longest normalized form.

    Length is character count of the normalized mention; ties go to the
    mention earliest in document order. Returns the raw mention text.
    """
    best_text = cluster.mentions[0].text
    best_len = len(normalize_or_empty(best_text, config))
    for mention in cluster.mentions[1:]:
        length = len(normalize_or_empty(mention.text, config))
        if length > best_len:
            best_text = mention.text
            best_len = length
    return best_text


def _mention_key(text: str) -> str:
    return text.strip().casefold()


def unify_corefs(
    relations: list[MechanismRelation],
    clusters: list[CorefCluster] | tuple[CorefCluster, ...],
    config: NormalizationConfig = DEFAULT_CONFIG,
    ambiguities: list | None = None,
) -> list[MechanismRelation]:
    """Replace relation arguments that match a non-representative cluster
    mention (case-insensitive, trimmed) with the cluster representative.

    Relations and clusters must belong to one document. Arguments matching
    mentions in two or more clusters are left unchanged and reported on the
    optional ambiguities list as (relation_id, "arg1"|"arg2", raw_text).
    Relation count and classes are preserved; replaced arguments get their
    relation_id recomputed.
    """
    if not clusters:
        return list(relations)

    # mention key -> set of cluster indices containing it
    membership: dict[str, set[int]] = {}
    representatives: list[str] = []
    rep_keys: list[str] = []
    for ci, cluster in enumerate(clusters):
        rep = coref_representative(cluster, config)
        representatives.append(rep)
        rep_keys.append(_mention_key(rep))
        for mention in cluster.mentions:
            membership.setdefault(_mention_key(mention.text), set()).add(ci)

    def resolve(raw: str, rid: int, position: str) -> str | None:
        key = _mention_key(raw)
        owners = membership.get(key)
        if not owners:
            return None
        if len(owners) > 1:
            if ambiguities is not None:
                ambiguities.append((rid, position, raw))
            return None
        ci = next(iter(owners))
        if key == rep_keys[ci]:
            return None  # already the representative
        replacement = representatives[ci]
        if not normalize_or_empty(replacement, config):
            return None  # pathological representative, keep the original
        return replacement

    unified: list[MechanismRelation] = []
    for rel in relations:
        new1 = resolve(rel.arg1.raw, rel.relation_id, "arg1")
        new2 = resolve(rel.arg2.raw, rel.relation_id, "arg2")
        if new1 is None and new2 is None:
            unified.append(rel)
            continue
        arg1 = make_surface(new1, config) if new1 is not None else rel.arg1
        arg2 = make_surface(new2, config) if new2 is not None else rel.arg2
        unified.append(
            MechanismRelation.create(
                arg1, arg2, rel.relation_class, rel.confidence, rel.provenance
            )
        )
    return unified

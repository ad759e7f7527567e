"""Ingest upstream extraction records into a deduplicated relation set.

Pipeline per record: parse, validate, confidence-filter the raw relations
(before normalization), normalize surfaces, unify coreferent mentions,
then deduplicate globally by relation_id (first occurrence wins). Parse
and validation problems are carried in-band, never aborting the stream.
"""

from __future__ import annotations

import gzip
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import InvalidThreshold
from .normalize import (
    DEFAULT_CONFIG,
    NormalizationConfig,
    make_surface,
    normalize_or_empty,
    unify_corefs,
)
from .schema import (
    ExtractionRecord,
    MechanismRelation,
    Provenance,
    validate_record,
)


@dataclass
class ParseFailure:
    """One rejected input line or record, carried in-band."""

    line_number: int
    kind: str  # malformed_json | schema_violation | validation
    message: str
    path: str | None = None


@dataclass
class IngestReport:
    """Counters for one ingest run.

    records_read counts every line that attempted to become a record;
    records_rejected counts parse, schema, and validation failures among
    them. Rejected records contribute nothing to the relation counters, so
    relations_kept = relations_seen - relations_below_threshold -
    relations_deduplicated holds exactly.
    """

    records_read: int = 0
    records_rejected: int = 0
    relations_seen: int = 0
    relations_below_threshold: int = 0
    relations_deduplicated: int = 0
    relations_kept: int = 0

    def reconciles(self) -> bool:
        return self.relations_kept == (
            self.relations_seen
            - self.relations_below_threshold
            - self.relations_deduplicated
        )

    def to_dict(self) -> dict:
        return {
            "records_read": self.records_read,
            "records_rejected": self.records_rejected,
            "relations_seen": self.relations_seen,
            "relations_below_threshold": self.relations_below_threshold,
            "relations_deduplicated": self.relations_deduplicated,
            "relations_kept": self.relations_kept,
        }


def _numbered_parse(lines):
    """Yield (line_number, ExtractionRecord | ParseFailure); blank lines skip."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, ParseFailure(lineno, "malformed_json", str(exc))
            continue
        if not isinstance(data, dict):
            yield lineno, ParseFailure(lineno, "schema_violation", "line is not a JSON object")
            continue
        try:
            yield lineno, ExtractionRecord.from_dict(data)
        except (ValueError, TypeError) as exc:
            yield lineno, ParseFailure(lineno, "schema_violation", str(exc))


def parse_stream(lines):
    """Yield ExtractionRecord or positioned ParseFailure per input line."""
    for _, item in _numbered_parse(lines):
        yield item


def filter_confidence(relations, threshold: float = 0.90):
    """Keep relations with confidence >= threshold (inclusive boundary)."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidThreshold(f"threshold must be in [0,1], got {threshold}")
    return (r for r in relations if r.confidence >= threshold)


def deduplicate(relations):
    """First occurrence of each relation_id wins; order preserved."""
    seen: set[int] = set()
    for rel in relations:
        if rel.relation_id not in seen:
            seen.add(rel.relation_id)
            yield rel


def _validate_normalizable(record: ExtractionRecord, config: NormalizationConfig) -> list[str]:
    """Record-level validation plus a normalizability check on every span."""
    errors = validate_record(record)
    if errors:
        return errors
    for i, rel in enumerate(record.relations):
        if not normalize_or_empty(rel.arg1_raw, config):
            errors.append(f"relations[{i}].arg1: empty entity span after normalization")
        if not normalize_or_empty(rel.arg2_raw, config):
            errors.append(f"relations[{i}].arg2: empty entity span after normalization")
    return errors


def _record_relations(
    record: ExtractionRecord,
    threshold: float,
    config: NormalizationConfig,
    report: IngestReport,
    warnings: list,
) -> list[MechanismRelation]:
    provenance = Provenance(
        doc_id=record.doc_id,
        sentence=record.sentence,
        sentence_index=record.sentence_index,
        title=record.title,
        url=record.url,
    )
    constructed: list[MechanismRelation] = []
    for raw in record.relations:
        report.relations_seen += 1
        if raw.confidence < threshold:
            report.relations_below_threshold += 1
            continue
        constructed.append(
            MechanismRelation.create(
                make_surface(raw.arg1_raw, config),
                make_surface(raw.arg2_raw, config),
                raw.relation_class,
                raw.confidence,
                provenance,
            )
        )
    ambiguities: list = []
    unified = unify_corefs(constructed, record.coref_clusters, config, ambiguities)
    for rid, position, text in ambiguities:
        warnings.append(("coref_ambiguity", rid, position, text))
    for rel in unified:
        if rel.is_self_relation:
            warnings.append(("self_relation", rel.relation_id, rel.arg1.normalized))
    return unified


def _open_text(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _parse_one_path(path):
    with _open_text(path) as fh:
        return list(_numbered_parse(fh))


def iter_relations(
    paths,
    threshold: float = 0.90,
    config: NormalizationConfig = DEFAULT_CONFIG,
    report: IngestReport | None = None,
    issues: list | None = None,
    warnings: list | None = None,
    workers: int = 1,
):
    """Stream deduplicated relations from JSON-Lines files (.gz detected).

    Counters, in-band failures, and warnings accumulate on the passed
    containers while the generator runs; they are complete once it is
    exhausted. With workers > 1 the shards are parsed concurrently but
    merged in the declared path order, keeping first-occurrence dedup
    deterministic. An out-of-range threshold raises before any I/O.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidThreshold(f"threshold must be in [0,1], got {threshold}")
    report = report if report is not None else IngestReport()
    issues = issues if issues is not None else []
    warnings = warnings if warnings is not None else []
    return _iter_relations(paths, threshold, config, report, issues, warnings, workers)


def _iter_relations(paths, threshold, config, report, issues, warnings, workers):
    def parsed_streams():
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for path, items in zip(paths, pool.map(_parse_one_path, paths)):
                    yield path, items
        else:
            for path in paths:
                with _open_text(path) as fh:
                    yield path, _numbered_parse(fh)

    seen_ids: set[int] = set()
    for path, items in parsed_streams():
        for lineno, item in items:
            report.records_read += 1
            if isinstance(item, ParseFailure):
                item.path = str(path)
                report.records_rejected += 1
                issues.append(item)
                continue
            errors = _validate_normalizable(item, config)
            if errors:
                report.records_rejected += 1
                issues.append(
                    ParseFailure(lineno, "validation", "; ".join(errors), str(path))
                )
                continue
            for rel in _record_relations(item, threshold, config, report, warnings):
                if rel.relation_id in seen_ids:
                    report.relations_deduplicated += 1
                    continue
                seen_ids.add(rel.relation_id)
                report.relations_kept += 1
                yield rel


@dataclass
class IngestOutcome:
    relations: list[MechanismRelation] = field(default_factory=list)
    report: IngestReport = field(default_factory=IngestReport)
    issues: list[ParseFailure] = field(default_factory=list)
    warnings: list = field(default_factory=list)


def run_ingest(
    paths,
    threshold: float = 0.90,
    config: NormalizationConfig = DEFAULT_CONFIG,
    workers: int = 1,
) -> IngestOutcome:
    """Eager ingest over whole files; see iter_relations for streaming."""
    outcome = IngestOutcome()
    outcome.relations = list(
        iter_relations(
            paths,
            threshold=threshold,
            config=config,
            report=outcome.report,
            issues=outcome.issues,
            warnings=outcome.warnings,
            workers=workers,
        )
    )
    return outcome

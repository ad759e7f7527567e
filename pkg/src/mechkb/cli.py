"""Operator entry points: ingest, build-index, search, eval, serve.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 external dependency failure. MECHKB_ENDPOINT overrides --endpoint.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .errors import (
    CorruptIndex,
    EmptyKb,
    IndexExists,
    InvalidThreshold,
    MechKbError,
    NormalizationMismatch,
    ProviderUnavailable,
)
from .index import build_index, load_index, relation_to_json, save_index, search_threshold
from .ingest import IngestReport, iter_relations
from .normalize import DEFAULT_CONFIG, normalize_or_empty
from .schema import MechanismRelation, RelationClass, RelationQuery

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EXTERNAL = 3


def fail(code: int, message: str) -> None:
    click.echo(f"mechkb: {message}", err=True)
    sys.exit(code)


def _resolve_endpoint(endpoint: str | None) -> str | None:
    return os.environ.get("MECHKB_ENDPOINT") or endpoint


def _make_provider(name: str, dim: int, endpoint: str | None):
    from .embed import FallbackEmbedding, RemoteEmbedding

    if name == "fallback":
        return FallbackEmbedding(dim)
    if name == "remote":
        endpoint = _resolve_endpoint(endpoint)
        if not endpoint:
            fail(EXIT_USAGE, "remote provider requires --endpoint or MECHKB_ENDPOINT")
        return RemoteEmbedding(endpoint, dim=dim)
    fail(EXIT_USAGE, f"unknown provider: {name}")


def _provider_for_index(index, override: str | None, endpoint: str | None):
    name = index.manifest["provider"]
    if override and override != name:
        fail(
            EXIT_USAGE,
            f"index was built with provider {name!r}; --provider {override!r} does not match",
        )
    return _make_provider(name, index.manifest["dim"], endpoint or index.manifest.get("endpoint"))


def _load_index_or_fail(index_dir: str):
    try:
        return load_index(index_dir)
    except FileNotFoundError as exc:
        fail(EXIT_USAGE, f"index directory not usable: {exc}")
    except (CorruptIndex, NormalizationMismatch) as exc:
        fail(EXIT_USAGE, str(exc))


@click.group(name="mechkb")
def cli():
    """Mechanism knowledge base tools."""


@cli.command("ingest")
@click.option("--input", "inputs", multiple=True, required=True, help="JSON-Lines file(s), .gz detected")
@click.option("--out", required=True, help="Output path for canonical relations JSON-Lines")
@click.option("--threshold", type=float, default=0.9, show_default=True, help="Confidence filter (inclusive)")
@click.option("--strict", is_flag=True, help="Exit 2 when any record is rejected")
def cmd_ingest(inputs, out, threshold, strict):
    """Validate, filter, and deduplicate extraction records."""
    report = IngestReport()
    issues: list = []
    warnings: list = []
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            for rel in iter_relations(
                inputs, threshold=threshold, report=report, issues=issues, warnings=warnings
            ):
                fh.write(relation_to_json(rel) + "\n")
    except InvalidThreshold as exc:
        fail(EXIT_USAGE, str(exc))
    except FileNotFoundError as exc:
        fail(EXIT_USAGE, f"input not readable: {exc}")
    for issue in issues:
        click.echo(f"mechkb: {issue.path}:{issue.line_number}: {issue.kind}: {issue.message}", err=True)
    for warning in warnings:
        click.echo(f"mechkb: warning: {' '.join(str(w) for w in warning)}", err=True)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if strict and report.records_rejected:
        fail(EXIT_DATA, f"{report.records_rejected} record(s) rejected under --strict")


def _read_relations_file(path) -> list[MechanismRelation]:
    relations: list[MechanismRelation] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rel = MechanismRelation.from_dict(json.loads(line))
            except (MechKbError, ValueError, KeyError) as exc:
                fail(EXIT_DATA, f"{path}:{lineno}: bad relation row: {exc}")
            if rel.relation_id in seen:
                fail(EXIT_DATA, f"{path}:{lineno}: duplicate relation_id {rel.relation_id}")
            for arg in (rel.arg1, rel.arg2):
                if normalize_or_empty(arg.normalized) != arg.normalized:
                    fail(
                        EXIT_DATA,
                        f"{path}:{lineno}: surface {arg.normalized!r} is not normalized",
                    )
            seen.add(rel.relation_id)
            relations.append(rel)
    return relations


@cli.command("build-index")
@click.option("--input", "inputs", multiple=True, required=True, help="Canonical relations JSON-Lines file(s)")
@click.option("--index", "index_dir", required=True, help="Index directory to create")
@click.option("--provider", type=click.Choice(["fallback", "remote"]), default="fallback", show_default=True)
@click.option("--endpoint", default=None, help="Remote embedding service URL")
@click.option("--force", is_flag=True, help="Overwrite an existing index directory")
def cmd_build_index(inputs, index_dir, provider, endpoint, force):
    """Embed the vocabulary and write the on-disk index."""
    relations: list[MechanismRelation] = []
    for path in inputs:
        try:
            relations.extend(_read_relations_file(path))
        except FileNotFoundError as exc:
            fail(EXIT_USAGE, f"input not readable: {exc}")
    prov = _make_provider(provider, 256, endpoint)
    try:
        index = build_index(relations, prov, DEFAULT_CONFIG)
        save_index(index, index_dir, force=force)
    except EmptyKb as exc:
        fail(EXIT_USAGE, str(exc))
    except IndexExists as exc:
        fail(EXIT_USAGE, f"{exc} (use --force to overwrite)")
    except ProviderUnavailable as exc:
        fail(EXIT_EXTERNAL, str(exc))
    click.echo(json.dumps(index.manifest, ensure_ascii=False, indent=2))


def _tsv_field(value) -> str:
    return str(value).replace("\t", " ").replace("\n", " ").replace("\r", " ")


_TSV_COLUMNS = (
    "score",
    "relation_id",
    "arg1",
    "arg2",
    "class",
    "confidence",
    "doc_id",
    "sentence_index",
    "title",
    "url",
    "sentence",
)


@cli.command("search")
@click.option("--index", "index_dir", required=True, help="Index directory")
@click.option("--e1", "e1", multiple=True, required=True, help="E1 alternative (repeatable)")
@click.option("--e2", "e2", multiple=True, help="E2 alternative (repeatable; omit for open-ended)")
@click.option("--class", "class_", type=click.Choice(["direct", "indirect"]), default=None)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--symmetric", is_flag=True, help="Query both argument orders")
@click.option("--threshold", type=float, default=0.9, show_default=True, help="Minimum confidence")
@click.option("--format", "format_", type=click.Choice(["json", "tsv"]), default="json", show_default=True)
@click.option("--provider", type=click.Choice(["fallback", "remote"]), default=None, help="Must match the index manifest")
@click.option("--endpoint", default=None, help="Remote embedding service URL")
def cmd_search(index_dir, e1, e2, class_, k, symmetric, threshold, format_, provider, endpoint):
    """Rank KB relations against a query."""
    from .service import result_row

    index = _load_index_or_fail(index_dir)
    prov = _provider_for_index(index, provider, endpoint)
    try:
        query = RelationQuery(
            e1_alternatives=tuple(e1),
            e2_alternatives=tuple(e2),
            class_filter=RelationClass.from_string(class_.upper()) if class_ else None,
            k=k,
            symmetric=symmetric,
            min_confidence=threshold,
        )
    except ValueError as exc:
        fail(EXIT_USAGE, str(exc))
    try:
        results = search_threshold(query, index, prov)
    except ProviderUnavailable as exc:
        fail(EXIT_EXTERNAL, str(exc))
    except MechKbError as exc:
        fail(EXIT_USAGE, str(exc))
    rows = [result_row(r) for r in results]
    if format_ == "json":
        click.echo(json.dumps({"results": rows}, ensure_ascii=False, indent=2))
    else:
        click.echo("\t".join(_TSV_COLUMNS))
        for row in rows:
            click.echo("\t".join(_tsv_field(row[c]) for c in _TSV_COLUMNS))


def _ranking_report(by_query, k_opt, out_path):
    from .metrics import precision_at_k, precision_recall_points
    from .errors import NoPositives

    queries = {}
    csv_rows: list[tuple] = []
    for query_id in sorted(by_query):
        items = by_query[query_id]
        labels = [label for _, _, label in items]
        k = k_opt if k_opt is not None else len(labels)
        if not 1 <= k <= len(labels):
            fail(
                EXIT_USAGE,
                f"query {query_id!r} has {len(labels)} ranked items; k={k} out of range",
            )
        try:
            points = precision_recall_points(labels)
        except NoPositives:
            click.echo(f"mechkb: warning: query {query_id!r} has no positive labels", err=True)
            points = None
        queries[query_id] = {
            "k": k,
            "precision_at_k": precision_at_k(labels, k),
            "pr_points": points,
        }
        if points:
            csv_rows.extend((query_id, r, p) for r, p in points)
    macro = sum(q["precision_at_k"] for q in queries.values()) / len(queries)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("query_id,recall,precision\n")
            for query_id, recall, precision in csv_rows:
                fh.write(f"{query_id},{recall},{precision}\n")
    return {"mode": "ranking", "queries": queries, "macro_precision_at_k": macro}


def _agreement_report(paths):
    from .metrics import agreement_suite, read_label_csv

    first = read_label_csv(paths[0])
    second = read_label_csv(paths[1])
    if set(first) != set(second):
        fail(EXIT_DATA, "annotator files cover different query_ids")
    a: list[int] = []
    b: list[int] = []
    for query_id in sorted(first):
        rows_a = first[query_id]
        rows_b = second[query_id]
        if [(r, rid) for r, rid, _ in rows_a] != [(r, rid) for r, rid, _ in rows_b]:
            fail(EXIT_DATA, f"annotator files rank different relations for query {query_id!r}")
        a.extend(label for _, _, label in rows_a)
        b.extend(label for _, _, label in rows_b)
    suite = agreement_suite(a, b)
    return {"mode": "agreement", "n": len(a), **suite}


@cli.command("eval")
@click.argument("mode", type=click.Choice(["ranking", "agreement"]))
@click.option("--input", "inputs", multiple=True, required=True, help="Label CSV (agreement mode takes two)")
@click.option("--k", type=int, default=None, help="Rank cutoff (ranking mode; defaults to each query's length)")
@click.option("--out", default=None, help="Write plot-ready (recall, precision) CSV here (ranking mode)")
def cmd_eval(mode, inputs, k, out):
    """Compute metric reports from canonical label CSVs."""
    from .metrics import read_label_csv

    if mode == "ranking":
        if len(inputs) != 1:
            fail(EXIT_USAGE, "ranking mode takes exactly one --input")
        try:
            by_query = read_label_csv(inputs[0])
        except FileNotFoundError as exc:
            fail(EXIT_USAGE, f"input not readable: {exc}")
        except ValueError as exc:
            fail(EXIT_USAGE, str(exc))
        if not by_query:
            fail(EXIT_DATA, "labels CSV has no rows")
        report = _ranking_report(by_query, k, out)
    else:
        if len(inputs) != 2:
            fail(EXIT_USAGE, "agreement mode takes exactly two --input files (reference first)")
        try:
            report = _agreement_report(inputs)
        except FileNotFoundError as exc:
            fail(EXIT_USAGE, f"input not readable: {exc}")
        except ValueError as exc:
            fail(EXIT_USAGE, str(exc))
    click.echo(json.dumps(report, indent=2))


@cli.command("serve")
@click.option("--index", "index_dir", required=True, help="Index directory")
@click.option("--bind", default="127.0.0.1:8000", show_default=True, help="host:port")
@click.option("--provider", type=click.Choice(["fallback", "remote"]), default=None, help="Must match the index manifest")
@click.option("--endpoint", default=None, help="Remote embedding service URL")
def cmd_serve(index_dir, bind, provider, endpoint):
    """Serve the HTTP search API over a loaded index."""
    import uvicorn

    from .service import create_app

    host, _, port_str = bind.rpartition(":")
    if not host or not port_str.isdigit():
        fail(EXIT_USAGE, f"--bind must be host:port, got {bind!r}")
    index = _load_index_or_fail(index_dir)
    prov = _provider_for_index(index, provider, endpoint)
    app = create_app(index, prov)
    counts = index.manifest["counts"]
    click.echo(
        f"mechkb: ready: {counts['relations']} relations / {counts['vocabulary']} surfaces "
        f"on http://{host}:{port_str}",
        err=True,
    )
    uvicorn.run(app, host=host, port=int(port_str), log_level="warning")


def entry() -> None:
    """Console entry point with spec exit-code mapping."""
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except ProviderUnavailable as exc:
        click.echo(f"mechkb: {exc}", err=True)
        sys.exit(EXIT_EXTERNAL)
    except MechKbError as exc:
        click.echo(f"mechkb: {exc}", err=True)
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    entry()

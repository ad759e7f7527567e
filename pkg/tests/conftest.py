"""Session-wide fixtures: shared providers and the bundled fixture corpus."""

from __future__ import annotations

import pathlib

import pytest

from mechkb.embed import FallbackEmbedding
from mechkb.index import KbIndex, build_index
from mechkb.ingest import IngestOutcome, run_ingest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def provider() -> FallbackEmbedding:
    """One fallback provider for the whole session so gram caches warm up."""
    return FallbackEmbedding(dim=256)


@pytest.fixture(scope="session")
def corpus_path() -> pathlib.Path:
    return FIXTURES / "corpus50.jsonl"


@pytest.fixture(scope="session")
def corpus_outcome(corpus_path) -> IngestOutcome:
    return run_ingest([corpus_path])


@pytest.fixture(scope="session")
def corpus_index(corpus_outcome, provider) -> KbIndex:
    return build_index(corpus_outcome.relations, provider)

"""Embedding providers: n-gram fallback, remote client, vector file format."""

from __future__ import annotations

import json
import threading
import time

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mechkb.embed import (
    GRAM_END,
    GRAM_SIZES,
    GRAM_START,
    EmbeddingVector,
    FallbackEmbedding,
    RemoteEmbedding,
    _char_ngrams,
    fallback_embed,
    load_vectors,
    save_vectors,
    similarity,
)
from mechkb.errors import (
    CorruptIndex,
    DimMismatch,
    EmptyText,
    ProviderProtocolError,
    ProviderUnavailable,
)
from oracles import oracle_cosine, oracle_embed

# ---------------------------------------------------------------------------
# EmbeddingVector / similarity
# ---------------------------------------------------------------------------


def _unit(values) -> EmbeddingVector:
    arr = np.asarray(values, dtype=np.float64)
    return EmbeddingVector(arr / np.linalg.norm(arr))


def test_vector_must_be_unit_norm():
    with pytest.raises(ValueError):
        EmbeddingVector(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        EmbeddingVector(np.zeros(4))


def test_vector_must_be_finite_1d():
    with pytest.raises(ValueError):
        EmbeddingVector(np.array([np.nan, 0.0]))
    with pytest.raises(DimMismatch):
        EmbeddingVector(np.eye(2))


def test_vector_is_read_only():
    v = _unit([1.0, 0.0])
    with pytest.raises(ValueError):
        v.values[0] = 0.5


def test_similarity_identities():
    e1 = _unit([1, 0, 0, 0])
    e2 = _unit([0, 1, 0, 0])
    assert similarity(e1, e1) == 1.0
    assert similarity(e1, e2) == 0.0
    neg = _unit([-1, 0, 0, 0])
    assert similarity(e1, neg) == -1.0


def test_similarity_rejects_dim_mismatch():
    with pytest.raises(DimMismatch):
        similarity(_unit([1, 0]), _unit([1, 0, 0]))


# ---------------------------------------------------------------------------
# FallbackEmbedding
# ---------------------------------------------------------------------------


def test_char_ngrams_use_markers():
    grams = _char_ngrams("ab")
    marked = GRAM_START + "ab" + GRAM_END
    expected = [
        marked[i : i + n]
        for n in GRAM_SIZES
        for i in range(len(marked) - n + 1)
    ]
    assert sorted(grams) == sorted(expected)
    assert len(grams) == 2 + 1  # two trigrams, one 4-gram, no 5-gram


def test_single_char_embeds_to_one_hot():
    v = fallback_embed("a", d=8)
    assert v.values.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_fallback_vectors_are_unit_norm():
    provider = FallbackEmbedding(dim=64)
    for text in ["warm climate", "coronavirus", "x", "deep learning"]:
        assert abs(np.linalg.norm(provider.embed(text).values) - 1.0) < 1e-12


def test_fallback_matches_independent_oracle():
    provider = FallbackEmbedding(dim=256)
    for text in ["deep learning", "microscope", "neural network model", "drug"]:
        ours = provider.embed(text).values.astype(np.float32).astype(np.float64)
        theirs = np.array(oracle_embed(text, 256))
        assert np.max(np.abs(ours - theirs)) < 1e-12


def test_fallback_similarity_orders_related_above_unrelated(provider):
    warm = provider.embed("warm climate")
    related = provider.embed("warmer climate")
    unrelated = provider.embed("microscope")
    assert similarity(warm, related) > similarity(warm, unrelated)


def test_fallback_deterministic_across_instances():
    a = FallbackEmbedding(dim=32).embed("spike protein")
    b = FallbackEmbedding(dim=32).embed("spike protein")
    assert np.array_equal(a.values, b.values)


def test_fallback_batch_matches_singletons(provider):
    texts = ["alpha", "beta variant", "gamma"]
    batch = provider.embed_batch(texts)
    for text, vec in zip(texts, batch):
        assert np.array_equal(vec.values, provider.embed(text).values)


def test_fallback_rejects_empty_text(provider):
    with pytest.raises(EmptyText):
        provider.embed("")
    with pytest.raises(EmptyText):
        provider.embed_batch(["ok", ""])


@given(st.text(min_size=1, max_size=20))
@settings(max_examples=200)
def test_fallback_always_unit_norm(text):
    v = fallback_embed(text, d=64)
    assert abs(float(np.linalg.norm(v.values)) - 1.0) < 1e-9


@given(st.text(min_size=1, max_size=12), st.text(min_size=1, max_size=12))
@settings(max_examples=100)
def test_fallback_cosine_matches_oracle(a, b):
    va = fallback_embed(a, d=64).values.astype(np.float32).astype(np.float64)
    vb = fallback_embed(b, d=64).values.astype(np.float32).astype(np.float64)
    assert abs(float(va @ vb) - sum(
        x * y for x, y in zip(oracle_embed(a, 64), oracle_embed(b, 64))
    )) < 1e-12


def test_oracle_cosine_self_check():
    # float32 rounding keeps self-similarity near 1 but not exactly 1
    assert abs(oracle_cosine("drug", "drug") - 1.0) < 1e-6


# ---------------------------------------------------------------------------
# RemoteEmbedding (httpx.MockTransport; no sockets)
# ---------------------------------------------------------------------------


def _echo_transport(dim=4):
    """Deterministic fake service: hash each text into a one-hot vector."""

    def handler(request: httpx.Request) -> httpx.Response:
        texts = json.loads(request.content)["texts"]
        vectors = [[0.0] * dim for _ in texts]
        for row, text in zip(vectors, texts):
            row[sum(text.encode()) % dim] = 1.0
        return httpx.Response(200, json={"vectors": vectors, "dim": dim})

    return httpx.MockTransport(handler)


def test_remote_embeds_via_wire_protocol():
    provider = RemoteEmbedding("http://svc/", dim=4, transport=_echo_transport(4))
    assert provider.endpoint == "http://svc"  # trailing slash trimmed
    vecs = provider.embed_batch(["abc", "xyz"])
    assert len(vecs) == 2
    assert all(v.dim == 4 for v in vecs)
    single = provider.embed("abc")
    assert np.array_equal(single.values, vecs[0].values)
    provider.close()


def test_remote_renormalizes_vectors():
    def handler(request):
        return httpx.Response(200, json={"vectors": [[3.0, 4.0, 0.0]], "dim": 3})

    provider = RemoteEmbedding("http://svc", dim=3, transport=httpx.MockTransport(handler))
    v = provider.embed("x")
    assert np.allclose(v.values, [0.6, 0.8, 0.0], atol=1e-15)


@pytest.mark.parametrize(
    "payload",
    [
        {"vectors": [[1.0, 0.0]], "dim": 300},  # declared dim mismatch
        {"vectors": [[1.0, 0.0, 0.0]], "dim": 2},  # row length mismatch
        {"vectors": []},  # missing dim
        {"dim": 2},  # missing vectors
        {"vectors": [[1.0, 0.0], [0.0, 1.0]], "dim": 2},  # wrong count for 1 text
        {"vectors": [[0.0, 0.0]], "dim": 2},  # zero norm
    ],
)
def test_remote_rejects_protocol_violations(payload):
    transport = httpx.MockTransport(lambda req: httpx.Response(200, json=payload))
    provider = RemoteEmbedding("http://svc", dim=2, transport=transport)
    with pytest.raises(ProviderProtocolError):
        provider.embed_batch(["one text"])


def test_remote_rejects_non_json_and_4xx():
    provider = RemoteEmbedding(
        "http://svc", dim=2,
        transport=httpx.MockTransport(lambda r: httpx.Response(200, content=b"<html>")),
    )
    with pytest.raises(ProviderProtocolError):
        provider.embed("x")
    provider = RemoteEmbedding(
        "http://svc", dim=2,
        transport=httpx.MockTransport(lambda r: httpx.Response(404)),
    )
    with pytest.raises(ProviderProtocolError):
        provider.embed("x")


def test_remote_retries_transport_errors_then_gives_up():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused")

    provider = RemoteEmbedding(
        "http://svc", dim=2, backoff=0.001, transport=httpx.MockTransport(handler)
    )
    with pytest.raises(ProviderUnavailable):
        provider.embed("x")
    assert len(calls) == 3


def test_remote_retries_5xx_and_recovers():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"vectors": [[1.0, 0.0]], "dim": 2})

    provider = RemoteEmbedding(
        "http://svc", dim=2, backoff=0.001, transport=httpx.MockTransport(handler)
    )
    v = provider.embed("x")
    assert len(calls) == 3
    assert v.values.tolist() == [1.0, 0.0]


def test_remote_bounds_in_flight_requests():
    state = {"active": 0, "peak": 0, "calls": 0}
    lock = threading.Lock()

    def handler(request):
        with lock:
            state["active"] += 1
            state["calls"] += 1
            state["peak"] = max(state["peak"], state["active"])
        try:
            time.sleep(0.1)  # hold the slot so overlapping calls would pile up
        finally:
            with lock:
                state["active"] -= 1
        return httpx.Response(200, json={"vectors": [[1.0, 0.0]], "dim": 2})

    provider = RemoteEmbedding(
        "http://svc", dim=2, max_in_flight=2, transport=httpx.MockTransport(handler)
    )
    threads = [threading.Thread(target=provider.embed, args=("x",)) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["calls"] == 6
    assert state["peak"] <= 2


def test_remote_rejects_empty_text_before_any_call():
    def handler(request):  # pragma: no cover - must not be reached
        raise AssertionError("no request expected")

    provider = RemoteEmbedding("http://svc", dim=2, transport=httpx.MockTransport(handler))
    with pytest.raises(EmptyText):
        provider.embed_batch(["ok", ""])
    assert provider.embed_batch([]) == []


# ---------------------------------------------------------------------------
# vector file round-trip
# ---------------------------------------------------------------------------


def test_save_load_vectors_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    matrix = rng.normal(size=(7, 16))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    path = tmp_path / "vectors.f32"
    save_vectors(path, matrix, "fallback")
    loaded, provider = load_vectors(path)
    assert provider == "fallback"
    assert loaded.shape == (7, 16)
    assert np.array_equal(loaded, matrix.astype(np.float32))


def test_load_vectors_rejects_bad_header(tmp_path):
    path = tmp_path / "vectors.f32"
    path.write_bytes(b"not json\n\x00\x00")
    with pytest.raises(CorruptIndex):
        load_vectors(path)


def test_load_vectors_rejects_truncated_payload(tmp_path):
    path = tmp_path / "vectors.f32"
    save_vectors(path, np.eye(3), "fallback")
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(CorruptIndex):
        load_vectors(path)

"""KB index: vocabulary, vector store, postings, and top-k relation search.

Retrieval ranks relations by min-aggregation: a relation's score against a
two-sided query is the minimum of its per-side entity similarities, where
each side's similarity is the max over that side's query alternatives.
Two implementations are provided: a brute-force scan (the correctness
oracle) and a threshold-algorithm retriever that walks per-side descending
similarity streams and terminates early; both produce identical results.
"""

from __future__ import annotations

import datetime
import heapq
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embed import EmbeddingVector, load_vectors, save_vectors
from .errors import (
    CorruptIndex,
    DimMismatch,
    EmptyAfterNormalization,
    EmptyKb,
    IndexExists,
    InvalidQuery,
    NormalizationMismatch,
)
from .normalize import NormalizationConfig, normalize_surface
from .schema import (
    MechanismRelation,
    RelationClass,
    RelationQuery,
    ScoredResult,
)

FORMAT_VERSION = 1

_CLASS_CODES = {RelationClass.DIRECT: 0, RelationClass.INDIRECT: 1}


class Vocabulary:
    """Unique normalized surface forms with dense insertion-order ids."""

    def __init__(self, surfaces: list[str] | None = None):
        self.surfaces: list[str] = []
        self._ids: dict[str, int] = {}
        for s in surfaces or []:
            self.add(s)

    def add(self, surface: str) -> int:
        vid = self._ids.get(surface)
        if vid is None:
            vid = len(self.surfaces)
            self._ids[surface] = vid
            self.surfaces.append(surface)
        return vid

    def id_of(self, surface: str) -> int:
        return self._ids[surface]

    def __len__(self) -> int:
        return len(self.surfaces)

    def __getitem__(self, vid: int) -> str:
        return self.surfaces[vid]

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids


@dataclass
class SearchStats:
    """Instrumentation filled in by the search functions."""

    stream_entries_examined: int = 0
    rows_scored: int = 0
    early_terminated: bool = False


class KbIndex:
    """Immutable KB snapshot: vocabulary, unit vectors, postings, relations."""

    def __init__(
        self,
        vocabulary: Vocabulary,
        vectors: np.ndarray,
        relations: list[MechanismRelation],
        manifest: dict,
    ):
        if vectors.shape[0] != len(vocabulary):
            raise CorruptIndex(
                f"vector rows {vectors.shape[0]} != vocabulary size {len(vocabulary)}"
            )
        self.vocabulary = vocabulary
        self.vectors = vectors
        self.relations = relations
        self.manifest = manifest

        n = len(relations)
        self.arg1_vid = np.empty(n, dtype=np.int64)
        self.arg2_vid = np.empty(n, dtype=np.int64)
        self.class_codes = np.empty(n, dtype=np.int8)
        self.confidences = np.empty(n, dtype=np.float64)
        self.relation_ids = np.empty(n, dtype=np.uint64)
        self.by_id: dict[int, int] = {}
        pos1: list[list[int]] = [[] for _ in range(len(vocabulary))]
        pos2: list[list[int]] = [[] for _ in range(len(vocabulary))]
        for row, rel in enumerate(relations):
            if rel.arg1.normalized not in vocabulary or rel.arg2.normalized not in vocabulary:
                raise CorruptIndex(
                    f"relation {rel.relation_id} argument missing from vocabulary"
                )
            v1 = vocabulary.id_of(rel.arg1.normalized)
            v2 = vocabulary.id_of(rel.arg2.normalized)
            self.arg1_vid[row] = v1
            self.arg2_vid[row] = v2
            self.class_codes[row] = _CLASS_CODES[rel.relation_class]
            self.confidences[row] = rel.confidence
            self.relation_ids[row] = rel.relation_id
            self.by_id[rel.relation_id] = row
            pos1[v1].append(row)
            pos2[v2].append(row)
        self.postings1 = [np.asarray(rows, dtype=np.int64) for rows in pos1]
        self.postings2 = [np.asarray(rows, dtype=np.int64) for rows in pos2]

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def normalization(self) -> NormalizationConfig:
        return NormalizationConfig.from_dict(self.manifest["normalization"])

    def __len__(self) -> int:
        return len(self.relations)


def build_index(
    relations,
    provider,
    config: NormalizationConfig | None = None,
    batch_size: int = 512,
) -> KbIndex:
    """Build an immutable index over normalized, deduplicated relations.

    Vectors are rounded through float32 at build time so a freshly built
    index and one reloaded from disk produce bitwise identical similarities.
    """
    relations = list(relations)
    if not relations:
        raise EmptyKb("cannot build an index over zero relations")
    config = config or NormalizationConfig()

    vocabulary = Vocabulary()
    for rel in relations:
        vocabulary.add(rel.arg1.normalized)
        vocabulary.add(rel.arg2.normalized)

    rows: list[np.ndarray] = []
    for start in range(0, len(vocabulary), batch_size):
        batch = vocabulary.surfaces[start : start + batch_size]
        rows.extend(v.values for v in provider.embed_batch(batch))
    vectors = np.asarray(rows, dtype=np.float64)
    vectors = vectors.astype(np.float32).astype(np.float64)

    manifest = {
        "format_version": FORMAT_VERSION,
        "provider": provider.name,
        "endpoint": getattr(provider, "endpoint", None),
        "dim": provider.dim,
        "built_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "normalization": config.to_dict(),
        "counts": {"relations": len(relations), "vocabulary": len(vocabulary)},
    }
    return KbIndex(vocabulary, vectors, relations, manifest)


def topk_entities(
    query_vec: EmbeddingVector, index: KbIndex, k: int
) -> list[tuple[int, float]]:
    """Exact top-k vocabulary entries by similarity (desc, ties by id asc)."""
    if query_vec.dim != index.dim:
        raise DimMismatch(f"query dim {query_vec.dim} != index dim {index.dim}")
    sims = index.vectors @ query_vec.values
    order = np.argsort(-sims, kind="stable")[: max(k, 0)]
    return [(int(vid), float(sims[vid])) for vid in order]


def score_relation(relation: MechanismRelation, sim1, sim2=None) -> float:
    """Min-aggregated relation score.

    sim1/sim2 are per-side similarity lookups (normalized surface -> float).
    Two-sided: min(sim1(arg1), sim2(arg2)); one-sided: sim1(arg1) alone.
    """
    s1 = sim1(relation.arg1.normalized)
    if sim2 is None:
        return s1
    return min(s1, sim2(relation.arg2.normalized))


def _embed_alternatives(index: KbIndex, provider, alternatives, config, side: str):
    """Normalize and embed one side's alternatives; returns per-vocab max
    similarity and the index of the winning alternative."""
    normalized: list[str] = []
    for alt in alternatives:
        try:
            normalized.append(normalize_surface(alt, config))
        except EmptyAfterNormalization:
            raise InvalidQuery(
                f"{side} alternative {alt!r} is empty after normalization"
            ) from None
    vecs = provider.embed_batch(normalized)
    matrix = np.asarray([v.values for v in vecs], dtype=np.float64)
    matrix = matrix.astype(np.float32).astype(np.float64)
    all_sims = index.vectors @ matrix.T  # (|vocab|, n_alts)
    side_sims = all_sims.max(axis=1)
    alt_idx = all_sims.argmax(axis=1)
    return side_sims, alt_idx


def _eligibility_mask(index: KbIndex, query: RelationQuery) -> np.ndarray:
    mask = index.confidences >= query.min_confidence
    if query.class_filter is not None:
        mask &= index.class_codes == _CLASS_CODES[query.class_filter]
    return mask


@dataclass
class _Prepared:
    sims1: np.ndarray
    alt1: np.ndarray
    sims2: np.ndarray | None
    alt2: np.ndarray | None
    mask: np.ndarray
    directions: list[str] = field(default_factory=list)


def _prepare(query: RelationQuery, index: KbIndex, provider) -> _Prepared:
    if provider.dim != index.dim:
        raise DimMismatch(f"provider dim {provider.dim} != index dim {index.dim}")
    config = index.normalization
    sims1, alt1 = _embed_alternatives(index, provider, query.e1_alternatives, config, "e1")
    sims2 = alt2 = None
    if not query.one_sided:
        sims2, alt2 = _embed_alternatives(
            index, provider, query.e2_alternatives, config, "e2"
        )
    directions = ["fwd", "bwd"] if query.symmetric else ["fwd"]
    return _Prepared(sims1, alt1, sims2, alt2, _eligibility_mask(index, query), directions)


def _direction_scores(prep: _Prepared, index: KbIndex, rows: np.ndarray, direction: str):
    """Scores for rows under one direction, plus matched alternative indices."""
    a1 = index.arg1_vid[rows]
    a2 = index.arg2_vid[rows]
    if direction == "bwd":
        a1, a2 = a2, a1
    s1 = prep.sims1[a1]
    e1_alt = prep.alt1[a1]
    if prep.sims2 is None:
        return s1, e1_alt, None
    s2 = prep.sims2[a2]
    e2_alt = prep.alt2[a2]
    return np.minimum(s1, s2), e1_alt, e2_alt


def _finalize(
    prep: _Prepared, index: KbIndex, rows: np.ndarray, k: int
) -> list[ScoredResult]:
    """Exact ordering and alternative attribution for candidate rows.

    Recomputes each direction's score for the candidates, keeps the best
    (forward wins ties), sorts by score desc / relation_id asc, cuts to k.
    """
    if rows.size == 0:
        return []
    fwd, fwd_e1, fwd_e2 = _direction_scores(prep, index, rows, "fwd")
    score = fwd
    use_bwd = None
    if len(prep.directions) > 1:
        bwd, bwd_e1, bwd_e2 = _direction_scores(prep, index, rows, "bwd")
        use_bwd = bwd > fwd
        score = np.where(use_bwd, bwd, fwd)
    order = np.lexsort((index.relation_ids[rows], -score))[:k]
    results: list[ScoredResult] = []
    for i in order:
        row = int(rows[i])
        if use_bwd is not None and use_bwd[i]:
            e1_alt = bwd_e1[i]
            e2_alt = None if bwd_e2 is None else bwd_e2[i]
        else:
            e1_alt = fwd_e1[i]
            e2_alt = None if fwd_e2 is None else fwd_e2[i]
        results.append(
            ScoredResult(
                relation=index.relations[row],
                score=float(score[i]),
                matched_e1_alt=int(e1_alt),
                matched_e2_alt=None if e2_alt is None else int(e2_alt),
            )
        )
    return results


def search_bruteforce(
    query: RelationQuery, index: KbIndex, provider, stats: SearchStats | None = None
) -> list[ScoredResult]:
    """Score every eligible relation and return the top k: the oracle."""
    prep = _prepare(query, index, provider)
    rows = np.nonzero(prep.mask)[0]
    n_sides = 1 if prep.sims2 is None else 2
    if stats is not None:
        stats.stream_entries_examined += (
            len(prep.directions) * n_sides * len(index.vocabulary)
        )
        stats.rows_scored += len(prep.directions) * rows.size
        stats.early_terminated = False
    return _finalize(prep, index, rows, query.k)


def _threshold_direction(
    prep: _Prepared,
    index: KbIndex,
    direction: str,
    k: int,
    stats: SearchStats | None,
) -> np.ndarray:
    """Exact top-k candidate rows for one direction via the threshold
    algorithm: walk per-side descending similarity streams round-robin,
    join through postings, stop once the k-th best found score strictly
    beats the best possible unseen score (min of the stream frontiers)."""
    if direction == "fwd":
        sides = [(prep.sims1, index.postings1)]
        if prep.sims2 is not None:
            sides.append((prep.sims2, index.postings2))
    else:
        sides = [(prep.sims1, index.postings2)]
        if prep.sims2 is not None:
            sides.append((prep.sims2, index.postings1))

    orders = [np.argsort(-sims, kind="stable") for sims, _ in sides]
    positions = [0] * len(sides)
    n_vocab = len(index.vocabulary)
    seen = np.zeros(len(index.relations), dtype=bool)
    rel_ids = index.relation_ids

    # min-heap of (score, -relation_id, row); heap[0] is the current k-th
    heap: list[tuple[float, int, int]] = []
    chunk = 64
    exhausted = False
    terminated = False

    while not exhausted and not terminated:
        for si, (sims, postings) in enumerate(sides):
            pos = positions[si]
            if pos >= n_vocab:
                exhausted = True
                break
            vids = orders[si][pos : pos + chunk]
            positions[si] = pos + len(vids)
            if stats is not None:
                stats.stream_entries_examined += len(vids)
            lists = [postings[v] for v in vids if postings[v].size]
            if lists:
                rows = np.concatenate(lists)
                fresh = rows[prep.mask[rows] & ~seen[rows]]
                if fresh.size:
                    seen[fresh] = True
                    scores, _, _ = _direction_scores(prep, index, fresh, direction)
                    if stats is not None:
                        stats.rows_scored += fresh.size
                    if len(heap) < k:
                        take = fresh
                        take_scores = scores
                    else:
                        keep = scores >= heap[0][0]
                        take = fresh[keep]
                        take_scores = scores[keep]
                    for row, s in zip(take.tolist(), take_scores.tolist()):
                        entry = (s, -int(rel_ids[row]), row)
                        if len(heap) < k:
                            heapq.heappush(heap, entry)
                        elif entry[:2] > heap[0][:2]:
                            heapq.heapreplace(heap, entry)
            if positions[si] >= n_vocab:
                # every row joins through this side, so nothing is unseen now
                exhausted = True
                break
        if exhausted:
            break
        bound = min(
            float(sides[si][0][orders[si][positions[si]]])
            if positions[si] < n_vocab
            else float("-inf")
            for si in range(len(sides))
        )
        if len(heap) == k and heap[0][0] > bound:
            terminated = True
        chunk = min(chunk * 2, 4096)

    if stats is not None and terminated:
        stats.early_terminated = True
    return np.asarray(sorted(entry[2] for entry in heap), dtype=np.int64)


def search_threshold(
    query: RelationQuery, index: KbIndex, provider, stats: SearchStats | None = None
) -> list[ScoredResult]:
    """Top-k retrieval with early termination; identical output to
    search_bruteforce (same ids, same scores, same order)."""
    prep = _prepare(query, index, provider)
    candidate_rows: np.ndarray | None = None
    for direction in prep.directions:
        rows = _threshold_direction(prep, index, direction, query.k, stats)
        if candidate_rows is None:
            candidate_rows = rows
        else:
            candidate_rows = np.union1d(candidate_rows, rows)
    return _finalize(prep, index, candidate_rows, query.k)


# --- on-disk layout -------------------------------------------------------
#
# manifest.json   counts, provider, dim, normalization config, format version
# vocab.tsv       "<id>\t<surface>" per line, insertion order
# vectors.f32     JSON header line {dim,count,provider}, then f32 LE rows
# postings.bin    per vocab id: varint list lengths + delta-varint row ids,
#                 arg1 postings then arg2 postings
# relations.jsonl one canonical relation JSON object per line


def _write_varint(buf: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise CorruptIndex("postings file truncated")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _encode_postings(index: KbIndex) -> bytes:
    buf = bytearray()
    for vid in range(len(index.vocabulary)):
        for plist in (index.postings1[vid], index.postings2[vid]):
            _write_varint(buf, len(plist))
            prev = 0
            for row in plist.tolist():
                _write_varint(buf, row - prev)
                prev = row
    return bytes(buf)


def _decode_postings(data: bytes, n_vocab: int) -> tuple[list, list]:
    pos = 0
    postings1: list[np.ndarray] = []
    postings2: list[np.ndarray] = []
    for _ in range(n_vocab):
        for target in (postings1, postings2):
            count, pos = _read_varint(data, pos)
            rows = []
            prev = 0
            for _ in range(count):
                delta, pos = _read_varint(data, pos)
                prev += delta
                rows.append(prev)
            target.append(np.asarray(rows, dtype=np.int64))
    if pos != len(data):
        raise CorruptIndex("postings file has trailing bytes")
    return postings1, postings2


def relation_to_json(rel: MechanismRelation) -> str:
    return json.dumps(rel.to_dict(), ensure_ascii=False, separators=(",", ":"))


def save_index(index: KbIndex, path, force: bool = False) -> None:
    """Write the index directory; refuses to overwrite unless force."""
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        if not force:
            raise IndexExists(f"index directory already populated: {path}")
        shutil.rmtree(path)
    tmp = path.parent / f".{path.name}.tmp-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        (tmp / "manifest.json").write_text(
            json.dumps(index.manifest, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        with open(tmp / "vocab.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for vid, surface in enumerate(index.vocabulary.surfaces):
                fh.write(f"{vid}\t{surface}\n")
        save_vectors(
            tmp / "vectors.f32",
            index.vectors.astype(np.float32),
            index.manifest["provider"],
        )
        (tmp / "postings.bin").write_bytes(_encode_postings(index))
        with open(tmp / "relations.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for rel in index.relations:
                fh.write(relation_to_json(rel) + "\n")
        if path.exists():
            path.rmdir()
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)


def load_index(path) -> KbIndex:
    """Read an index directory, verifying counts and postings consistency."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CorruptIndex(f"no manifest.json in {path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CorruptIndex(
            f"unsupported index format version: {manifest.get('format_version')}"
        )
    try:
        NormalizationConfig.from_dict(manifest["normalization"])
    except (KeyError, ValueError) as exc:
        raise NormalizationMismatch(
            f"index normalization config is not usable here: {exc}"
        ) from exc

    surfaces: list[str] = []
    with open(path / "vocab.tsv", encoding="utf-8") as fh:
        for line in fh:
            vid_str, _, surface = line.rstrip("\n").partition("\t")
            if int(vid_str) != len(surfaces):
                raise CorruptIndex(f"vocab.tsv ids out of order at {vid_str}")
            surfaces.append(surface)
    if len(surfaces) != manifest["counts"]["vocabulary"]:
        raise CorruptIndex("vocab.tsv row count disagrees with manifest")

    matrix, provider_name = load_vectors(path / "vectors.f32")
    if provider_name != manifest["provider"]:
        raise CorruptIndex("vectors.f32 provider disagrees with manifest")
    if matrix.shape != (len(surfaces), manifest["dim"]):
        raise CorruptIndex("vectors.f32 shape disagrees with manifest")

    relations: list[MechanismRelation] = []
    with open(path / "relations.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                relations.append(MechanismRelation.from_dict(json.loads(line)))
    if len(relations) != manifest["counts"]["relations"]:
        raise CorruptIndex("relations.jsonl row count disagrees with manifest")

    index = KbIndex(
        Vocabulary(surfaces),
        matrix.astype(np.float64),
        relations,
        manifest,
    )

    postings1, postings2 = _decode_postings(
        (path / "postings.bin").read_bytes(), len(surfaces)
    )
    for vid in range(len(surfaces)):
        if not np.array_equal(postings1[vid], index.postings1[vid]) or not np.array_equal(
            postings2[vid], index.postings2[vid]
        ):
            raise CorruptIndex(f"postings.bin disagrees with relations at vocab id {vid}")
    return index

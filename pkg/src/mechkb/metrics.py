"""Evaluation harness: ranking metrics, span/relation matching, agreement.

Ranking metrics consume ranked binary relevance labels. Span matching uses
token-level Rouge-L (LCS F-measure over whitespace tokens of normalized
text) with a strict > threshold. Agreement metrics share one confusion
matrix; the first argument is the reference annotator for the asymmetric
ones (f1, balanced_accuracy).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import sqrt

from .errors import (
    DegenerateMarginals,
    EmptySpan,
    InvalidK,
    LengthMismatch,
    NoPositives,
)
from .normalize import DEFAULT_CONFIG, NormalizationConfig, normalize_or_empty
from .schema import RelationClass


def precision_at_k(labels, k: int) -> float:
    """Fraction of relevant items among the top k of a ranked binary list."""
    if not 1 <= k <= len(labels):
        raise InvalidK(f"k must be in [1, {len(labels)}], got {k}")
    return sum(labels[:k]) / k


def precision_recall_points(labels) -> list[tuple[float, float]]:
    """One (recall, precision) point per rank prefix of a ranked binary list."""
    total = sum(labels)
    if total == 0:
        raise NoPositives("precision/recall points need at least one positive label")
    points: list[tuple[float, float]] = []
    tp = 0
    for rank, label in enumerate(labels, start=1):
        tp += label
        points.append((tp / total, tp / rank))
    return points


def _lcs_length(a, b) -> int:
    # classic O(len(a)*len(b)) DP, one rolling row
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[len(b)]


def rouge_l_f(candidate_tokens, reference_tokens) -> float:
    """LCS-based F1 (beta = 1): P = LCS/|cand|, R = LCS/|ref|; 0 when LCS = 0."""
    if not candidate_tokens or not reference_tokens:
        raise EmptySpan("rouge_l_f needs non-empty token lists on both sides")
    lcs = _lcs_length(list(candidate_tokens), list(reference_tokens))
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate_tokens)
    r = lcs / len(reference_tokens)
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class MatchConfig:
    """Span-match predicate parameter: Rouge-L must strictly exceed this."""

    rouge_l_threshold: float = 0.5
    normalization: NormalizationConfig = DEFAULT_CONFIG

    def __post_init__(self) -> None:
        if not 0.0 < self.rouge_l_threshold < 1.0:
            raise ValueError("rouge_l_threshold must be in (0,1)")


DEFAULT_MATCH = MatchConfig()


def _span_tokens(span: str, config: MatchConfig) -> list[str]:
    normalized = normalize_or_empty(span, config.normalization)
    if not normalized:
        raise EmptySpan(f"span is empty after normalization: {span!r}")
    return normalized.split()


def span_match(s1: str, s2: str, config: MatchConfig = DEFAULT_MATCH) -> bool:
    """True when Rouge-L over normalized whitespace tokens strictly exceeds
    the configured threshold (F exactly at the threshold does not match)."""
    f = rouge_l_f(_span_tokens(s1, config), _span_tokens(s2, config))
    return f > config.rouge_l_threshold


def _as_class(value) -> str:
    if isinstance(value, RelationClass):
        return value.value
    return str(value)


def _prf(tp: int, n_pred: int, n_gold: int) -> float:
    if n_pred == 0 and n_gold == 0:
        return 1.0
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    if p + r == 0.0:
        return 0.0
    return 2 * p * r / (p + r)


def relation_scores(predicted, gold, config: MatchConfig = DEFAULT_MATCH) -> dict:
    """Entity/relation detection and classification F1.

    predicted and gold are sequences of (arg1, arg2, class) triples. A
    prediction detects a gold relation when both arguments span-match
    position-wise; classification additionally requires equal classes.
    Matching is greedy one-to-one in prediction order. Entity detection
    compares the flattened argument span lists the same way.
    """
    pred = [(p[0], p[1], _as_class(p[2])) for p in predicted]
    gld = [(g[0], g[1], _as_class(g[2])) for g in gold]

    pred_entities = [span for p in pred for span in (p[0], p[1])]
    gold_entities = [span for g in gld for span in (g[0], g[1])]
    used = [False] * len(gold_entities)
    entity_tp = 0
    for span in pred_entities:
        for j, gspan in enumerate(gold_entities):
            if not used[j] and span_match(span, gspan, config):
                used[j] = True
                entity_tp += 1
                break

    used = [False] * len(gld)
    detect_tp = 0
    classify_tp = 0
    for p in pred:
        for j, g in enumerate(gld):
            if (
                not used[j]
                and span_match(p[0], g[0], config)
                and span_match(p[1], g[1], config)
            ):
                used[j] = True
                detect_tp += 1
                if p[2] == g[2]:
                    classify_tp += 1
                break

    return {
        "entity_detection_f1": _prf(entity_tp, len(pred_entities), len(gold_entities)),
        "relation_detection_f1": _prf(detect_tp, len(pred), len(gld)),
        "relation_classification_f1": _prf(classify_tp, len(pred), len(gld)),
    }


def _check_pair(a, b) -> None:
    if len(a) != len(b) or len(a) == 0:
        raise LengthMismatch(
            f"label vectors must have equal non-zero length: {len(a)} vs {len(b)}"
        )
    for v in list(a) + list(b):
        if v not in (0, 1):
            raise ValueError(f"labels must be binary 0/1, got {v!r}")


def cohen_kappa(a, b) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e) for binary labels.

    When chance agreement p_e is 1 (both annotators constant and equal)
    kappa is defined as 1.0; p_e = 1 with differing labels is degenerate.
    """
    _check_pair(a, b)
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    pa1 = sum(a) / n
    pb1 = sum(b) / n
    p_e = pa1 * pb1 + (1 - pa1) * (1 - pb1)
    if p_e == 1.0:
        if list(a) == list(b):
            return 1.0
        raise DegenerateMarginals("chance agreement is 1 but labels differ")
    return (p_o - p_e) / (1 - p_e)


def agreement_suite(a, b) -> dict:
    """Accuracy, F1, balanced accuracy, MCC, and kappa from one confusion
    matrix. The first vector is the reference annotator. MCC is 0 by
    convention when any marginal is zero."""
    _check_pair(a, b)
    tp = sum(1 for x, y in zip(a, b) if x == 1 and y == 1)
    fn = sum(1 for x, y in zip(a, b) if x == 1 and y == 0)
    fp = sum(1 for x, y in zip(a, b) if x == 0 and y == 1)
    tn = sum(1 for x, y in zip(a, b) if x == 0 and y == 0)
    n = tp + fn + fp + tn

    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    tpr = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    balanced_accuracy = (tpr + tnr) / 2
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / sqrt(denom) if denom else 0.0
    return {
        "accuracy": accuracy,
        "f1": f1,
        "balanced_accuracy": balanced_accuracy,
        "mcc": mcc,
        "kappa": cohen_kappa(a, b),
    }


LABEL_COLUMNS = ("query_id", "rank", "relation_id", "label")


def read_label_csv(path) -> dict[str, list[tuple[int, str, int]]]:
    """Read a canonical label CSV into query_id -> [(rank, relation_id, label)]
    sorted by rank. Raises ValueError naming any missing column."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for column in LABEL_COLUMNS:
            if column not in fields:
                raise ValueError(f"labels CSV missing column: {column}")
        by_query: dict[str, list[tuple[int, str, int]]] = {}
        for row in reader:
            label = int(row["label"])
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {row['label']!r}")
            by_query.setdefault(row["query_id"], []).append(
                (int(row["rank"]), row["relation_id"], label)
            )
    for items in by_query.values():
        items.sort(key=lambda t: t[0])
        ranks = [t[0] for t in items]
        if len(set(ranks)) != len(ranks):
            raise ValueError("duplicate rank within one query")
    return by_query

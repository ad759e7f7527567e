"""
Evaluation toolkit: ranking quality, span matching, annotator agreement
=======================================================================

Run from the repository root after `pip install -e .`:

    python3 demos/evaluation_metrics.py
"""

from mechkb.metrics import (
    agreement_suite,
    cohen_kappa,
    precision_at_k,
    precision_recall_points,
    relation_scores,
    rouge_l_f,
    span_match,
)

# ranking metrics work over binary relevance labels in rank order
labels = [1, 0, 1, 1, 0, 1]
print("labels:", labels)
print("P@1 =", precision_at_k(labels, 1))
print("P@3 =", precision_at_k(labels, 3))
print("P@6 =", round(precision_at_k(labels, 6), 4))

# one (recall, precision) point per rank prefix, ready for a PR curve
print("\nPR points:")
for recall, precision in precision_recall_points(labels):
    print(f"  recall={recall:.3f}  precision={precision:.3f}")

# span matching is Rouge-L (LCS F1) over normalized tokens, strict > 0.5:
# sharing one of two tokens gives F = 0.5 exactly, which does NOT match
print("\nrouge_l_f(['warm','climate'], ['warm','winter']) =",
      rouge_l_f(["warm", "climate"], ["warm", "winter"]))
print("span_match('warm climate', 'warm winter') =",
      span_match("warm climate", "warm winter"))
print("span_match('the novel coronavirus', 'novel coronavirus') =",
      span_match("the novel coronavirus", "novel coronavirus"))

# relation-level precision/recall/F1 with greedy one-to-one alignment;
# classification additionally requires the class to agree
gold = [
    ("ivermectin", "viral replication", "DIRECT"),
    ("warm climate", "coronavirus", "INDIRECT"),
    ("zinc", "immune response", "INDIRECT"),
]
predicted = [
    ("ivermectin", "viral replication", "DIRECT"),
    ("warm climate", "coronavirus", "DIRECT"),  # right pair, wrong class
]
print("\nrelation_scores(predicted, gold):")
for name, value in relation_scores(predicted, gold).items():
    print(f"  {name:28s} {value:.4f}")

# chance-corrected agreement between two annotators over the same ranking
reference = [1, 1, 0, 0, 1, 0, 1, 1]
second = [1, 0, 0, 1, 1, 0, 1, 0]
print("\ncohen_kappa =", round(cohen_kappa(reference, second), 4))
print("full agreement suite:")
for name, value in agreement_suite(reference, second).items():
    print(f"  {name:20s} {value:.4f}")

"""ROUGE-1/2/L over opaque token sequences.

No stemming or stopword handling: tokens are compared verbatim. N-gram
overlap uses clipped (multiset) counts; ROUGE-L uses dynamic-programming
LCS. Recall is the headline number, but precision and F1 are always
computed alongside it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int) -> RougeScore:
    """Clipped n-gram overlap recall/precision/F1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not reference:
        raise ValueError("reference must be nonempty")
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    ref_total = sum(ref.values())
    cand_total = sum(cand.values())
    recall = overlap / ref_total if ref_total else 0.0
    precision = overlap / cand_total if cand_total else 0.0
    return RougeScore(recall, precision, _f1(precision, recall))


def _lcs_length(a, b) -> int:
    # single-row DP over the shorter second dimension
    if len(b) > len(a):
        a, b = b, a
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l(candidate, reference) -> RougeScore:
    """Longest-common-subsequence recall/precision/F1."""
    if not reference:
        raise ValueError("reference must be nonempty")
    lcs = _lcs_length(list(candidate), list(reference))
    recall = lcs / len(reference)
    precision = lcs / len(candidate) if candidate else 0.0
    return RougeScore(recall, precision, _f1(precision, recall))


def corpus_rouge(pairs) -> dict:
    """Unweighted mean ROUGE-1/2/L over (candidate, reference) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no candidate/reference pairs to score")
    scores = {"rouge1": [], "rouge2": [], "rougeL": []}
    for cand, ref in pairs:
        scores["rouge1"].append(rouge_n(cand, ref, 1))
        scores["rouge2"].append(rouge_n(cand, ref, 2))
        scores["rougeL"].append(rouge_l(cand, ref))
    out = {}
    for key, vals in scores.items():
        out[key] = RougeScore(
            recall=sum(s.recall for s in vals) / len(vals),
            precision=sum(s.precision for s in vals) / len(vals),
            f1=sum(s.f1 for s in vals) / len(vals),
        )
    return out

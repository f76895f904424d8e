"""Tagging quality metrics and their stable text rendering.

Token accuracy, per-tag precision/recall/F1, macro-F1 over tags with
gold support, a confusion matrix, and the rule satisfaction rate (the
fraction of rule firings whose predicted tag matches the consequent).
The JSON rendering has a fixed key order and 6-decimal reals so runs
are byte-comparable; the schema is documented in docs/metrics.md.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import LengthMismatch
from .rules import RuleSet, collect_firings
from .score import Melody, StateSequence, TaggedCorpus, TagSet


@dataclass(frozen=True)
class TagScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True, eq=False)
class Metrics:
    """Evaluation bundle; rows of ``counts`` are gold, columns predicted."""

    token_accuracy: float
    per_tag: tuple[TagScore, ...]
    macro_f1: float
    counts: np.ndarray
    rule_satisfaction: float | None = None


def evaluate(pred: Sequence[StateSequence], gold: TaggedCorpus) -> Metrics:
    """Micro accuracy, per-tag P/R/F1, and macro-F1 over supported tags."""
    if len(pred) != len(gold.entries):
        raise LengthMismatch(
            f"{len(pred)} predictions for {len(gold.entries)} gold entries")
    h = len(gold.tagset)
    counts = np.zeros((h, h), dtype=int)
    for sequence, (melody, states) in zip(pred, gold):
        if len(sequence) != len(states):
            raise LengthMismatch(
                f"prediction length {len(sequence)} != gold length {len(states)}")
        for predicted, actual in zip(sequence, states):
            counts[actual, predicted] += 1
    total = counts.sum()
    if total == 0:
        raise LengthMismatch("no tokens to evaluate")
    accuracy = float(np.trace(counts) / total)
    per_tag = []
    f1_of_supported = []
    for k in range(h):
        true_positive = counts[k, k]
        predicted_k = counts[:, k].sum()
        gold_k = counts[k, :].sum()
        precision = float(true_positive / predicted_k) if predicted_k else 0.0
        recall = float(true_positive / gold_k) if gold_k else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        per_tag.append(TagScore(precision, recall, f1))
        if gold_k:
            f1_of_supported.append(f1)
    macro_f1 = float(np.mean(f1_of_supported)) if f1_of_supported else 0.0
    return Metrics(token_accuracy=accuracy, per_tag=tuple(per_tag),
                   macro_f1=macro_f1, counts=counts)


def rule_firing_counts(pred: StateSequence, melody: Melody, rules: RuleSet,
                       base: StateSequence) -> tuple[int, int]:
    """(firings satisfied by pred, total firings) for one melody."""
    firings = collect_firings(rules, melody, base)
    matched = sum(1 for f in firings if pred[f.target] == f.tag_index)
    return matched, len(firings)


def rule_satisfaction(pred: StateSequence, melody: Melody, rules: RuleSet,
                      base: StateSequence) -> float:
    """Fraction of firings whose target got the consequent tag; 1.0 if none."""
    matched, total = rule_firing_counts(pred, melody, rules, base)
    return matched / total if total else 1.0


def with_rule_satisfaction(metrics: Metrics, value: float) -> Metrics:
    return replace(metrics, rule_satisfaction=value)


def format_metrics(metrics: Metrics, tagset: TagSet) -> str:
    """Render as JSON text with fixed key order and %.6f reals."""
    lines = ["{"]
    lines.append(f'  "token_accuracy": {metrics.token_accuracy:.6f},')
    lines.append(f'  "macro_f1": {metrics.macro_f1:.6f},')
    if metrics.rule_satisfaction is None:
        lines.append('  "rule_satisfaction": null,')
    else:
        lines.append(
            f'  "rule_satisfaction": {metrics.rule_satisfaction:.6f},')
    lines.append('  "per_tag": {')
    for k, tag in enumerate(tagset):
        score = metrics.per_tag[k]
        comma = "," if k < len(tagset) - 1 else ""
        lines.append(
            f'    "{tag}": {{"precision": {score.precision:.6f}, '
            f'"recall": {score.recall:.6f}, "f1": {score.f1:.6f}}}{comma}')
    lines.append("  },")
    lines.append('  "counts": [')
    h = metrics.counts.shape[0]
    for k in range(h):
        row = ", ".join(str(int(c)) for c in metrics.counts[k])
        comma = "," if k < h - 1 else ""
        lines.append(f"    [{row}]{comma}")
    lines.append("  ]")
    lines.append("}")
    return "".join(f"{line}\n" for line in lines)

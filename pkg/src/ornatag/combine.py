"""Fusion of the tagger's predictions with rule-derived weights.

The prediction matrix p2 (posterior marginals) and the weight matrix
p1 (rule multipliers) share the H x T grid; their Hadamard product is
the combined score matrix.  Decoding is an independent per-column
argmax, smallest tag index first among ties: the rule pass reweights
positions, it does not re-run sequence decoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .rules import Firing, RuleSet, WeightMatrix, build_weight_matrix
from .score import Melody, StateSequence, TagSet
from .tagger import PredictionMatrix, TaggerModel, posterior_marginals, viterbi_decode


@dataclass(frozen=True, eq=False)
class CombinedMatrix:
    """Elementwise product p1 * p2; nonnegative, unnormalized."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError(f"expected a 2-d array, got ndim={values.ndim}")
        if np.any(values < 0):
            raise ValueError("combined scores must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def combine(p1: WeightMatrix, p2: PredictionMatrix) -> CombinedMatrix:
    """Hadamard product of the weight and prediction matrices."""
    if p1.shape != p2.shape:
        raise ShapeMismatch(
            f"weight matrix {p1.shape} vs prediction matrix {p2.shape}")
    return CombinedMatrix(p1.values * p2.values)


def decode(combined: CombinedMatrix, tagset: TagSet) -> StateSequence:
    """Per-column argmax; the smallest index wins a tied column."""
    H, _ = combined.shape
    if H != len(tagset):
        raise ShapeMismatch(
            f"matrix has {H} rows but the tag set has {len(tagset)} tags")
    return StateSequence(tuple(
        int(k) for k in np.argmax(combined.values, axis=0)))


@dataclass(frozen=True, eq=False)
class TagResult:
    """Everything the pipeline produced, for output and audit."""

    final: StateSequence
    base: StateSequence
    p1: WeightMatrix
    p2: PredictionMatrix
    combined: CombinedMatrix
    firing_log: tuple[Firing, ...]


def tag_with_knowledge(model: TaggerModel, rules: RuleSet,
                       melody: Melody) -> TagResult:
    """Full pipeline: marginals, base Viterbi path, rule pass, fusion.

    Type 2 rules read the base path once; the fused output is never
    fed back.  With an empty ruleset p1 stays all ones and the final
    sequence is the per-position argmax of p2.
    """
    if rules.tagset != model.tagset:
        raise ShapeMismatch("ruleset is bound to a different tag set "
                            "than the model")
    p2 = posterior_marginals(model, melody)
    base = viterbi_decode(model, melody)
    firing_log: list[Firing] = []
    p1 = build_weight_matrix(rules, melody, base, firing_log)
    fused = combine(p1, p2)
    final = decode(fused, model.tagset)
    return TagResult(final=final, base=base, p1=p1, p2=p2, combined=fused,
                     firing_log=tuple(firing_log))

"""Logic rules over melodies: a small DSL, evaluation, and the weight matrix.

One rule per line::

    IF duration(@t) > 3 THEN tag(@t) = trills WEIGHT 2.0
    IF pred(@t-1) == trills THEN tag(@t) = none WEIGHT 0.5

The antecedent is a conjunction of clauses.  Observation clauses
compare a note feature (``duration``, ``midi``, ``octave``, ``step``,
``position``) at a position relative to the anchor ``@t``; state
clauses (``pred``) test the base prediction at such a position.  A rule
with at least one state clause is Type 2, otherwise Type 1.

A file may open with ``H1 <w>`` / ``H2 <w>`` directives giving the
default confidences for Type 1 and Type 2 rules (2.0 each when
absent); an explicit ``WEIGHT`` overrides the default.  ``#`` starts a
comment at the beginning of a line or after whitespace.

The weight matrix starts as all ones, H rows (tags) by T columns
(positions).  Each rule, in source order, multiplies the cell of its
consequent tag at ``anchor + consequent offset`` by its weight wherever
its antecedent holds; out-of-range targets are skipped.  Weights below
1 suppress, above 1 boost, and firings compose multiplicatively, so
rule order never changes the result.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import NonpositiveWeight, RuleSyntaxError, UnknownFeature, UnknownTag
from .score import Melody, StateSequence, TagSet, iter_data_lines

FEATURES = ("duration", "midi", "octave", "step", "position")

_COMPARE = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}

_KEYWORDS = frozenset({"IF", "AND", "THEN", "WEIGHT"})


@dataclass(frozen=True)
class ObsClause:
    """Feature comparison against a literal at an offset from the anchor."""

    feature: str
    offset: int
    comparator: str
    value: Union[Fraction, int, str]


@dataclass(frozen=True)
class StateClause:
    """Base-prediction test at an offset from the anchor."""

    offset: int
    comparator: str
    tag: str
    tag_index: int


Clause = Union[ObsClause, StateClause]


@dataclass(frozen=True)
class Rule:
    """One parsed rule; Type 2 iff any clause reads the prediction."""

    clauses: tuple[Clause, ...]
    consequent_offset: int
    consequent_tag: str
    consequent_index: int
    weight: float | None
    source_line: int = field(compare=False)

    def __post_init__(self):
        if not self.clauses:
            raise ValueError("a rule needs at least one clause")
        if self.weight is not None and self.weight <= 0:
            raise ValueError(f"weight must be positive: {self.weight}")

    @property
    def rule_class(self) -> int:
        return 2 if any(isinstance(c, StateClause) for c in self.clauses) else 1


@dataclass(frozen=True)
class RuleSet:
    """Rules in source order plus the per-class default confidences."""

    tagset: TagSet
    rules: tuple[Rule, ...]
    h1: float = 2.0
    h2: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.h1 <= 0 or self.h2 <= 0:
            raise ValueError("default confidences must be positive")

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def effective_weight(self, rule: Rule) -> float:
        if rule.weight is not None:
            return rule.weight
        return self.h1 if rule.rule_class == 1 else self.h2


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Strictly positive H x T multipliers, rows = tags, columns = positions."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError(f"expected a 2-d array, got ndim={values.ndim}")
        if not np.all(values > 0):
            raise ValueError("weight matrix entries must be strictly positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Firing:
    """One recorded rule application, for explanation output."""

    rule_line: int
    anchor: int
    target: int
    tag: str
    tag_index: int
    weight: float


# -- scanner -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<POSREF>@t(?:[+-]\d+)?)"
    r"|(?P<NUMBER>\d+/\d+|\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)"
    r"|(?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<OP>==|!=|>=|<=|>|<|=)"
    r"|(?P<LPAREN>\()"
    r"|(?P<RPAREN>\))"
    r"|(?P<WS>[ \t]+)")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    column: int


def _scan(data: str, lineno: int) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(data):
        match = _TOKEN_RE.match(data, pos)
        if not match:
            raise RuleSyntaxError(
                f"unexpected character {data[pos]!r}",
                line=lineno, column=pos + 1, expected="a rule token")
        kind = match.lastgroup
        if kind != "WS":
            tokens.append(_Token(kind, match.group(), pos + 1))
        pos = match.end()
    return tokens


class _LineParser:
    """Recursive-descent parser for one rule line."""

    def __init__(self, tokens: list[_Token], lineno: int, tagset: TagSet):
        self.tokens = tokens
        self.lineno = lineno
        self.tagset = tagset
        self.i = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, expected: str) -> _Token:
        token = self.peek()
        if token is None:
            end = self.tokens[-1].column + len(self.tokens[-1].text)
            raise RuleSyntaxError(
                "unexpected end of rule",
                line=self.lineno, column=end, expected=expected)
        self.i += 1
        return token

    def expect(self, kind: str, text: str | None = None,
               expected: str | None = None) -> _Token:
        label = expected or (f"'{text}'" if text else kind.lower())
        token = self.next(label)
        if token.kind != kind or (text is not None and token.text != text):
            raise RuleSyntaxError(
                f"unexpected token {token.text!r}",
                line=self.lineno, column=token.column, expected=label)
        return token

    def fail(self, token: _Token, expected: str):
        raise RuleSyntaxError(
            f"unexpected token {token.text!r}",
            line=self.lineno, column=token.column, expected=expected)

    # grammar productions

    def parse_rule(self) -> Rule:
        self.expect("IDENT", "IF")
        clauses = [self.parse_clause()]
        while True:
            token = self.peek()
            if token and token.kind == "IDENT" and token.text == "AND":
                self.i += 1
                clauses.append(self.parse_clause())
            else:
                break
        self.expect("IDENT", "THEN")
        self.expect("IDENT", "tag")
        self.expect("LPAREN")
        offset = self.parse_posref()
        self.expect("RPAREN")
        self.expect("OP", "=")
        tag_token = self.expect("IDENT", expected="a tag name")
        tag = tag_token.text
        if tag not in self.tagset:
            raise UnknownTag(
                f"unknown tag {tag!r}", token=tag,
                line=self.lineno, column=tag_token.column)
        weight = None
        token = self.peek()
        if token is not None:
            if token.kind == "IDENT" and token.text == "WEIGHT":
                self.i += 1
                weight = self.parse_weight()
                token = self.peek()
            if token is not None:
                self.fail(token, "end of rule")
        return Rule(
            clauses=tuple(clauses),
            consequent_offset=offset,
            consequent_tag=tag,
            consequent_index=self.tagset.index(tag),
            weight=weight,
            source_line=self.lineno)

    def parse_clause(self) -> Clause:
        head = self.next("a feature or 'pred'")
        if head.kind != "IDENT" or head.text in _KEYWORDS:
            self.fail(head, "a feature or 'pred'")
        if head.text == "pred":
            self.expect("LPAREN")
            offset = self.parse_posref()
            self.expect("RPAREN")
            op = self.expect("OP", expected="'==' or '!='")
            if op.text not in ("==", "!="):
                self.fail(op, "'==' or '!='")
            tag_token = self.expect("IDENT", expected="a tag name")
            tag = tag_token.text
            if tag not in self.tagset:
                raise UnknownTag(
                    f"unknown tag {tag!r}", token=tag,
                    line=self.lineno, column=tag_token.column)
            return StateClause(offset, op.text, tag, self.tagset.index(tag))
        if head.text not in FEATURES:
            raise UnknownFeature(
                f"unknown feature {head.text!r}", token=head.text,
                line=self.lineno, column=head.column)
        feature = head.text
        self.expect("LPAREN")
        offset = self.parse_posref()
        self.expect("RPAREN")
        op = self.expect("OP", expected="a comparator")
        if op.text == "=":
            self.fail(op, "a comparator ('==' for equality)")
        if feature == "step" and op.text not in ("==", "!="):
            self.fail(op, "'==' or '!=' (step only supports equality tests)")
        value = self.parse_literal(feature)
        return ObsClause(feature, offset, op.text, value)

    def parse_posref(self) -> int:
        token = self.expect("POSREF", expected="'@t', '@t+INT', or '@t-INT'")
        return int(token.text[2:]) if len(token.text) > 2 else 0

    def parse_literal(self, feature: str):
        if feature == "step":
            token = self.next("a step letter")
            letter = token.text.upper()
            if token.kind != "IDENT" or len(letter) != 1 or letter not in "CDEFGAB":
                self.fail(token, "a step letter (C through B)")
            return letter
        token = self.expect("NUMBER", expected="a numeric literal")
        if feature == "duration":
            if "/" in token.text:
                num, den = token.text.split("/")
                if int(den) == 0:
                    self.fail(token, "a nonzero denominator")
                return Fraction(int(num), int(den))
            return Fraction(token.text)
        if not token.text.isdigit():
            self.fail(token, f"an integer literal ({feature} is integral)")
        return int(token.text)

    def parse_weight(self) -> float:
        token = self.expect("NUMBER", expected="a positive number")
        value = _number_to_float(token.text)
        if value <= 0:
            raise NonpositiveWeight(
                f"weight must be positive: {token.text}",
                token=token.text, line=self.lineno, column=token.column)
        return value


def _number_to_float(text: str) -> float:
    if "/" in text:
        num, den = text.split("/")
        return int(num) / int(den)
    return float(text)


def parse_rules(text: str, tagset: TagSet) -> RuleSet:
    """Parse a ruleset file; rule order and line numbers are preserved."""
    h1 = 2.0
    h2 = 2.0
    rules: list[Rule] = []
    for lineno, data, blank in iter_data_lines(text):
        if blank:
            continue
        tokens = _scan(data, lineno)
        if not tokens:
            continue
        head = tokens[0]
        if head.kind == "IDENT" and head.text in ("H1", "H2"):
            if rules:
                raise RuleSyntaxError(
                    f"{head.text} directive after the first rule",
                    line=lineno, column=head.column,
                    expected="directives before all rules")
            if len(tokens) != 2 or tokens[1].kind != "NUMBER":
                raise RuleSyntaxError(
                    f"malformed {head.text} directive",
                    line=lineno, column=head.column + len(head.text),
                    expected=f"{head.text} <positive number>")
            value = _number_to_float(tokens[1].text)
            if value <= 0:
                raise NonpositiveWeight(
                    f"{head.text} must be positive: {tokens[1].text}",
                    token=tokens[1].text, line=lineno, column=tokens[1].column)
            if head.text == "H1":
                h1 = value
            else:
                h2 = value
            continue
        rules.append(_LineParser(tokens, lineno, tagset).parse_rule())
    return RuleSet(tagset=tagset, rules=tuple(rules), h1=h1, h2=h2)


def _format_posref(offset: int) -> str:
    if offset == 0:
        return "@t"
    return f"@t+{offset}" if offset > 0 else f"@t-{-offset}"


def _format_clause(clause: Clause) -> str:
    if isinstance(clause, StateClause):
        return f"pred({_format_posref(clause.offset)}) {clause.comparator} {clause.tag}"
    return (f"{clause.feature}({_format_posref(clause.offset)}) "
            f"{clause.comparator} {clause.value}")


def serialize_rules(ruleset: RuleSet) -> str:
    """Canonical ruleset text; reparsing yields an equal RuleSet."""
    lines = [f"H1 {ruleset.h1!r}", f"H2 {ruleset.h2!r}"]
    for rule in ruleset:
        antecedent = " AND ".join(_format_clause(c) for c in rule.clauses)
        line = (f"IF {antecedent} THEN tag({_format_posref(rule.consequent_offset)})"
                f" = {rule.consequent_tag}")
        if rule.weight is not None:
            line += f" WEIGHT {rule.weight!r}"
        lines.append(line)
    return "".join(f"{line}\n" for line in lines)


# -- evaluation ------------------------------------------------------------------


def _feature_value(melody: Melody, feature: str, position: int):
    if feature == "duration":
        return melody[position].duration_ql
    if feature == "midi":
        return melody[position].midi
    if feature == "octave":
        return melody[position].octave
    if feature == "step":
        return melody[position].step
    if feature == "position":
        return position
    raise UnknownFeature(f"unknown feature {feature!r}", token=feature)


def evaluate_antecedent(rule: Rule, melody: Melody, base: StateSequence,
                        t: int) -> bool:
    """True iff every clause holds with the anchor bound to position ``t``.

    A clause whose resolved position falls outside the melody makes the
    whole antecedent false, so rules degrade silently at boundaries.
    """
    T = len(melody)
    for clause in rule.clauses:
        position = t + clause.offset
        if not 0 <= position < T:
            return False
        if isinstance(clause, StateClause):
            actual = base[position]
            if not _COMPARE[clause.comparator](actual, clause.tag_index):
                return False
        else:
            actual = _feature_value(melody, clause.feature, position)
            if not _COMPARE[clause.comparator](actual, clause.value):
                return False
    return True


def collect_firings(ruleset: RuleSet, melody: Melody,
                    base: StateSequence) -> list[Firing]:
    """Every (rule, anchor) whose antecedent holds and target is in range.

    Rules are visited in source order, anchors left to right; this is
    the sole definition of "the rule fired", shared by weight-matrix
    construction and rule-satisfaction metrics.
    """
    T = len(melody)
    firings = []
    for rule in ruleset:
        weight = ruleset.effective_weight(rule)
        for t in range(T):
            if not evaluate_antecedent(rule, melody, base, t):
                continue
            target = t + rule.consequent_offset
            if not 0 <= target < T:
                continue
            firings.append(Firing(
                rule_line=rule.source_line, anchor=t, target=target,
                tag=rule.consequent_tag, tag_index=rule.consequent_index,
                weight=weight))
    return firings


def build_weight_matrix(ruleset: RuleSet, melody: Melody, base: StateSequence,
                        firing_log: list[Firing] | None = None) -> WeightMatrix:
    """Apply every rule at every anchor position.

    Starts from all ones; each firing multiplies one cell, so the
    result is independent of rule order.  When ``firing_log`` is given,
    every applied firing is appended to it in source-rule order.
    """
    H = len(ruleset.tagset)
    T = len(melody)
    values = np.ones((H, T))
    firings = collect_firings(ruleset, melody, base)
    for firing in firings:
        values[firing.tag_index, firing.target] *= firing.weight
    if firing_log is not None:
        firing_log.extend(firings)
    return WeightMatrix(values)

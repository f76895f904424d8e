"""Domain types for notes, melodies, tag sets, and tagged corpora.

Notes carry an exact rational duration in quarter lengths (a quarter
note is 1 ql, a whole note 4 ql) and a chromatic pitch given as
step/alteration/octave.  The canonical token grammar is::

    step [accidental] octave ':' duration      e.g.  C1:4   Bb3:2   C#4:3/2

with accidental one of ``#``, ``##``, ``b``, ``bb``, octave a single
digit 0-9, and duration ``int`` or ``int/int``.  A compact legacy form
(``C14`` = step, octave digit, integer duration) is accepted by
:func:`parse_legacy_note` for old data files.

All types are immutable after construction and safe to share across
threads; the parsers and serializers are pure functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

from .errors import (
    EmptyCorpus,
    InvalidDuration,
    InvalidOctave,
    InvalidStep,
    LengthMismatch,
    MalformedToken,
    UnknownTag,
)

STEPS = "CDEFGAB"

_STEP_SEMITONE = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

MIDI_MIN = 12
MIDI_MAX = 127

_TAG_RE = re.compile(r"[a-z0-9_]+\Z")


def midi_number(step: str, alteration: int, octave: int) -> int:
    """MIDI note number with C4 = 60 (so C0 = 12)."""
    return (octave + 1) * 12 + _STEP_SEMITONE[step] + alteration


@dataclass(frozen=True)
class Note:
    """One note: chromatic pitch plus exact quarter-length duration."""

    step: str
    alteration: int
    octave: int
    duration_ql: Fraction

    def __post_init__(self):
        if self.step not in _STEP_SEMITONE:
            raise ValueError(f"step must be one of {STEPS}, got {self.step!r}")
        if not -2 <= self.alteration <= 2:
            raise ValueError(f"alteration outside [-2, 2]: {self.alteration}")
        if not 0 <= self.octave <= 9:
            raise ValueError(f"octave outside [0, 9]: {self.octave}")
        if not isinstance(self.duration_ql, Fraction):
            object.__setattr__(self, "duration_ql", Fraction(self.duration_ql))
        if self.duration_ql <= 0:
            raise ValueError(f"duration must be positive: {self.duration_ql}")
        if not MIDI_MIN <= self.midi <= MIDI_MAX:
            raise ValueError(f"pitch outside MIDI range [12, 127]: {self.midi}")

    @property
    def midi(self) -> int:
        return midi_number(self.step, self.alteration, self.octave)


@dataclass(frozen=True)
class Melody:
    """An observation sequence: one or more notes, indexed 0..T-1."""

    notes: tuple[Note, ...]

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        if len(self.notes) < 1:
            raise ValueError("a melody needs at least one note")

    def __len__(self) -> int:
        return len(self.notes)

    def __iter__(self) -> Iterator[Note]:
        return iter(self.notes)

    def __getitem__(self, t: int) -> Note:
        return self.notes[t]


@dataclass(frozen=True)
class TagSet:
    """Ordered technique tags; position in the file defines the index.

    By convention index 0 is the "no technique" tag in shipped tag
    sets (decoding ties break toward low indices), but the code does
    not enforce that.
    """

    tags: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.tags) < 2:
            raise ValueError("a tag set needs at least 2 tags")
        if len(set(self.tags)) != len(self.tags):
            raise ValueError("tags must be distinct")
        for tag in self.tags:
            if not _TAG_RE.match(tag):
                raise ValueError(
                    f"tag {tag!r} is not lowercase letters/digits/underscores")
        object.__setattr__(
            self, "_index", {tag: i for i, tag in enumerate(self.tags)})

    def __len__(self) -> int:
        return len(self.tags)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tags)

    def __contains__(self, tag: str) -> bool:
        return tag in self._index

    def index(self, tag: str) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise UnknownTag(f"unknown tag {tag!r}", token=tag) from None

    def name(self, index: int) -> str:
        return self.tags[index]


@dataclass(frozen=True)
class StateSequence:
    """Aligned tag indices for one melody."""

    tags: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(int(t) for t in self.tags))
        if any(t < 0 for t in self.tags):
            raise ValueError("tag indices must be nonnegative")

    def __len__(self) -> int:
        return len(self.tags)

    def __iter__(self) -> Iterator[int]:
        return iter(self.tags)

    def __getitem__(self, t: int) -> int:
        return self.tags[t]


@dataclass(frozen=True)
class TaggedCorpus:
    """Melodies with aligned gold state sequences, bound to one tag set."""

    tagset: TagSet
    entries: tuple[tuple[Melody, StateSequence], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        h = len(self.tagset)
        for melody, states in self.entries:
            if len(melody) != len(states):
                raise LengthMismatch(
                    f"melody length {len(melody)} != state length {len(states)}")
            if any(not 0 <= s < h for s in states):
                raise UnknownTag("state index outside the bound tag set")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[Melody, StateSequence]]:
        return iter(self.entries)

    @property
    def token_count(self) -> int:
        return sum(len(m) for m, _ in self.entries)


# -- note token parsing --------------------------------------------------------


def parse_note(token: str) -> Note:
    """Parse a canonical note token such as ``C1:4`` or ``C#4:3/2``."""
    if not token:
        raise MalformedToken("empty note token", token=token, column=1)
    pos = 0
    step = token[0].upper()
    if not token[0].isalpha():
        raise MalformedToken(
            f"expected a step letter: {token!r}", token=token, column=1)
    if step not in _STEP_SEMITONE:
        raise InvalidStep(
            f"step letter outside {STEPS}: {token[0]!r}", token=token, column=1)
    pos = 1
    alteration = 0
    if pos < len(token) and token[pos] in "#b":
        acc = token[pos]
        count = 1
        if pos + 1 < len(token) and token[pos + 1] == acc:
            count = 2
        alteration = count if acc == "#" else -count
        pos += count
    if pos >= len(token) or not token[pos].isdigit():
        raise InvalidOctave(
            f"expected an octave digit: {token!r}", token=token, column=pos + 1)
    octave = int(token[pos])
    pos += 1
    if pos >= len(token) or token[pos] != ":":
        raise MalformedToken(
            f"expected ':' before the duration: {token!r}",
            token=token, column=pos + 1)
    pos += 1
    duration = _parse_duration(token, pos)
    midi = midi_number(step, alteration, octave)
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise InvalidOctave(
            f"pitch outside MIDI range [12, 127]: {token!r}",
            token=token, column=2)
    return Note(step, alteration, octave, duration)


def _parse_duration(token: str, pos: int) -> Fraction:
    match = re.match(r"(\d+)(?:/(\d+))?\Z", token[pos:])
    if not match:
        raise MalformedToken(
            f"expected a duration 'int' or 'int/int': {token!r}",
            token=token, column=pos + 1)
    num = int(match.group(1))
    den = int(match.group(2)) if match.group(2) else 1
    if den == 0:
        raise InvalidDuration(
            f"zero denominator: {token!r}", token=token, column=pos + 1)
    if num == 0:
        raise InvalidDuration(
            f"zero duration: {token!r}", token=token, column=pos + 1)
    return Fraction(num, den)


def parse_legacy_note(token: str) -> Note:
    """Parse the compact legacy form: letter, octave digit, integer ql.

    ``c24`` is step C, octave 2, duration 4 ql.  Alterations and
    fractional durations are not expressible in this form.
    """
    if len(token) < 3:
        raise MalformedToken(
            f"legacy token needs at least 3 characters: {token!r}",
            token=token, column=1)
    if not token[0].isalpha():
        raise MalformedToken(
            f"expected a step letter: {token!r}", token=token, column=1)
    step = token[0].upper()
    if step not in _STEP_SEMITONE:
        raise InvalidStep(
            f"step letter outside {STEPS}: {token[0]!r}", token=token, column=1)
    if not token[1].isdigit():
        raise MalformedToken(
            f"expected an octave digit: {token!r}", token=token, column=2)
    octave = int(token[1])
    tail = token[2:]
    if not tail.isdigit():
        raise MalformedToken(
            f"expected an integer duration tail: {token!r}",
            token=token, column=3)
    duration = int(tail)
    if duration == 0:
        raise InvalidDuration(
            f"zero duration: {token!r}", token=token, column=3)
    midi = midi_number(step, 0, octave)
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise InvalidOctave(
            f"pitch outside MIDI range [12, 127]: {token!r}",
            token=token, column=2)
    return Note(step, 0, octave, Fraction(duration))


def serialize_note(note: Note) -> str:
    """Canonical token for ``note``; inverse of :func:`parse_note`."""
    if note.alteration > 0:
        accidental = "#" * note.alteration
    else:
        accidental = "b" * -note.alteration
    return f"{note.step}{accidental}{note.octave}:{note.duration_ql}"


# -- file formats ----------------------------------------------------------------
#
# All three text formats are line oriented, UTF-8, with '#' comments.
# A comment starts at a '#' that opens the line or follows whitespace;
# the '#' inside a sharp token like C#4:1 is data.  In corpus files a
# *blank* line separates melodies; comment-only lines are skipped
# without acting as separators.

_COMMENT_RE = re.compile(r"(?:^|(?<=\s))#")


def iter_data_lines(text: str) -> Iterator[tuple[int, str, bool]]:
    """Yield (1-based line number, data text, is_blank) per line.

    Comment-only lines are dropped entirely.  ``is_blank`` marks lines
    that were empty before comment stripping.
    """
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if raw.strip() == "":
            yield lineno, "", True
            continue
        data = _COMMENT_RE.split(raw, 1)[0].strip()
        if data == "":
            continue
        yield lineno, data, False


def parse_tagset(text: str) -> TagSet:
    """Read a tag set file: one identifier per line, order = index."""
    tags = []
    for lineno, data, blank in iter_data_lines(text):
        if blank:
            continue
        if not _TAG_RE.match(data):
            raise UnknownTag(
                f"invalid tag identifier {data!r}", token=data, line=lineno)
        if data in tags:
            raise UnknownTag(f"duplicate tag {data!r}", token=data, line=lineno)
        tags.append(data)
    if len(tags) < 2:
        raise EmptyCorpus("a tag set file needs at least 2 tags")
    return TagSet(tuple(tags))


def serialize_tagset(tagset: TagSet) -> str:
    return "".join(f"{tag}\n" for tag in tagset)


def parse_melody(text: str) -> Melody:
    """Read a melody file: whitespace-separated canonical note tokens."""
    notes = []
    for lineno, data, blank in iter_data_lines(text):
        if blank:
            continue
        for token in data.split():
            try:
                notes.append(parse_note(token))
            except (MalformedToken, InvalidStep, InvalidOctave,
                    InvalidDuration) as err:
                err.line = lineno
                raise
    if not notes:
        raise EmptyCorpus("melody file contains no notes")
    return Melody(tuple(notes))


def serialize_melody(melody: Melody) -> str:
    return "".join(f"{serialize_note(n)}\n" for n in melody)


def parse_corpus(text: str, tagset: TagSet) -> TaggedCorpus:
    """Read a CoNLL-style corpus: ``note<TAB>tag`` lines, blank-separated."""
    entries: list[tuple[Melody, StateSequence]] = []
    notes: list[Note] = []
    states: list[int] = []

    def flush():
        if notes:
            entries.append((Melody(tuple(notes)), StateSequence(tuple(states))))
            notes.clear()
            states.clear()

    for lineno, data, blank in iter_data_lines(text):
        if blank:
            flush()
            continue
        fields = data.split("\t")
        if len(fields) == 1:
            # tolerate space-separated pairs, but exactly two fields
            fields = data.split()
        if len(fields) != 2:
            raise LengthMismatch(
                f"expected 'note<TAB>tag', got {data!r}", line=lineno)
        token, tag = fields
        try:
            note = parse_note(token)
        except (MalformedToken, InvalidStep, InvalidOctave, InvalidDuration) as err:
            err.line = lineno
            raise
        if tag not in tagset:
            raise UnknownTag(f"unknown tag {tag!r}", token=tag, line=lineno)
        notes.append(note)
        states.append(tagset.index(tag))
    flush()
    if not entries:
        raise EmptyCorpus("corpus file contains no entries")
    return TaggedCorpus(tagset, tuple(entries))


def serialize_corpus(corpus: TaggedCorpus) -> str:
    blocks = []
    for melody, states in corpus:
        lines = "".join(
            f"{serialize_note(n)}\t{corpus.tagset.name(s)}\n"
            for n, s in zip(melody, states))
        blocks.append(lines)
    return "\n".join(blocks)


def melody_from_tokens(tokens: Iterable[str]) -> Melody:
    """Convenience: build a melody from canonical tokens."""
    return Melody(tuple(parse_note(t) for t in tokens))

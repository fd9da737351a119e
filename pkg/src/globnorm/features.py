"""Declarative feature templates and state feature extraction.

A template is a list of feature groups, one per line of a plain-text
config::

    # name   source    locations         dim  vocab  lookahead
    words    input:form  -3..3           16   -      -
    chars    chars:3     -3..3           8    -      -
    tags     history     1..4            8    -      -

``source`` is one of

* ``input:<column>`` -- a token column (``form`` is the surface word),
* ``chars:<L>``      -- bag of character n-grams up to length L,
* ``history``        -- previously predicted decisions (location j is the
  j-th most recent),
* ``label``          -- dependency label currently attached to a token
  (parsing only).

Token locations are integer offsets from the focus token (``-3..3`` is a
range), or stack/buffer locators for parsing: ``s0`` (stack top), ``b1``
(second buffer token), with child navigation suffixes ``.l1 .l2 .r1 .r2``
(leftmost, second leftmost, rightmost, second rightmost dependent), e.g.
``s0.l1.l1``. ``vocab`` is ``-`` (built from training data) or a path to a
file with one value per line. ``lookahead`` is ``-`` (unlimited) or k: a
token more than k positions right of the focus reads as padding.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .systems import COMPRESSION, PARSING, TAGGING, ArcStandardSystem
from .transitions import Sentence, State, TransitionSystem

PAD, UNK, ROOT_ID = 0, 1, 2
SPECIALS = ("<PAD>", "<UNK>", "<ROOT>")
ROOT_TOKEN = -1  # resolved location of the artificial ROOT

DEFAULT_MAX_NGRAMS = 32


class TemplateError(ValueError):
    pass


class Vocabulary:
    """Value <-> id map with padding, unknown and ROOT ids reserved."""

    def __init__(self, values: Iterable[str] = ()):
        vals = sorted(set(values) - set(SPECIALS))
        self.items = SPECIALS + tuple(vals)
        self._index = {v: i for i, v in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.items == other.items

    def id(self, value: str) -> int:
        return self._index.get(value, UNK)

    @classmethod
    def from_items(cls, items: Sequence[str]) -> "Vocabulary":
        if tuple(items[:len(SPECIALS)]) != SPECIALS:
            raise TemplateError("stored vocabulary lacks the reserved ids")
        return cls(items[len(SPECIALS):])


@dataclass
class FeatureGroup:
    name: str
    source: str
    locations: tuple
    dim: int
    vocab_path: str | None = None
    lookahead: int | None = None
    vocab: Vocabulary | None = field(default=None, compare=False)
    max_ngrams: int = DEFAULT_MAX_NGRAMS
    boundary: bool = True

    @property
    def kind(self) -> str:
        return self.source.split(":", 1)[0]

    @property
    def arg(self) -> str:
        return self.source.split(":", 1)[1] if ":" in self.source else ""

    @property
    def arity(self) -> int:
        return len(self.locations)

    @property
    def bag(self) -> int:
        return self.max_ngrams if self.kind == "chars" else 1

    @property
    def width(self) -> int:
        return self.arity * self.dim


@dataclass
class FeatureTemplate:
    groups: list[FeatureGroup]

    def __post_init__(self):
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise TemplateError("duplicate feature group names")
        if not self.groups:
            raise TemplateError("template has no feature groups")

    @property
    def input_width(self) -> int:
        return sum(g.width for g in self.groups)

    def with_lookahead(self, k: int | None) -> "FeatureTemplate":
        return FeatureTemplate([replace(g, lookahead=k) for g in self.groups])

    def required_columns(self) -> set[str]:
        return {g.arg for g in self.groups if g.kind == "input" and g.arg != "form"}

    def to_text(self) -> str:
        lines = ["# name\tsource\tlocations\tdim\tvocab\tlookahead"]
        for g in self.groups:
            look = "-" if g.lookahead is None else str(g.lookahead)
            lines.append("\t".join([g.name, g.source, ",".join(str(l) for l in g.locations),
                                    str(g.dim), g.vocab_path or "-", look]))
        return "\n".join(lines) + "\n"


# -- parsing the template text -----------------------------------------------

_LOCATOR = re.compile(r"^[sb]\d+(\.[lr][12])*$")
_RANGE = re.compile(r"^([+-]?\d+)\.\.([+-]?\d+)$")


def _parse_locations(text: str, kind: str) -> tuple:
    out: list = []
    for part in text.split(","):
        part = part.strip()
        m = _RANGE.match(part)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            out.extend(range(a, b + 1) if a <= b else range(a, b - 1, -1))
        elif re.fullmatch(r"[+-]?\d+", part):
            out.append(int(part))
        elif _LOCATOR.match(part) and kind != "history":
            out.append(part)
        else:
            raise TemplateError(f"bad location {part!r}")
    if kind == "history" and any(not isinstance(l, int) or l < 1 for l in out):
        raise TemplateError("history locations must be positive integers")
    return tuple(out)


def parse_template(text: str, base_dir: str | Path | None = None, load_vocab: bool = True) -> FeatureTemplate:
    groups = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (4, 5, 6):
            raise TemplateError(f"line {lineno}: expected 4-6 fields, got {len(parts)}")
        name, source, locs, dim = parts[:4]
        vocab = parts[4] if len(parts) > 4 and parts[4] != "-" else None
        look = parts[5] if len(parts) > 5 else "-"
        kind = source.split(":", 1)[0]
        if kind not in ("input", "chars", "history", "label"):
            raise TemplateError(f"line {lineno}: unknown source {source!r}")
        if kind in ("input", "chars") and ":" not in source:
            raise TemplateError(f"line {lineno}: {kind} source needs an argument")
        try:
            group = FeatureGroup(
                name=name, source=source, locations=_parse_locations(locs, kind), dim=int(dim),
                vocab_path=vocab, lookahead=None if look in ("-", "inf") else int(look),
            )
            if kind == "chars":
                int(group.arg)
        except (TemplateError, ValueError) as e:
            raise TemplateError(f"line {lineno}: {e}") from None
        if group.dim < 1 or (group.lookahead is not None and group.lookahead < 0):
            raise TemplateError(f"line {lineno}: dim must be >= 1 and lookahead >= 0")
        if vocab is not None and load_vocab:
            path = Path(vocab) if base_dir is None else Path(base_dir) / vocab
            lines = path.read_text(encoding="utf-8").splitlines()
            group.vocab = Vocabulary(v for v in lines if v)
        groups.append(group)
    return FeatureTemplate(groups)


def load_template(path: str | Path) -> FeatureTemplate:
    path = Path(path)
    return parse_template(path.read_text(encoding="utf-8"), base_dir=path.parent)


_STACK_LOCS = "s0,s1,s2,b0,b1,b2,s0.l1,s0.r1,s0.l2,s0.r2,s1.l1,s1.r1,s1.l2,s1.r2,s0.l1.l1,s0.r1.r1,s1.l1.l1,s1.r1.r1"
_ARC_LOCS = "s0.l1,s0.r1,s0.l2,s0.r2,s1.l1,s1.r1,s1.l2,s1.r2,s0.l1.l1,s0.r1.r1,s1.l1.l1,s1.r1.r1"

DEFAULT_TEMPLATES = {
    TAGGING: f"""
words   input:form  -3..3   16  -  -
chars   chars:3     -3..3   8   -  -
tags    history     1..4    8   -  -
""",
    PARSING: f"""
words   input:form  {_STACK_LOCS}  16  -  -
tags    input:tag   {_STACK_LOCS}  8   -  -
labels  label       {_ARC_LOCS}    8   -  -
""",
    COMPRESSION: """
words   input:form  -3..3   16  -  -
history history     1..4    8   -  -
""",
}


def default_template(task: str) -> FeatureTemplate:
    return parse_template(DEFAULT_TEMPLATES[task])


# -- character n-grams -------------------------------------------------------

def char_ngrams(word: str, max_n: int, boundary: bool = True) -> list[str]:
    """Distinct n-grams of length 1..max_n, boundary-marked variants first."""
    grams = []
    if boundary:
        for n in range(1, min(max_n, len(word)) + 1):
            grams.append("^" + word[:n])
            grams.append(word[-n:] + "$")
    for n in range(1, max_n + 1):
        grams.extend(word[i:i + n] for i in range(len(word) - n + 1))
    return list(dict.fromkeys(grams))


# -- vocabulary building ------------------------------------------------------

def fit_vocabularies(template: FeatureTemplate, sentences: Sequence[Sentence],
                     system: TransitionSystem) -> FeatureTemplate:
    """Attach a vocabulary to every group that lacks one."""
    groups = []
    for g in template.groups:
        g = replace(g)
        if g.vocab is None:
            if g.kind == "input":
                values = {t.get(g.arg) for s in sentences for t in s.tokens}
            elif g.kind == "chars":
                n = int(g.arg)
                values = {c for s in sentences for w in s.forms for c in char_ngrams(w, n, g.boundary)}
            elif g.kind == "history":
                values = {d.name for d in system.decisions}
            else:
                if not isinstance(system, ArcStandardSystem):
                    raise TemplateError("label features need the parsing system")
                values = set(system.labels)
            g.vocab = Vocabulary(values)
        groups.append(g)
    return FeatureTemplate(groups)


# -- extraction ---------------------------------------------------------------

def _children(heads: tuple[int, ...], tok: int) -> tuple[list[int], list[int]]:
    left = [d for d in range(1, tok) if heads[d] == tok]
    right = [d for d in range(len(heads) - 1, tok, -1) if heads[d] == tok]
    return left, right


def _resolve(loc, state: State, sentence: Sentence, focus: int):
    """Token index (0-based), ROOT_TOKEN, or None when out of range."""
    m = len(sentence)
    if isinstance(loc, int):
        t = focus + loc
        return t if 0 <= t < m else None
    c = state.payload
    if not hasattr(c, "stack"):
        raise TemplateError(f"locator {loc!r} needs a stack-based system")
    head, *steps = loc.split(".")
    i = int(head[1:])
    if head[0] == "s":
        if i >= len(c.stack):
            return None
        tok = c.stack[-1 - i]
    else:
        tok = c.buffer + i
        if tok > m:
            return None
    for step in steps:
        left, right = _children(c.heads, tok)
        kids = left if step[0] == "l" else right
        j = int(step[1]) - 1
        if j >= len(kids):
            return None
        tok = kids[j]
    return ROOT_TOKEN if tok == 0 else tok - 1


class FeatureExtractor:
    """Maps states to per-group ``(ids, weights)`` arrays of fixed shape."""

    def __init__(self, template: FeatureTemplate, system: TransitionSystem):
        for g in template.groups:
            if g.vocab is None:
                raise TemplateError(f"group {g.name!r} has no vocabulary; call fit_vocabularies")
            if g.kind == "label" and not isinstance(system, ArcStandardSystem):
                raise TemplateError("label features need the parsing system")
            if g.kind == "history":
                missing = [d.name for d in system.decisions if g.vocab.id(d.name) == UNK]
                if missing:
                    raise TemplateError(f"history vocabulary lacks decisions {missing}")
        self.template = template
        self.system = system

    def check_sentence(self, sentence: Sentence) -> None:
        missing = self.template.required_columns() - set(sentence.columns)
        if missing:
            raise TemplateError(f"input lacks columns {sorted(missing)}")

    def extract(self, state: State, sentence: Sentence) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        focus = self.system.focus(state, sentence)
        out = {}
        for g in self.template.groups:
            bag = g.bag
            ids = np.zeros((g.arity, bag), dtype=np.int64)
            wts = np.zeros((g.arity, bag))
            for slot, loc in enumerate(g.locations):
                vals = self._values(g, loc, state, sentence, focus)
                ids[slot, :len(vals)] = vals
                wts[slot, :len(vals)] = 1.0 / len(vals)
            out[g.name] = (ids, wts)
        return out

    def _values(self, g: FeatureGroup, loc, state, sentence, focus) -> list[int]:
        if g.kind == "history":
            h = state.history
            return [g.vocab.id(self.system.decision_name(h[-loc]))] if loc <= len(h) else [PAD]
        tok = _resolve(loc, state, sentence, focus)
        if tok is None or (g.lookahead is not None and tok > focus + g.lookahead):
            return [PAD]
        if tok == ROOT_TOKEN:
            return [ROOT_ID]
        if g.kind == "input":
            return [g.vocab.id(sentence.tokens[tok].get(g.arg))]
        if g.kind == "label":
            label = state.payload.labels[tok + 1]
            return [PAD] if label is None else [g.vocab.id(label)]
        grams = char_ngrams(sentence.tokens[tok].form, int(g.arg), g.boundary)[:g.max_ngrams]
        return [g.vocab.id(c) for c in grams] or [PAD]

    def extract_batch(self, states: Sequence[State], sentence: Sentence):
        fvs = [self.extract(s, sentence) for s in states]
        return {g.name: (np.stack([fv[g.name][0] for fv in fvs]), np.stack([fv[g.name][1] for fv in fvs]))
                for g in self.template.groups}


def extract(state: State, sentence: Sentence, template: FeatureTemplate, system: TransitionSystem):
    return FeatureExtractor(template, system).extract(state, sentence)

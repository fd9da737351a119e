"""Concrete transition systems: shift-and-tag, arc-standard, keep/drop.

Each system also knows how to unroll a gold annotation into its decision
sequence and how to rebuild a structure from a complete sequence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .transitions import OracleError, Sentence, State, TransitionError, TransitionSystem

log = logging.getLogger(__name__)

TAGGING = "tagging"
PARSING = "parsing"
COMPRESSION = "compression"
TASKS = (TAGGING, PARSING, COMPRESSION)

ROOT = 0

DEFAULT_PUNCT_TAGS = frozenset({"''", "``", ",", ".", ":", "-LRB-", "-RRB-", "#", "$", "PUNCT"})


# -- annotations --------------------------------------------------------------

@dataclass(frozen=True)
class TagAnnotation:
    tags: tuple[str, ...]

    task = TAGGING

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))

    def __len__(self):
        return len(self.tags)


@dataclass(frozen=True)
class TreeAnnotation:
    """Head (1-based, 0 = ROOT) and dependency label for each token."""

    heads: tuple[int, ...]
    labels: tuple[str, ...]

    task = PARSING

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.heads) != len(self.labels):
            raise ValueError("heads and labels differ in length")

    def __len__(self):
        return len(self.heads)


@dataclass(frozen=True)
class KeepAnnotation:
    keep: tuple[bool, ...]

    task = COMPRESSION

    def __post_init__(self):
        object.__setattr__(self, "keep", tuple(bool(k) for k in self.keep))

    def __len__(self):
        return len(self.keep)

    def compress(self, sentence: Sentence) -> list[str]:
        return [w for w, k in zip(sentence.forms, self.keep) if k]


ANNOTATION_TYPES = {TAGGING: TagAnnotation, PARSING: TreeAnnotation, COMPRESSION: KeepAnnotation}


def _check_length(sentence: Sentence, gold) -> None:
    if len(gold) != len(sentence):
        raise ValueError(f"annotation has {len(gold)} entries for {len(sentence)} tokens")


# -- tagging ------------------------------------------------------------------

class TaggingSystem(TransitionSystem):
    """Shift-and-tag: one decision per token, tagging the buffer front as it shifts."""

    kind = TAGGING
    prefix = "TAG:"

    def __init__(self, tags: Sequence[str]):
        super().__init__([self.prefix + t for t in tags])

    @classmethod
    def from_annotations(cls, golds) -> "TaggingSystem":
        return cls(sorted({t for g in golds for t in g.tags}))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(d.name[len(self.prefix):] for d in self.decisions)

    def n_decisions(self, sentence):
        return len(sentence)

    def _initial_payload(self, sentence):
        return 0

    def _allowed(self, state, sentence):
        return tuple(range(self.n_actions))

    def _advance(self, state, decision, sentence):
        return state.payload + 1

    def focus(self, state, sentence):
        return min(state.payload, len(sentence) - 1)

    def unroll_gold(self, sentence: Sentence, gold: TagAnnotation) -> list[int]:
        _check_length(sentence, gold)
        return [self.decision_id(self.prefix + t) for t in gold.tags]

    def reconstruct(self, sentence: Sentence, decisions: Sequence[int]) -> TagAnnotation:
        state = _replay_complete(self, sentence, decisions)
        return TagAnnotation(tuple(self.decision_name(d)[len(self.prefix):] for d in state.history))


# -- compression --------------------------------------------------------------

class CompressionSystem(TransitionSystem):
    """Left-to-right keep/drop labelling of every token."""

    kind = COMPRESSION

    def __init__(self):
        super().__init__(["KEEP", "DROP"])

    KEEP, DROP = 0, 1

    def n_decisions(self, sentence):
        return len(sentence)

    def _initial_payload(self, sentence):
        return ()

    def _allowed(self, state, sentence):
        return (self.KEEP, self.DROP)

    def _advance(self, state, decision, sentence):
        return state.payload + (decision == self.KEEP,)

    def focus(self, state, sentence):
        return min(len(state.payload), len(sentence) - 1)

    def unroll_gold(self, sentence: Sentence, gold: KeepAnnotation) -> list[int]:
        _check_length(sentence, gold)
        return [self.KEEP if k else self.DROP for k in gold.keep]

    def reconstruct(self, sentence: Sentence, decisions: Sequence[int]) -> KeepAnnotation:
        state = _replay_complete(self, sentence, decisions)
        return KeepAnnotation(state.payload)


# -- arc-standard -------------------------------------------------------------

class ParseConfig(NamedTuple):
    stack: tuple[int, ...]      # token ids, ROOT = 0 at the bottom
    buffer: int                 # next token id to shift; m + 1 when empty
    heads: tuple[int, ...]      # index 0 unused; -1 while unattached
    labels: tuple[str | None, ...]


class ArcStandardSystem(TransitionSystem):
    """Arc-standard with ROOT pre-pushed; n(x) = 2m.

    Attaching to ROOT is only allowed once the buffer is empty, so every
    complete sequence yields a single-rooted tree.
    """

    kind = PARSING
    SHIFT = 0

    def __init__(self, labels: Sequence[str]):
        labels = list(labels)
        super().__init__(["SHIFT"] + [f"LEFT-ARC:{l}" for l in labels] + [f"RIGHT-ARC:{l}" for l in labels])
        self.labels = tuple(labels)
        k = len(labels)
        self._left = tuple(range(1, 1 + k))
        self._right = tuple(range(1 + k, 1 + 2 * k))

    @classmethod
    def from_annotations(cls, golds) -> "ArcStandardSystem":
        return cls(sorted({l for g in golds for l in g.labels}))

    def label_of(self, d: int) -> str:
        return self.labels[(d - 1) % len(self.labels)]

    def is_left(self, d: int) -> bool:
        return 1 <= d <= len(self.labels)

    def n_decisions(self, sentence):
        return 2 * len(sentence)

    def _initial_payload(self, sentence):
        m = len(sentence)
        return ParseConfig((ROOT,), 1, (-1,) * (m + 1), (None,) * (m + 1))

    def _allowed(self, state, sentence):
        c = state.payload
        m = len(sentence)
        out = []
        if c.buffer <= m:
            out.append(self.SHIFT)
        if len(c.stack) >= 2:
            if c.stack[-2] != ROOT:
                out.extend(self._left)
            if c.stack[-2] != ROOT or c.buffer > m:
                out.extend(self._right)
        return tuple(out)

    def _advance(self, state, decision, sentence):
        c = state.payload
        if decision == self.SHIFT:
            return c._replace(stack=c.stack + (c.buffer,), buffer=c.buffer + 1)
        s1, s0 = c.stack[-2], c.stack[-1]
        if self.is_left(decision):
            head, dep, stack = s0, s1, c.stack[:-2] + (s0,)
        else:
            head, dep, stack = s1, s0, c.stack[:-1]
        heads = c.heads[:dep] + (head,) + c.heads[dep + 1:]
        labels = c.labels[:dep] + (self.label_of(decision),) + c.labels[dep + 1:]
        return ParseConfig(stack, c.buffer, heads, labels)

    def focus(self, state, sentence):
        return min(state.payload.buffer, len(sentence)) - 1

    def unroll_gold(self, sentence: Sentence, gold: TreeAnnotation) -> list[int]:
        """Static oracle: left-arc first, right-arc once the dependent is complete."""
        _check_length(sentence, gold)
        check_tree(gold.heads)
        if not is_projective(gold.heads):
            raise OracleError("tree is not projective")
        heads = (-1,) + gold.heads
        pending = [0] * len(heads)
        for h in gold.heads:
            pending[h] += 1
        state = self.start_state(sentence)
        out = []
        while not self.is_final(state, sentence):
            c = state.payload
            d = None
            if len(c.stack) >= 2:
                s1, s0 = c.stack[-2], c.stack[-1]
                if s1 != ROOT and heads[s1] == s0:
                    d = self.decision_id(f"LEFT-ARC:{gold.labels[s1 - 1]}")
                elif heads[s0] == s1 and pending[s0] == 0:
                    d = self.decision_id(f"RIGHT-ARC:{gold.labels[s0 - 1]}")
            if d is None:
                if c.buffer > len(sentence):
                    raise OracleError("oracle stuck with an empty buffer")
                d = self.SHIFT
            elif d != self.SHIFT:
                dep = c.stack[-2] if self.is_left(d) else c.stack[-1]
                pending[heads[dep]] -= 1
            out.append(d)
            state = self.apply(state, d, sentence)
        return out

    def reconstruct(self, sentence: Sentence, decisions: Sequence[int]) -> TreeAnnotation:
        c = _replay_complete(self, sentence, decisions).payload
        return TreeAnnotation(c.heads[1:], c.labels[1:])


def _replay_complete(system: TransitionSystem, sentence: Sentence, decisions: Sequence[int]) -> State:
    state = system.replay(sentence, decisions)[-1]
    if not system.is_final(state, sentence):
        raise TransitionError(
            f"incomplete sequence: {len(decisions)} of {system.n_decisions(sentence)} decisions"
        )
    return state


def check_tree(heads: Sequence[int]) -> None:
    """Raise unless ``heads`` (1-based, 0 = ROOT) is a single-rooted tree."""
    m = len(heads)
    if any(not 0 <= h <= m for h in heads):
        raise OracleError("head index out of range")
    if sum(1 for h in heads if h == ROOT) != 1:
        raise OracleError("tree must have exactly one token attached to ROOT")
    for i in range(1, m + 1):
        seen = set()
        j = i
        while j != ROOT:
            if j in seen:
                raise OracleError(f"cycle through token {i}")
            seen.add(j)
            j = heads[j - 1]


def is_projective(heads: Sequence[int]) -> bool:
    arcs = [(min(h, d), max(h, d)) for d, h in enumerate(heads, 1)]
    for a, b in arcs:
        for c, d in arcs:
            if a < c < b < d:
                return False
    return True


# -- construction & dispatch -------------------------------------------------

def make_system(task: str, golds=None, labels: Sequence[str] | None = None) -> TransitionSystem:
    """Build a task system, taking its vocabulary from ``labels`` or gold data."""
    if task == COMPRESSION:
        return CompressionSystem()
    cls = {TAGGING: TaggingSystem, PARSING: ArcStandardSystem}.get(task)
    if cls is None:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    if labels is not None:
        return cls(labels)
    return cls.from_annotations(golds)


def system_from_descriptor(desc: dict) -> TransitionSystem:
    kind, names = desc["kind"], desc["decisions"]
    if kind == TAGGING:
        system = TaggingSystem([n[len(TaggingSystem.prefix):] for n in names])
    elif kind == PARSING:
        k = (len(names) - 1) // 2
        system = ArcStandardSystem([n[len("LEFT-ARC:"):] for n in names[1:1 + k]])
    elif kind == COMPRESSION:
        system = CompressionSystem()
    else:
        raise ValueError(f"unknown task {kind!r}")
    if [d.name for d in system.decisions] != list(names):
        raise ValueError("decision vocabulary does not match its task layout")
    return system


def unroll_gold(system: TransitionSystem, sentence: Sentence, gold) -> list[int]:
    return system.unroll_gold(sentence, gold)


def reconstruct(system: TransitionSystem, sentence: Sentence, decisions: Sequence[int]):
    return system.reconstruct(sentence, decisions)


def gold_corpus(system: TransitionSystem, sentences, golds):
    """Unroll every example, skipping (with a warning) those the oracle rejects."""
    out = []
    for i, (x, y) in enumerate(zip(sentences, golds)):
        try:
            out.append((x, system.unroll_gold(x, y)))
        except OracleError as e:
            log.warning("skipping training sentence %d: %s", i + 1, e)
    return out


# -- evaluation ---------------------------------------------------------------

def _counts(pred, gold, tags=None, punct_tags=DEFAULT_PUNCT_TAGS) -> dict[str, float]:
    if type(pred) is not type(gold):
        raise TypeError(f"cannot compare {type(pred).__name__} with {type(gold).__name__}")
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: predicted {len(pred)} tokens, gold {len(gold)}")
    if isinstance(gold, TagAnnotation):
        return {"tokens": len(gold), "correct": sum(p == g for p, g in zip(pred.tags, gold.tags)),
                "sentences": 1, "exact": float(pred.tags == gold.tags)}
    if isinstance(gold, TreeAnnotation):
        if tags is not None and len(tags) != len(gold):
            raise ValueError("tag column length mismatch")
        scored = [i for i in range(len(gold)) if tags is None or tags[i] not in punct_tags]
        uh = [i for i in scored if pred.heads[i] == gold.heads[i]]
        lh = [i for i in uh if pred.labels[i] == gold.labels[i]]
        return {"tokens": len(scored), "uas": len(uh), "las": len(lh), "sentences": 1,
                "exact": float(pred == gold)}
    tp = sum(p and g for p, g in zip(pred.keep, gold.keep))
    return {"tp": tp, "pred": sum(pred.keep), "gold": sum(gold.keep), "sentences": 1,
            "exact": float(pred.keep == gold.keep)}


def _metrics(c: dict[str, float]) -> dict[str, float]:
    pct = lambda a, b: 100.0 * a / b if b else 100.0
    out = {"exact_match": pct(c["exact"], c["sentences"])}
    if "correct" in c:
        out["accuracy"] = pct(c["correct"], c["tokens"])
    elif "uas" in c:
        out["uas"] = pct(c["uas"], c["tokens"])
        out["las"] = pct(c["las"], c["tokens"])
    else:
        p = pct(c["tp"], c["pred"]) if c["pred"] else (100.0 if not c["gold"] else 0.0)
        r = pct(c["tp"], c["gold"]) if c["gold"] else 100.0
        out.update(precision=p, recall=r, f1=2 * p * r / (p + r) if p + r else 0.0)
    return out


def evaluate(pred, gold, tags=None, punct_tags=DEFAULT_PUNCT_TAGS) -> dict[str, float]:
    """Metrics for one sentence, as percentages.

    Tagging reports token accuracy, parsing UAS/LAS (tokens whose tag is in
    ``punct_tags`` are skipped when ``tags`` is given), compression
    precision/recall/F1 over kept tokens. All report exact match.
    """
    return _metrics(_counts(pred, gold, tags, punct_tags))


def evaluate_corpus(preds, golds, tags=None, punct_tags=DEFAULT_PUNCT_TAGS) -> dict[str, float]:
    """Micro-averaged metrics over aligned corpora."""
    if len(preds) != len(golds):
        raise ValueError(f"corpus length mismatch: {len(preds)} predicted, {len(golds)} gold")
    if not golds:
        raise ValueError("empty corpus")
    total: dict[str, float] = {}
    for i, (p, g) in enumerate(zip(preds, golds)):
        for k, v in _counts(p, g, None if tags is None else tags[i], punct_tags).items():
            total[k] = total.get(k, 0) + v
    return _metrics(total)


PRIMARY_METRIC = {TAGGING: "accuracy", PARSING: "uas", COMPRESSION: "f1"}

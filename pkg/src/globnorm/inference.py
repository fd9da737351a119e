"""Greedy decoding, beam search and exhaustive enumeration.

Two scoring modes share one beam implementation:

``local``
    items are ranked by the summed log-softmax of their decisions, i.e.
    the log of the locally normalized sequence probability;
``global``
    items are ranked by the summed raw decision scores, the unnormalized
    log-potential of the globally normalized (CRF) model.

Ties are broken towards the lexicographically smaller decision sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .transitions import Sentence, State

MODES = ("local", "global")
DEFAULT_ENUMERATION_CAP = 10 ** 6


class EnumerationLimitError(RuntimeError):
    pass


def logsumexp(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return -np.inf
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


class BeamItem:
    __slots__ = ("prefix", "state", "raw", "logp", "gold", "parent", "step_logz")

    def __init__(self, prefix, state, raw, logp, gold, parent=None, step_logz=0.0):
        self.prefix = prefix
        self.state = state
        self.raw = raw
        self.logp = logp
        self.gold = gold
        self.parent = parent
        self.step_logz = step_logz

    def score(self, mode: str) -> float:
        return self.raw if mode == "global" else self.logp

    def local_logz(self) -> tuple[float, ...]:
        out = []
        item = self
        while item.parent is not None:
            out.append(item.step_logz)
            item = item.parent
        return tuple(reversed(out))

    def __repr__(self):
        return f"BeamItem(prefix={self.prefix}, raw={self.raw:.4g}, logp={self.logp:.4g}, gold={self.gold})"


@dataclass
class Beam:
    items: list[BeamItem]
    step: int
    mode: str
    trace: list[list[BeamItem]] = field(default_factory=list)
    fallout: int | None = None
    gold_item: BeamItem | None = None

    @property
    def top(self) -> BeamItem:
        return self.items[0]

    def update_set(self) -> list[BeamItem]:
        """Beam paths plus the gold prefix, with the gold path exactly once."""
        if self.gold_item is not None and not any(it.gold for it in self.items):
            return self.items + [self.gold_item]
        return list(self.items)


@dataclass
class ScoredSequence:
    decisions: tuple[int, ...]
    raw: float
    step_logz: tuple[float, ...]
    log_p_local: float
    log_z_global: float | None = None

    @property
    def log_p_global(self) -> float | None:
        return None if self.log_z_global is None else self.raw - self.log_z_global


def _expand(items, sentence, model):
    system = model.system
    scores, _ = model.score_states([it.state for it in items], sentence)
    out = []
    for it, row in zip(items, scores):
        allowed = system.allowed(it.state, sentence)
        logz = logsumexp(row[list(allowed)])
        for d in allowed:
            out.append((it, d, float(row[d]), float(row[d]) - logz, logz))
    return out


def beam_search(sentence: Sentence, model, beam_size: int, mode: str = "global",
                gold: Sequence[int] | None = None, early_update: bool = False) -> Beam:
    """Beam search; with ``gold`` the gold prefix is tracked through the beam.

    With ``early_update`` the search stops at the first step where the gold
    prefix is pruned; ``Beam.gold_item`` then holds that pruned prefix.
    """
    if beam_size < 1:
        raise ValueError("beam size must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    system = model.system
    n = system.n_decisions(sentence)
    if gold is not None and len(gold) != n:
        raise ValueError(f"gold sequence has length {len(gold)}, expected {n}")
    start = BeamItem((), system.start_state(sentence), 0.0, 0.0, gold is not None)
    beam = Beam([start], 0, mode)
    for step in range(1, n + 1):
        cands = _expand(beam.items, sentence, model)
        keyed = []
        for it, d, s, lp, logz in cands:
            score = it.raw + s if mode == "global" else it.logp + lp
            keyed.append((-score, it.prefix + (d,), it, d, s, lp, logz))
        keyed.sort(key=lambda c: (c[0], c[1]))
        kept = []
        gold_cand = None
        for rank, (_, prefix, it, d, s, lp, logz) in enumerate(keyed):
            is_gold = it.gold and beam.fallout is None and d == gold[step - 1]
            if rank < beam_size or is_gold:
                new = BeamItem(prefix, system.apply(it.state, d, sentence), it.raw + s, it.logp + lp,
                               is_gold, it, logz)
                if rank < beam_size:
                    kept.append(new)
                else:
                    gold_cand = new
        beam.items, beam.step = kept, step
        beam.trace.append(kept)
        if gold_cand is not None:
            beam.fallout = step
            if early_update:
                beam.gold_item = gold_cand
                break
    return beam


def track_gold(beam: Beam, gold: Sequence[int]) -> tuple[bool, int | None]:
    """Whether the gold path stayed in the beam, else the first step it was pruned."""
    gold = tuple(gold)
    for j, kept in enumerate(beam.trace, 1):
        if not any(it.prefix == gold[:j] for it in kept):
            return False, j
    return True, None


def scored(item: BeamItem) -> ScoredSequence:
    return ScoredSequence(item.prefix, item.raw, item.local_logz(), item.logp)


def decode(sentence: Sentence, model, beam_size: int = 1, mode: str = "global") -> ScoredSequence:
    return scored(beam_search(sentence, model, beam_size, mode).top)


def greedy_decode(sentence: Sentence, model) -> ScoredSequence:
    """Pick the most probable allowed decision at every step (lowest id on ties)."""
    system = model.system
    state = system.start_state(sentence)
    decisions, raw, logp, logzs = [], 0.0, 0.0, []
    while not system.is_final(state, sentence):
        (row,), _ = model.score_states([state], sentence)
        allowed = list(system.allowed(state, sentence))
        logz = logsumexp(row[allowed])
        d = allowed[int(np.argmax(row[allowed]))]
        decisions.append(d)
        raw += float(row[d])
        logp += float(row[d]) - logz
        logzs.append(logz)
        state = system.apply(state, d, sentence)
    return ScoredSequence(tuple(decisions), raw, tuple(logzs), logp)


def enumerate_all(sentence: Sentence, model, cap: int = DEFAULT_ENUMERATION_CAP):
    """Score every complete decision sequence exactly.

    Returns ``(sequences, log_z_global)``; sequences are in lexicographic
    order of their decision ids and carry both normalizations.
    """
    system = model.system
    out: list[ScoredSequence] = []

    def visit(state: State, raw: float, logp: float, logzs: tuple):
        if system.is_final(state, sentence):
            if len(out) >= cap:
                raise EnumerationLimitError(f"more than {cap} complete sequences")
            out.append(ScoredSequence(state.history, raw, logzs, logp))
            return
        (row,), _ = model.score_states([state], sentence)
        allowed = list(system.allowed(state, sentence))
        logz = logsumexp(row[allowed])
        for d in allowed:
            visit(system.apply(state, d, sentence), raw + float(row[d]),
                  logp + float(row[d]) - logz, logzs + (logz,))

    visit(system.start_state(sentence), 0.0, 0.0, ())
    log_z = logsumexp([s.raw for s in out])
    for s in out:
        s.log_z_global = log_z
    return out, log_z

"""Transition-system contract shared by every task.

A transition system turns structured prediction into a sequence of
decisions. States are immutable and carry their full decision history, so
a state and the decision prefix that produced it are interchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence


class TransitionError(ValueError):
    """Base class for transition-system contract violations."""


class IllegalDecisionError(TransitionError):
    """A decision was applied in a state that does not allow it."""


class OracleError(TransitionError):
    """Gold annotation cannot be expressed as a decision sequence."""


@dataclass(frozen=True)
class Token:
    form: str
    attrs: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        # freeze attrs so tokens hash and compare by value
        object.__setattr__(self, "attrs", dict(sorted(self.attrs.items())))

    def get(self, column: str) -> str:
        if column == "form":
            return self.form
        return self.attrs[column]

    def __hash__(self):
        return hash((self.form, tuple(self.attrs.items())))


@dataclass(frozen=True)
class Sentence:
    """A tokenized input with per-token attribute columns."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        toks = tuple(self.tokens)
        object.__setattr__(self, "tokens", toks)
        if not toks:
            raise ValueError("sentence must contain at least one token")
        cols = set(toks[0].attrs)
        for i, tok in enumerate(toks):
            if set(tok.attrs) != cols:
                raise ValueError(
                    f"token {i + 1} has columns {sorted(tok.attrs)}, expected {sorted(cols)}"
                )

    @classmethod
    def from_words(cls, words: Sequence[str], **columns: Sequence[str]) -> "Sentence":
        for name, values in columns.items():
            if len(values) != len(words):
                raise ValueError(f"column {name!r} has {len(values)} values for {len(words)} words")
        return cls(tuple(
            Token(w, {name: values[i] for name, values in columns.items()})
            for i, w in enumerate(words)
        ))

    @property
    def forms(self) -> tuple[str, ...]:
        return tuple(t.form for t in self.tokens)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(self.tokens[0].attrs)

    def column(self, name: str) -> tuple[str, ...]:
        return tuple(t.get(name) for t in self.tokens)

    def __len__(self):
        return len(self.tokens)


class Decision(NamedTuple):
    id: int
    name: str


@dataclass(frozen=True)
class State:
    """Decision history plus the task payload derived from it."""

    history: tuple[int, ...]
    payload: Any

    @property
    def step(self) -> int:
        return len(self.history)


class TransitionSystem:
    """Base class for the concrete task systems.

    Subclasses fix the decision vocabulary at construction and implement
    ``_initial_payload``, ``_allowed``, ``_advance`` and ``n_decisions``.
    Decisions are handled as integer ids into ``self.decisions``.
    """

    kind: str = ""

    def __init__(self, names: Sequence[str]):
        if len(set(names)) != len(names):
            raise ValueError("decision names must be unique")
        self.decisions = tuple(Decision(i, n) for i, n in enumerate(names))
        self._index = {n: i for i, n in enumerate(names)}

    @property
    def n_actions(self) -> int:
        return len(self.decisions)

    def decision_id(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"decision {name!r} is not in the {self.kind} vocabulary") from None

    def decision_name(self, d: int) -> str:
        return self.decisions[d].name

    def n_decisions(self, sentence: Sentence) -> int:
        raise NotImplementedError

    def start_state(self, sentence: Sentence) -> State:
        if len(sentence) == 0:
            raise ValueError("empty input")
        return State((), self._initial_payload(sentence))

    def is_final(self, state: State, sentence: Sentence) -> bool:
        return len(state.history) == self.n_decisions(sentence)

    def allowed(self, state: State, sentence: Sentence) -> tuple[int, ...]:
        """Allowed decision ids in ascending order; empty for a final state."""
        if self.is_final(state, sentence):
            return ()
        return self._allowed(state, sentence)

    def apply(self, state: State, decision: int, sentence: Sentence) -> State:
        if decision not in self.allowed(state, sentence):
            name = self.decision_name(decision) if 0 <= decision < self.n_actions else decision
            raise IllegalDecisionError(f"decision {name} not allowed at step {state.step}")
        return State(state.history + (decision,), self._advance(state, decision, sentence))

    def replay(self, sentence: Sentence, decisions: Sequence[int]) -> list[State]:
        """States s_1 .. s_{j+1} visited by a decision prefix."""
        states = [self.start_state(sentence)]
        for d in decisions:
            states.append(self.apply(states[-1], d, sentence))
        return states

    def focus(self, state: State, sentence: Sentence) -> int:
        """0-based index of the input position the next decision belongs to."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"kind": self.kind, "decisions": [d.name for d in self.decisions]}

    def _initial_payload(self, sentence):
        raise NotImplementedError

    def _allowed(self, state, sentence):
        raise NotImplementedError

    def _advance(self, state, decision, sentence):
        raise NotImplementedError

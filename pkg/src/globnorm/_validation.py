from __future__ import annotations

from typing import Sequence

from .systems import ANNOTATION_TYPES, TASKS
from .transitions import Sentence


def check_task(task: str) -> str:
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    return task


def check_sentences(X) -> list[Sentence]:
    """Accept Sentence objects or plain word sequences."""
    if isinstance(X, (Sentence, str)):
        raise TypeError("expected a sequence of sentences, got a single sentence")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, Sentence):
            out.append(x)
        elif isinstance(x, Sequence) and not isinstance(x, str) and all(isinstance(w, str) for w in x):
            out.append(Sentence.from_words(list(x)))
        else:
            raise TypeError(f"sentence {i}: expected a Sentence or a list of words")
    return out


def check_annotations(y, task: str, X: Sequence[Sentence]) -> list:
    cls = ANNOTATION_TYPES[check_task(task)]
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"{len(X)} sentences but {len(y)} annotations")
    for i, (x, g) in enumerate(zip(X, y)):
        if not isinstance(g, cls):
            raise TypeError(f"annotation {i}: expected {cls.__name__}, got {type(g).__name__}")
        if len(g) != len(x):
            raise ValueError(f"annotation {i} has {len(g)} entries for {len(x)} tokens")
    return y


def check_positive_int(name: str, value) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value

"""Tab-separated corpora and synthetic data generators.

One token per line, sentences separated by a blank line. Columns:

=========== ==========================================
tagging     index  form  tag
parsing     index  form  tag  head  label
compression index  form  keep (1 or 0)
=========== ==========================================

Index is 1-based and consecutive within a sentence; head 0 is ROOT. For
parsing, ``tag`` is an input column (it feeds the features) while head and
label are the annotation. Files are UTF-8, separated by tabs only.
"""
from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .systems import (COMPRESSION, PARSING, TAGGING, TASKS, KeepAnnotation, TagAnnotation,
                      TreeAnnotation)
from .transitions import Sentence, Token


class CorpusFormatError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path or '<corpus>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


# input columns after index/form, then gold columns
_COLUMNS = {
    TAGGING: ((), ("tag",)),
    PARSING: (("tag",), ("head", "label")),
    COMPRESSION: ((), ("keep",)),
}


def _blocks(lines: Iterable[str]):
    block = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if line.strip() == "":
            if block:
                yield block
                block = []
            continue
        block.append((lineno, line))
    if block:
        yield block


def parse_corpus(text: str, task: str, gold: bool = True, path=None):
    """Parse corpus text into ``(sentences, annotations)``.

    With ``gold=False`` the annotation columns may be absent (or present and
    ignored) and the returned annotation list holds ``None``.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    in_cols, gold_cols = _COLUMNS[task]
    sentences, golds = [], []
    for block in _blocks(io.StringIO(text)):
        tokens, values = [], []
        for k, (lineno, line) in enumerate(block, 1):
            fields = line.split("\t")
            need = 2 + len(in_cols)
            full = need + len(gold_cols)
            if len(fields) != full and (gold or len(fields) != need):
                raise CorpusFormatError(f"expected {full} tab-separated columns, got {len(fields)}", path, lineno)
            if fields[0] != str(k):
                raise CorpusFormatError(f"token index {fields[0]!r}, expected {k}", path, lineno)
            if fields[1] == "":
                raise CorpusFormatError("empty form", path, lineno)
            tokens.append(Token(fields[1], dict(zip(in_cols, fields[2:need]))))
            values.append((lineno, fields[need:]))
        sentences.append(Sentence(tuple(tokens)))
        golds.append(_annotation(task, values, len(tokens), path) if gold else None)
    return sentences, golds


def _annotation(task, values, m, path):
    if task == TAGGING:
        return TagAnnotation(tuple(v[0] for _, v in values))
    if task == COMPRESSION:
        keep = []
        for lineno, v in values:
            if v[0] not in ("0", "1"):
                raise CorpusFormatError(f"keep bit must be 0 or 1, got {v[0]!r}", path, lineno)
            keep.append(v[0] == "1")
        return KeepAnnotation(tuple(keep))
    heads, labels = [], []
    for lineno, (h, label) in values:
        try:
            head = int(h)
        except ValueError:
            raise CorpusFormatError(f"head {h!r} is not an integer", path, lineno) from None
        if not 0 <= head <= m:
            raise CorpusFormatError(f"head {head} out of range 0..{m}", path, lineno)
        heads.append(head)
        labels.append(label)
    return TreeAnnotation(tuple(heads), tuple(labels))


def read_corpus(path, task: str, gold: bool = True):
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as f:
        return parse_corpus(f.read(), task, gold, path)


def format_corpus(sentences: Sequence[Sentence], annotations, task: str) -> str:
    if len(sentences) != len(annotations):
        raise ValueError("sentences and annotations differ in number")
    in_cols, _ = _COLUMNS[task]
    out = []
    for x, y in zip(sentences, annotations):
        if len(x) != len(y):
            raise ValueError("annotation length does not match its sentence")
        for i, tok in enumerate(x.tokens):
            fields = [str(i + 1), tok.form] + [tok.get(c) for c in in_cols]
            if task == TAGGING:
                fields.append(y.tags[i])
            elif task == PARSING:
                fields += [str(y.heads[i]), y.labels[i]]
            else:
                fields.append("1" if y.keep[i] else "0")
            for f in fields:
                if "\t" in f or "\n" in f:
                    raise ValueError(f"field {f!r} contains a tab or newline")
            out.append("\t".join(fields) + "\n")
        out.append("\n")
    return "".join(out)


def write_corpus(path, sentences, annotations, task: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_corpus(sentences, annotations, task))


write_predictions = write_corpus


# -- synthetic corpora ----------------------------------------------------------

def separable_tagging(size: int, seed: int = 0, n_tags: int = 5, words_per_tag: int = 8,
                      min_len: int = 3, max_len: int = 10):
    """Every word carries its tag deterministically; words share a per-tag stem."""
    rng = np.random.default_rng(seed)
    tags = [f"T{i}" for i in range(n_tags)]
    stems = ["ka", "zo", "mi", "ru", "pe", "lo", "ve", "di", "su", "no"]
    lexicon = [(f"{stems[t % len(stems)]}{t // len(stems) or ''}{w}", tags[t])
               for t in range(n_tags) for w in range(words_per_tag)]
    sents, golds = [], []
    for _ in range(size):
        n = int(rng.integers(min_len, max_len + 1))
        picks = rng.integers(0, len(lexicon), size=n)
        sents.append(Sentence.from_words([lexicon[p][0] for p in picks]))
        golds.append(TagAnnotation(tuple(lexicon[p][1] for p in picks)))
    return sents, golds


def lookahead_pairs(size: int, k: int = 0, seed: int = 0, pool: int = 1, offset: int = 0):
    """``size`` sentence pairs of the lookahead-k family.

    Pair p is ``s m^(k+1) c_j`` / ``s m^(k+1) e_j`` tagged ``A B^(k+1) C`` /
    ``A D^(k+1) E``. The start word s, middle word m and ending index j are
    each drawn from ``pool`` choices (``a a1 a2 ..``, ``b b1 ..``, ``c c1 ..``
    paired with ``e e1 ..``), so a pair is identified by (s, m, j) and two
    different pairs never share a sentence. With ``pool=1`` every pair is
    the two-sentence problem itself. Combinations are used in a seeded
    order (the base pair first); ``offset`` skips that many, so two calls
    with disjoint ranges give disjoint sentences as long as
    ``offset + size <= pool ** 3``.
    """
    names = lambda base: [base] + [f"{base}{i}" for i in range(1, pool)]
    starts, mids, cs, es = names("a"), names("b"), names("c"), names("e")
    n_combos = pool ** 3
    order = np.random.default_rng(seed).permutation(n_combos)
    if pool > 1:
        order = np.concatenate([[0], order[order != 0]])
    sents, golds = [], []
    for p in range(offset, offset + size):
        combo = int(order[p % n_combos])
        i_s, i_m, j = combo // pool ** 2, combo // pool % pool, combo % pool
        mid = [mids[i_m]] * (k + 1)
        sents.append(Sentence.from_words([starts[i_s]] + mid + [cs[j]]))
        golds.append(TagAnnotation(("A",) + ("B",) * (k + 1) + ("C",)))
        sents.append(Sentence.from_words([starts[i_s]] + mid + [es[j]]))
        golds.append(TagAnnotation(("A",) + ("D",) * (k + 1) + ("E",)))
    return sents, golds


def random_projective_tree(m: int, rng) -> tuple[int, ...]:
    """Heads for a uniformly bracketed projective tree over tokens 1..m."""
    heads = [0] * (m + 1)

    def build(lo, hi, parent):
        if lo > hi:
            return
        h = int(rng.integers(lo, hi + 1))
        heads[h] = parent
        split_left(lo, h - 1, h)
        split_right(h + 1, hi, h)

    def split_left(lo, hi, head):
        while lo <= hi:  # consecutive sibling spans, each with its own head
            cut = int(rng.integers(lo, hi + 1))
            build(cut, hi, head)
            hi = cut - 1

    def split_right(lo, hi, head):
        while lo <= hi:
            cut = int(rng.integers(lo, hi + 1))
            build(lo, cut, head)
            lo = cut + 1

    build(1, m, 0)
    return tuple(heads[1:])


def projective_trees(size: int, seed: int = 0, min_len: int = 2, max_len: int = 8,
                     labels=("nsubj", "obj", "amod", "det", "advmod"), n_words: int = 30):
    rng = np.random.default_rng(seed)
    tagset = ("N", "V", "A", "D", "R")
    sents, golds = [], []
    for _ in range(size):
        m = int(rng.integers(min_len, max_len + 1))
        heads = random_projective_tree(m, rng)
        words = [f"w{int(rng.integers(n_words))}" for _ in range(m)]
        tags = [tagset[int(w[1:]) % len(tagset)] for w in words]
        labs = tuple("root" if h == 0 else labels[int(rng.integers(len(labels)))] for h in heads)
        sents.append(Sentence.from_words(words, tag=tags))
        golds.append(TreeAnnotation(heads, labs))
    return sents, golds


def keep_drop(size: int, seed: int = 0, min_len: int = 3, max_len: int = 12):
    """Compression data: keep content words (stem ``k``), drop the rest."""
    rng = np.random.default_rng(seed)
    sents, golds = [], []
    for _ in range(size):
        n = int(rng.integers(min_len, max_len + 1))
        keep = rng.random(n) < 0.45
        words = [f"{'k' if k else 'd'}{int(rng.integers(6))}" for k in keep]
        sents.append(Sentence.from_words(words))
        golds.append(KeepAnnotation(tuple(bool(k) for k in keep)))
    return sents, golds


GENERATORS = {
    "separable-tagging": (TAGGING, separable_tagging),
    "lookahead": (TAGGING, lookahead_pairs),
    "projective-trees": (PARSING, projective_trees),
    "keep-drop": (COMPRESSION, keep_drop),
}


def generate_synthetic(name: str, size: int, seed: int = 0, **kwargs):
    """Returns ``(task, sentences, annotations)``; deterministic in ``seed``."""
    try:
        task, fn = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; expected one of {sorted(GENERATORS)}") from None
    sents, golds = fn(size, seed=seed, **kwargs)
    return task, sents, golds

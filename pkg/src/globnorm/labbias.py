"""Executable label-bias experiments on the two-sentence tagging problem.

Data: ``a b c -> A B C`` and ``a b e -> A D E``. The middle word is
ambiguous until the last word is read. A globally normalized model with
indicator features on seen tag bigrams and seen (word, tag) pairs puts
almost all mass on both gold sequences as its single weight grows, while
any locally normalized model restricted to the words read so far must
split the mass at ``b`` between B and D, so the two gold probabilities
sum to at most one.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .inference import enumerate_all
from .systems import TaggingSystem
from .transitions import Sentence

TAGS = ("A", "B", "C", "D", "E")
WORDS = ("a", "b", "c", "e")
TRANSITIONS = frozenset({("A", "B"), ("B", "C"), ("A", "D"), ("D", "E")})
EMISSIONS = frozenset({("a", "A"), ("b", "B"), ("c", "C"), ("b", "D"), ("e", "E")})
DEFAULT_ALPHAS = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0)
PROB_FLOOR = 1e-12


class LookaheadViolation(ValueError):
    """A local model's conditionals depend on input it may not read."""


@dataclass(frozen=True)
class ToyModel:
    alpha: float
    transitions: frozenset = TRANSITIONS
    emissions: frozenset = EMISSIONS
    tags: tuple = TAGS
    words: tuple = WORDS

    def __post_init__(self):
        if not all(a in self.tags and b in self.tags for a, b in self.transitions):
            raise ValueError("transition set uses unknown tags")
        if not all(w in self.words and t in self.tags for w, t in self.emissions):
            raise ValueError("emission set uses unknown words or tags")


@dataclass(frozen=True)
class ToyDataset:
    pairs: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def __post_init__(self):
        if len({len(x) for x, _ in self.pairs}) > 1:
            raise ValueError("all sentences in a toy dataset share one length")


def alpha_model(alpha: float, k: int = 0) -> ToyModel:
    """The two-indicator model; for k > 0 the repeated middle tags may follow themselves."""
    trans = TRANSITIONS | ({("B", "B"), ("D", "D")} if k > 0 else frozenset())
    return ToyModel(alpha, frozenset(trans))


def toy_score(model: ToyModel, x_prefix: Sequence[str], d_prefix: Sequence[str], d_i: str) -> float:
    """Score of tag ``d_i`` for word ``x_prefix[-1]`` after tags ``d_prefix``.

    There is no tag before the first word, so the transition indicator is
    0 at the first position.
    """
    if len(x_prefix) != len(d_prefix) + 1:
        raise ValueError("x prefix must be one longer than the decision prefix")
    trans = bool(d_prefix) and (d_prefix[-1], d_i) in model.transitions
    emit = (x_prefix[-1], d_i) in model.emissions
    return model.alpha * (float(trans) + float(emit))


def lookahead_family(k: int) -> ToyDataset:
    """``a b^(k+1) c`` tagged ``A B^(k+1) C`` and ``a b^(k+1) e`` tagged ``A D^(k+1) E``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    mid = k + 1
    return ToyDataset((
        (("a",) + ("b",) * mid + ("c",), ("A",) + ("B",) * mid + ("C",)),
        (("a",) + ("b",) * mid + ("e",), ("A",) + ("D",) * mid + ("E",)),
    ))


# -- scoring adapters for the generic enumeration -----------------------------

class FunctionScorer:
    """Wraps ``fn(tag_history, words, i) -> scores over tags`` as a tagging model."""

    def __init__(self, tags: Sequence[str], fn: Callable):
        self.system = TaggingSystem(tags)
        self.tags = tuple(tags)
        self.fn = fn

    def score_states(self, states, sentence):
        words = sentence.forms
        rows = []
        for s in states:
            hist = tuple(self.tags[d] for d in s.history)
            rows.append(np.asarray(self.fn(hist, words, len(hist)), dtype=np.float64))
        return np.array(rows), None


def toy_scorer(model: ToyModel) -> FunctionScorer:
    def fn(hist, words, i):
        return [toy_score(model, words[:i + 1], hist, t) for t in model.tags]
    return FunctionScorer(model.tags, fn)


def global_distribution(scorer: FunctionScorer, words: Sequence[str], cap: int = 10 ** 6) -> dict:
    seqs, _ = enumerate_all(Sentence.from_words(list(words)), scorer, cap)
    return {tuple(scorer.tags[d] for d in s.decisions): float(np.exp(s.log_p_global)) for s in seqs}


def toy_global_distribution(model: ToyModel, words: Sequence[str], cap: int = 10 ** 6) -> dict:
    """Exact p_G over every tag sequence for ``words``, by enumeration."""
    if len(model.tags) ** len(words) > cap:
        raise ValueError(f"{len(model.tags)}^{len(words)} sequences exceed the cap of {cap}")
    return global_distribution(toy_scorer(model), words, cap)


# -- locally normalized models ------------------------------------------------

class LocalModel:
    """Per-step conditional p(d_i | d_1..d_{i-1}, words) over ``tags``.

    ``conditional`` receives the whole sentence and the position; a model
    with lookahead k is only entitled to ``words[:i + 1 + k]``.
    """

    tags: tuple[str, ...] = TAGS

    def conditional(self, history: tuple[str, ...], words: Sequence[str], i: int) -> np.ndarray:
        raise NotImplementedError

    def sequence_prob(self, words: Sequence[str], tags: Sequence[str]) -> float:
        p = 1.0
        for i, t in enumerate(tags):
            p *= float(self.conditional(tuple(tags[:i]), words, i)[self.tags.index(t)])
        return p

    def distribution(self, words: Sequence[str]) -> dict:
        return {seq: self.sequence_prob(words, seq) for seq in itertools.product(self.tags, repeat=len(words))}


class RandomLocalModel(LocalModel):
    """Softmax of lazily drawn Gaussian scores keyed by (history, visible words)."""

    def __init__(self, seed, scale: float = 3.0, tags=TAGS, lookahead: int = 0):
        self.rng = np.random.default_rng(seed)
        self.scale = scale
        self.tags = tuple(tags)
        self.lookahead = lookahead
        self._table: dict = {}

    def conditional(self, history, words, i):
        key = (tuple(history), tuple(words[:i + 1 + self.lookahead]))
        if key not in self._table:
            z = self.rng.normal(0.0, self.scale, size=len(self.tags))
            z = np.exp(z - z.max())
            self._table[key] = z / z.sum()
        return self._table[key]


class TableLocalModel(LocalModel):
    """Conditionals from an explicit table; unlisted contexts are uniform."""

    def __init__(self, table: dict, tags=TAGS):
        self.table = table
        self.tags = tuple(tags)

    def conditional(self, history, words, i):
        key = (tuple(history), tuple(words[:i + 1]))
        if key in self.table:
            dist = self.table[key]
            return np.array([dist.get(t, 0.0) for t in self.tags])
        return np.full(len(self.tags), 1.0 / len(self.tags))


class PeekingLocalModel(LocalModel):
    """Reads the final word at every step; not a valid restricted model."""

    def __init__(self, tags=TAGS):
        self.tags = tuple(tags)

    def conditional(self, history, words, i):
        gold = {"a": "A", "c": "C", "e": "E"}.get(words[i])
        if gold is None:
            gold = "B" if words[-1] == "c" else "D"
        return np.array([1.0 if t == gold else 0.0 for t in self.tags])


def optimal_split_model() -> TableLocalModel:
    """Deterministic everywhere except a 50/50 split between B and D at ``b``."""
    return TableLocalModel({
        ((), ("a",)): {"A": 1.0},
        (("A",), ("a", "b")): {"B": 0.5, "D": 0.5},
        (("A", "B"), ("a", "b", "c")): {"C": 1.0},
        (("A", "D"), ("a", "b", "e")): {"E": 1.0},
    })


def check_restricted(model: LocalModel, dataset: ToyDataset, lookahead: int = 0) -> None:
    """Raise LookaheadViolation if conditionals differ on identical visible input."""
    (x1, y1), (x2, y2) = dataset.pairs[:2]
    for i in range(len(x1)):
        if x1[:i + 1 + lookahead] != x2[:i + 1 + lookahead]:
            break
        for hist in {tuple(y1[:i]), tuple(y2[:i])}:
            if not np.array_equal(model.conditional(hist, x1, i), model.conditional(hist, x2, i)):
                raise LookaheadViolation(
                    f"conditional at position {i + 1} depends on words beyond position {i + 1 + lookahead}")


@dataclass
class AuditReport:
    trials: int
    max_sum: float
    violations: int
    bound: float = 1.0
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.violations == 0


def local_bound_audit(generator: Callable[[int], LocalModel], trials: int, dataset: ToyDataset | None = None,
                      lookahead: int = 0, tol: float = 1e-9) -> AuditReport:
    """Sum of both gold probabilities for ``trials`` local models.

    Every model must pass the restriction check first; models that peek
    past the allowed lookahead raise LookaheadViolation.
    """
    dataset = dataset or lookahead_family(0)
    (x1, y1), (x2, y2) = dataset.pairs[:2]
    max_sum, violations = -np.inf, 0
    for t in range(trials):
        model = generator(t)
        check_restricted(model, dataset, lookahead)
        s = model.sequence_prob(x1, y1) + model.sequence_prob(x2, y2)
        max_sum = max(max_sum, s)
        if s > 1.0 + tol:
            violations += 1
    return AuditReport(trials, float(max_sum) if trials else float("nan"), violations, tol=tol)


def random_local_generator(seed: int = 0, scales=(0.5, 2.0, 8.0, 30.0), lookahead: int = 0):
    """Generator over RandomLocalModels, cycling through score scales (flat to peaked)."""
    def gen(t):
        return RandomLocalModel([seed, t], scales[t % len(scales)], lookahead=lookahead)
    return gen


# -- local as global ------------------------------------------------------------

def embed_local_as_global(model: LocalModel, floor: float | None = PROB_FLOOR) -> FunctionScorer:
    """Global scores equal to the local log-conditionals.

    The local normalizers are then all 1, so the global model reproduces
    the local distribution. ``floor`` replaces zero probabilities, whose log
    is undefined; with ``floor=None`` they raise instead.
    """
    def fn(hist, words, i):
        p = np.asarray(model.conditional(hist, words, i), dtype=np.float64)
        if floor is None:
            if np.any(p <= 0.0):
                raise ValueError(f"zero-probability decision at position {i + 1}; pass a floor")
            return np.log(p)
        return np.log(np.maximum(p, floor))
    return FunctionScorer(model.tags, fn)


def embedding_error(model: LocalModel, words: Sequence[str], floor: float | None = PROB_FLOOR) -> float:
    """max |p_G - p_L| over every tag sequence for ``words``."""
    p_g = global_distribution(embed_local_as_global(model, floor), words)
    p_l = model.distribution(words)
    return max(abs(p_g[s] - p_l[s]) for s in p_l)


# -- report ---------------------------------------------------------------------

@dataclass
class AlphaRow:
    alpha: float
    p_first: float
    p_second: float

    @property
    def total(self) -> float:
        return self.p_first + self.p_second


def alpha_table(alphas: Sequence[float] = DEFAULT_ALPHAS, k: int = 0) -> list[AlphaRow]:
    data = lookahead_family(k)
    (x1, y1), (x2, y2) = data.pairs
    rows = []
    for a in alphas:
        model = alpha_model(a, k)
        rows.append(AlphaRow(a, toy_global_distribution(model, x1)[y1], toy_global_distribution(model, x2)[y2]))
    return rows


def format_report(rows: Sequence[AlphaRow], k: int, audit: AuditReport | None) -> str:
    (x1, y1), (x2, y2) = lookahead_family(k).pairs
    g1, g2 = f"p_G({''.join(y1)}|{''.join(x1)})", f"p_G({''.join(y2)}|{''.join(x2)})"
    w = max(len(g1), 12)
    lines = [f"# lookahead family k={k}: {' '.join(x1)} -> {' '.join(y1)} ; {' '.join(x2)} -> {' '.join(y2)}",
             f"{'alpha':>8}  {g1:>{w}}  {g2:>{w}}  {'sum':>10}"]
    for r in rows:
        lines.append(f"{r.alpha:>8g}  {r.p_first:>{w}.6f}  {r.p_second:>{w}.6f}  {r.total:>10.6f}")
    if audit is not None:
        lines.append(f"# local audit: trials={audit.trials} max_sum={audit.max_sum:.12f} "
                     f"bound={audit.bound:g} violations={audit.violations}")
    return "\n".join(lines) + "\n"

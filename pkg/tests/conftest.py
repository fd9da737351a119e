from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from globnorm.features import fit_vocabularies, parse_template
from globnorm.labbias import FunctionScorer
from globnorm.model import NeuralModel
from globnorm.systems import CompressionSystem, TaggingSystem, make_system, unroll_gold
from globnorm.corpus import generate_synthetic
from globnorm.transitions import Sentence

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

TAGS5 = ("A", "B", "C", "D", "E")

SMALL_TEMPLATES = {
    "tagging": "words input:form -1..1 2\nchars chars:2 0 2\ntags history 1..2 2\n",
    "parsing": "words input:form s0,b0,s1 2\ntags input:tag s0,b0 2\nlabels label s0.l1 2\n",
    "compression": "words input:form -1..1 2\nhistory history 1..2 2\n",
}
GENERATOR_FOR = {"tagging": "separable-tagging", "parsing": "projective-trees", "compression": "keep-drop"}


def tagging_model(words=("a", "b", "c"), tags=TAGS5, hidden=(3,), seed=0, activation="relu",
                  template="words input:form -1..1 2\ntags history 1..2 2\n"):
    system = TaggingSystem(tags)
    sents = [Sentence.from_words(list(words))]
    tpl = fit_vocabularies(parse_template(template), sents, system)
    return NeuralModel.initialize(system, tpl, hidden, seed, activation), sents[0]


def zeroed(model):
    return model.with_params(model.params.zeros_like())


def small_instance(task, seed=0, hidden=(4, 3), activation="relu", min_len=3, max_len=4):
    """Seeded model (a few hundred parameters), sentence and gold decisions."""
    _, X, y = generate_synthetic(GENERATOR_FOR[task], 1, seed=seed, min_len=min_len, max_len=max_len)
    system = make_system(task, y)
    tpl = fit_vocabularies(parse_template(SMALL_TEMPLATES[task]), X, system)
    model = NeuralModel.initialize(system, tpl, hidden, seed, activation)
    return model, X[0], unroll_gold(system, X[0], y[0])


def table_scorer(tags, seed, scale=1.0):
    """Scores drawn once per decision history; independent of the network code."""
    rng = np.random.default_rng(seed)
    table = {}

    def fn(hist, words, i):
        if hist not in table:
            table[hist] = rng.normal(0.0, scale, len(tags))
        return table[hist]
    return FunctionScorer(tags, fn)


@pytest.fixture
def abc():
    return Sentence.from_words(["a", "b", "c"])

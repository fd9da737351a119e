from __future__ import annotations

from typing import Sequence

import numpy as np

from .features import FeatureExtractor, FeatureTemplate
from .network import ACTIVATIONS, Params, backward, check_shapes, forward, init_params
from .transitions import Sentence, State, TransitionSystem


class NeuralModel:
    """A transition system scored by the feed-forward network.

    ``score_states`` is the scoring interface used by inference: it returns
    one row of decision scores per state (disallowed entries are ignored by
    the caller) and an opaque cache for ``backward``.
    """

    def __init__(self, system: TransitionSystem, template: FeatureTemplate, params: Params,
                 activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        check_shapes(params, template, system.n_actions)
        self.system = system
        self.template = template
        self.params = params
        self.activation = activation
        self.extractor = FeatureExtractor(template, system)

    @classmethod
    def initialize(cls, system, template, hidden_sizes: Sequence[int], seed=0, activation="relu"):
        return cls(system, template, init_params(template, hidden_sizes, system.n_actions, seed), activation)

    def with_params(self, params: Params) -> "NeuralModel":
        return NeuralModel(self.system, self.template, params, self.activation)

    def check_sentence(self, sentence: Sentence) -> None:
        self.extractor.check_sentence(sentence)

    def score_states(self, states: Sequence[State], sentence: Sentence, params: Params | None = None):
        params = self.params if params is None else params
        batch = self.extractor.extract_batch(states, sentence)
        return forward(batch, params, self.template, self.activation)

    def backward(self, cache, upstream: np.ndarray, params: Params | None = None) -> Params:
        params = self.params if params is None else params
        return backward(cache, upstream, params, self.template, self.activation)

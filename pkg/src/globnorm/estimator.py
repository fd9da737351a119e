"""scikit-learn style front end.

``TransitionModel`` wraps system construction, vocabulary fitting,
two-stage training and beam decoding behind ``fit``/``predict``/``score``,
so it works with ``clone``, ``get_params`` and model-selection utilities.
"""
from __future__ import annotations

from typing import TextIO

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_annotations, check_positive_int, check_sentences, check_task
from .archive import ModelArchive, load_model, save_model
from .features import FeatureTemplate, default_template, fit_vocabularies, parse_template
from .inference import MODES, ScoredSequence, beam_search, greedy_decode, scored
from .model import NeuralModel
from .systems import PARSING, PRIMARY_METRIC, evaluate_corpus, make_system
from .training import TrainConfig, reinitialize_final_layer, train

DEFAULT_HIDDEN = {"tagging": (256,), "parsing": (1024, 1024), "compression": (400,)}
STAGE_CHOICES = ("local", "global", "two-stage")


class TransitionModel(BaseEstimator):
    """Transition-based tagger, parser or compressor with beam decoding.

    Parameters
    ----------
    task : {"tagging", "parsing", "compression"}
    template : str, FeatureTemplate or None
        Feature template (text or object); None uses the task default.
    hidden_sizes : tuple of int or None
        Hidden layer widths; None uses the task default.
    lookahead : int or None
        If set, overrides every feature group's lookahead limit.
    stage : {"local", "global", "two-stage"}
        Local likelihood only, beam CRF only, or local pretraining followed
        by beam CRF training with a re-initialized decision layer.
    beam_size : int
        Beam width for global training and for decoding.
    loss : {"crf", "hinge"}
        Objective of the global stage.
    trainable : str
        Parameter subset updated in the global stage.
    clip_norm : float or None
        Largest global gradient norm per update; None disables clipping.
    decode_mode : {"local", "global"} or None
        Beam ranking at prediction time; None follows the last stage.
    """

    def __init__(self, task="tagging", template=None, hidden_sizes=None, activation="relu",
                 lookahead=None, stage="two-stage", beam_size=8, loss="crf", margin=1.0,
                 trainable="full", local_epochs=10, global_epochs=10, learning_rate=0.02,
                 global_learning_rate=None, momentum=0.9, decay=0.96, decay_steps=1000,
                 clip_norm=5.0, batch_size=1, patience=None, seed=0, decode_mode=None):
        self.task = task
        self.template = template
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.lookahead = lookahead
        self.stage = stage
        self.beam_size = beam_size
        self.loss = loss
        self.margin = margin
        self.trainable = trainable
        self.local_epochs = local_epochs
        self.global_epochs = global_epochs
        self.learning_rate = learning_rate
        self.global_learning_rate = global_learning_rate
        self.momentum = momentum
        self.decay = decay
        self.decay_steps = decay_steps
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed
        self.decode_mode = decode_mode

    # -- configuration ----------------------------------------------------------

    def _template(self) -> FeatureTemplate:
        t = self.template
        if t is None:
            t = default_template(self.task)
        elif isinstance(t, str):
            t = parse_template(t)
        elif not isinstance(t, FeatureTemplate):
            raise TypeError("template must be None, template text or a FeatureTemplate")
        if self.lookahead is not None:
            if self.lookahead < 0:
                raise ValueError("lookahead must be >= 0")
            t = t.with_lookahead(self.lookahead)
        return t

    def _stage_config(self, stage: str) -> TrainConfig:
        glob = stage == "global"
        lr = self.global_learning_rate if glob and self.global_learning_rate is not None else self.learning_rate
        return TrainConfig(
            stage=stage, beam_size=self.beam_size, trainable=self.trainable if glob else "full",
            loss=self.loss if glob else "crf", margin=self.margin, learning_rate=lr,
            momentum=self.momentum, decay=self.decay, decay_steps=self.decay_steps,
            clip_norm=self.clip_norm, epochs=self.global_epochs if glob else self.local_epochs, patience=self.patience,
            batch_size=self.batch_size, seed=self.seed + (1 if glob else 0),
        )

    def _mode(self) -> str:
        mode = self.decode_mode or ("local" if self.stage == "local" else "global")
        if mode not in MODES:
            raise ValueError(f"decode_mode must be one of {MODES}")
        return mode

    # -- fitting ------------------------------------------------------------------

    def fit(self, X, y, eval_set=None, log_stream: TextIO | None = None):
        """Train on sentences ``X`` with annotations ``y``.

        ``eval_set`` = (X_dev, y_dev) enables per-epoch held-out evaluation
        and early stopping; ``log_stream`` receives the training log lines.
        """
        check_task(self.task)
        if self.stage not in STAGE_CHOICES:
            raise ValueError(f"stage must be one of {STAGE_CHOICES}")
        check_positive_int("beam_size", self.beam_size)
        X = check_sentences(X)
        y = check_annotations(y, self.task, X)
        if not X:
            raise ValueError("empty training corpus")
        dev = None
        if eval_set is not None:
            Xd = check_sentences(eval_set[0])
            dev = (Xd, check_annotations(eval_set[1], self.task, Xd))

        system = make_system(self.task, y)
        template = fit_vocabularies(self._template(), X, system)
        hidden = tuple(self.hidden_sizes) if self.hidden_sizes is not None else DEFAULT_HIDDEN[self.task]
        model = NeuralModel.initialize(system, template, hidden, self.seed, self.activation)
        for x in X:
            model.check_sentence(x)

        log = []
        stages = ["local", "global"] if self.stage == "two-stage" else [self.stage]
        result = None
        for stage in stages:
            if stage == "global" and result is not None:
                model = model.with_params(reinitialize_final_layer(result.model.params, self.seed))
            result = train(model, X, y, self._stage_config(stage), dev, log_stream)
            log.extend(result.log)
            if stage == "local":
                self.pretrained_ = result.model

        self.model_ = result.model
        self.raw_params_ = result.raw_params
        self.log_ = log
        self.system_ = system
        self.n_features_in_ = template.input_width
        return self

    # -- prediction ---------------------------------------------------------------

    def decode(self, X, beam_size=None, mode=None) -> list[ScoredSequence]:
        check_is_fitted(self, "model_")
        X = check_sentences(X)
        B = beam_size or self.beam_size
        mode = mode or self._mode()
        out = []
        for x in X:
            self.model_.check_sentence(x)
            if B == 1 and mode == "local":
                out.append(greedy_decode(x, self.model_))
            else:
                out.append(scored(beam_search(x, self.model_, B, mode).top))
        return out

    def predict(self, X, beam_size=None, mode=None) -> list:
        X = check_sentences(X)
        seqs = self.decode(X, beam_size, mode)
        return [self.system_.reconstruct(x, s.decisions) for x, s in zip(X, seqs)]

    def evaluate(self, X, y, beam_size=None, mode=None) -> dict[str, float]:
        X = check_sentences(X)
        y = check_annotations(y, self.task, X)
        tags = None
        if self.task == PARSING and all("tag" in x.columns for x in X):
            tags = [x.column("tag") for x in X]
        return evaluate_corpus(self.predict(X, beam_size, mode), y, tags)

    def score(self, X, y) -> float:
        """Primary metric as a fraction: accuracy, UAS or compression F1."""
        return self.evaluate(X, y)[PRIMARY_METRIC[self.task]] / 100.0

    # -- persistence --------------------------------------------------------------

    def _metadata(self) -> dict:
        params = self.get_params()
        if isinstance(params["template"], FeatureTemplate):
            params["template"] = params["template"].to_text()
        if params["hidden_sizes"] is not None:
            params["hidden_sizes"] = list(params["hidden_sizes"])
        return {"estimator": params}

    def to_archive(self) -> ModelArchive:
        check_is_fitted(self, "model_")
        return ModelArchive(self.model_, self.raw_params_, self._metadata())

    def save(self, path) -> None:
        save_model(path, self.to_archive())

    @classmethod
    def from_archive(cls, archive: ModelArchive) -> "TransitionModel":
        params = dict(archive.metadata.get("estimator", {}))
        params.setdefault("task", archive.model.system.kind)
        if params.get("hidden_sizes") is not None:
            params["hidden_sizes"] = tuple(params["hidden_sizes"])
        est = cls(**params)
        est.model_ = archive.model
        est.raw_params_ = archive.raw_params
        est.system_ = archive.model.system
        est.log_ = []
        est.n_features_in_ = archive.model.template.input_width
        return est

    @classmethod
    def load(cls, path) -> "TransitionModel":
        return cls.from_archive(load_model(path))

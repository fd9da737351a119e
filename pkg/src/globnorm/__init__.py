"""Globally normalized transition-based neural networks."""
from .archive import ArchiveError, ModelArchive, load_model, save_model
from .corpus import CorpusFormatError, generate_synthetic, read_corpus, write_corpus
from .estimator import TransitionModel
from .features import FeatureTemplate, TemplateError, default_template, parse_template
from .inference import beam_search, decode, enumerate_all, greedy_decode
from .model import NeuralModel
from .systems import (ArcStandardSystem, CompressionSystem, KeepAnnotation, TagAnnotation,
                      TaggingSystem, TreeAnnotation, evaluate, evaluate_corpus, make_system)
from .training import TrainConfig, gradient_check, train
from .transitions import IllegalDecisionError, OracleError, Sentence, State, Token, TransitionError

__version__ = "0.1.0"

__all__ = [
    "ArchiveError", "ModelArchive", "load_model", "save_model",
    "CorpusFormatError", "generate_synthetic", "read_corpus", "write_corpus",
    "TransitionModel",
    "FeatureTemplate", "TemplateError", "default_template", "parse_template",
    "beam_search", "decode", "enumerate_all", "greedy_decode",
    "NeuralModel",
    "ArcStandardSystem", "CompressionSystem", "KeepAnnotation", "TagAnnotation",
    "TaggingSystem", "TreeAnnotation", "evaluate", "evaluate_corpus", "make_system",
    "TrainConfig", "gradient_check", "train",
    "IllegalDecisionError", "OracleError", "Sentence", "State", "Token", "TransitionError",
]

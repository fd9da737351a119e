"""Local and globally normalized training.

Loss functions work on a ``NeuralModel`` and read its current ``params``.
The beam losses are split in two: beam search picks the set of competing
paths, and a differentiable function of the parameters scores that fixed
set. Gradients never flow through the pruning decisions, which is also
what makes finite-difference checks of the beam losses well defined.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence, TextIO

import numpy as np

from .inference import beam_search, decode, logsumexp
from .model import NeuralModel
from .network import TRAINABLE_SUBSETS, Params, restrict_trainable
from .systems import PRIMARY_METRIC, evaluate_corpus, gold_corpus
from .transitions import Sentence

log = logging.getLogger(__name__)

STAGES = ("local", "global")
LOSSES = ("crf", "hinge")


class TrainingDivergedError(RuntimeError):
    pass


# -- scoring fixed sets of paths ----------------------------------------------

def _score_paths(model: NeuralModel, sentence: Sentence, paths: Sequence[Sequence[int]]):
    """Raw path totals plus what is needed to push gradients back."""
    system = model.system
    rows: dict[tuple, int] = {}
    states = []
    start = system.start_state(sentence)
    for path in paths:
        state = start
        for j, d in enumerate(path):
            key = tuple(path[:j])
            if key not in rows:
                rows[key] = len(states)
                states.append(state)
            state = system.apply(states[rows[key]], d, sentence)
    scores, cache = model.score_states(states, sentence)
    totals = np.array([sum(scores[rows[tuple(p[:j])], d] for j, d in enumerate(p)) for p in paths])
    return totals, scores, cache, rows


def _path_upstream(shape, rows, paths, weights) -> np.ndarray:
    up = np.zeros(shape)
    for path, w in zip(paths, weights):
        if w == 0.0:
            continue
        for j, d in enumerate(path):
            up[rows[tuple(path[:j])], d] += w
    return up


def set_loss_and_grad(model: NeuralModel, sentence: Sentence, paths: Sequence[Sequence[int]],
                      gold_index: int) -> tuple[float, Params]:
    """-score(gold) + log sum_paths exp score(path), for a frozen path set."""
    paths = [tuple(p) for p in paths]
    totals, scores, cache, rows = _score_paths(model, sentence, paths)
    logz = logsumexp(totals)
    loss = logz - totals[gold_index]
    weights = np.exp(totals - logz)
    weights[gold_index] -= 1.0
    up = _path_upstream(scores.shape, rows, paths, weights)
    return float(loss), model.backward(cache, up)


def hinge_pair_loss_and_grad(model: NeuralModel, sentence: Sentence, gold: Sequence[int],
                             rival: Sequence[int], margin: float = 1.0) -> tuple[float, Params]:
    """max(0, score(rival) + margin - score(gold)) for frozen paths."""
    paths = [tuple(gold), tuple(rival)]
    totals, scores, cache, rows = _score_paths(model, sentence, paths)
    loss = totals[1] + margin - totals[0]
    if loss <= 0.0:
        return 0.0, model.params.zeros_like()
    up = _path_upstream(scores.shape, rows, paths, [-1.0, 1.0])
    return float(loss), model.backward(cache, up)


# -- the three training losses -----------------------------------------------

def local_loss_and_grad(model: NeuralModel, sentence: Sentence, gold: Sequence[int]) -> tuple[float, Params]:
    """Negative log-likelihood of the gold sequence under per-step softmax."""
    system = model.system
    states = system.replay(sentence, gold)[:-1]
    scores, cache = model.score_states(states, sentence)
    up = np.zeros_like(scores)
    loss = 0.0
    for j, (state, d) in enumerate(zip(states, gold)):
        allowed = list(system.allowed(state, sentence))
        row = scores[j, allowed]
        logz = logsumexp(row)
        loss += logz - scores[j, d]
        up[j, allowed] = np.exp(row - logz)
        up[j, d] -= 1.0
    return float(loss), model.backward(cache, up)


def beam_update_set(model: NeuralModel, sentence: Sentence, gold: Sequence[int], beam_size: int):
    """Paths competing in the early update and the index of the gold path.

    Decodes in global mode while tracking ``gold``. If gold is pruned at
    step j the set is the B kept prefixes plus the gold prefix (B + 1
    paths); otherwise it is the final beam, which contains gold once.
    """
    beam = beam_search(sentence, model, beam_size, "global", gold=gold, early_update=True)
    items = beam.update_set()
    gold_index = next(i for i, it in enumerate(items) if it.gold)
    return [it.prefix for it in items], gold_index, beam.fallout, items


def global_beam_loss_and_grad(model: NeuralModel, sentence: Sentence, gold: Sequence[int],
                              beam_size: int) -> tuple[float, Params, int | None]:
    paths, gold_index, fallout, _ = beam_update_set(model, sentence, gold, beam_size)
    loss, grads = set_loss_and_grad(model, sentence, paths, gold_index)
    return loss, grads, fallout


def hinge_rival(model, sentence, gold, beam_size):
    """Gold prefix and best non-gold beam element at the update point."""
    paths, gold_index, fallout, items = beam_update_set(model, sentence, gold, beam_size)
    rivals = [it for it in items if not it.gold]
    rival = rivals[0].prefix if rivals else None  # beam order is best first
    return paths[gold_index], rival, fallout


def hinge_loss_and_grad(model: NeuralModel, sentence: Sentence, gold: Sequence[int], beam_size: int,
                        margin: float = 1.0) -> tuple[float, Params, int | None]:
    gold_prefix, rival, fallout = hinge_rival(model, sentence, gold, beam_size)
    if rival is None:
        return 0.0, model.params.zeros_like(), fallout
    loss, grads = hinge_pair_loss_and_grad(model, sentence, gold_prefix, rival, margin)
    return loss, grads, fallout


def exact_global_nll(model: NeuralModel, sentence: Sentence, gold: Sequence[int], cap: int = 10 ** 6) -> float:
    from .inference import enumerate_all
    seqs, logz = enumerate_all(sentence, model, cap)
    gold = tuple(gold)
    return logz - next(s.raw for s in seqs if s.decisions == gold)


# -- averaged SGD with momentum ----------------------------------------------

@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    decay: float = 1.0
    decay_steps: int = 1
    clip_norm: float | None = None
    velocity: Params | None = None
    average: Params | None = None
    steps: int = 0

    def current_rate(self) -> float:
        return self.learning_rate * self.decay ** (self.steps / self.decay_steps)


def sgd_step(params: Params, grads: Params, opt: OptimizerState) -> Params:
    """One momentum step, in place, followed by an update of the running average.

    With ``opt.clip_norm`` set, the gradient is rescaled so its global L2
    norm does not exceed it.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise TrainingDivergedError(f"non-finite gradient in {name} ({bad} entries) at step {opt.steps + 1}")
    if opt.velocity is None:
        opt.velocity = params.zeros_like()
    if opt.average is None:
        opt.average = params.zeros_like()
    eta = opt.current_rate()
    if opt.clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for _, g in grads.items()))
        if norm > opt.clip_norm:
            eta *= opt.clip_norm / norm
    opt.steps += 1
    for name in params:
        v = opt.velocity[name]
        v *= opt.momentum
        v -= eta * grads[name]
        params[name] += v
        avg = opt.average[name]
        avg += (params[name] - avg) / opt.steps
    params.version += 1
    return params


# -- the training loop --------------------------------------------------------

@dataclass
class TrainConfig:
    stage: str = "local"
    beam_size: int = 8
    trainable: str = "full"
    loss: str = "crf"
    margin: float = 1.0
    learning_rate: float = 0.02
    momentum: float = 0.9
    decay: float = 0.96
    decay_steps: int = 1000
    clip_norm: float | None = 5.0
    epochs: int = 10
    patience: int | None = None
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.stage == "local" and self.loss != "crf":
            raise ValueError("the local stage trains the per-step likelihood; beam losses need stage=global")
        if self.trainable not in TRAINABLE_SUBSETS:
            raise ValueError(f"trainable must be one of {TRAINABLE_SUBSETS}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")
        if self.beam_size < 1 or self.batch_size < 1 or self.epochs < 0 or self.decay_steps < 1:
            raise ValueError("beam_size, batch_size, decay_steps must be >= 1 and epochs >= 0")

    @property
    def decode_mode(self) -> str:
        return self.stage


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    loss: float
    metric: float
    fallout: dict = field(default_factory=dict)

    def to_line(self) -> str:
        hist = ",".join(f"{k}:{v}" for k, v in sorted(self.fallout.items(), key=lambda kv: (kv[0] == "none", kv[0])))
        return (f"stage={self.stage}\tepoch={self.epoch}\tloss={self.loss:.6f}"
                f"\tmetric={self.metric:.4f}\tfallout={hist or '-'}")

    @classmethod
    def from_line(cls, line: str) -> "EpochRecord":
        kv = dict(part.split("=", 1) for part in line.rstrip("\n").split("\t"))
        hist = {}
        if kv["fallout"] != "-":
            for pair in kv["fallout"].split(","):
                k, v = pair.split(":")
                hist["none" if k == "none" else int(k)] = int(v)
        return cls(kv["stage"], int(kv["epoch"]), float(kv["loss"]), float(kv["metric"]), hist)


@dataclass
class TrainResult:
    model: NeuralModel          # averaged parameters, used for decoding
    raw_params: Params
    log: list[EpochRecord]
    best_epoch: int


def evaluate_model(model: NeuralModel, sentences, golds, beam_size: int, mode: str) -> dict[str, float]:
    preds = [model.system.reconstruct(x, decode(x, model, beam_size, mode).decisions) for x in sentences]
    tags = None
    if model.system.kind == "parsing" and all("tag" in x.columns for x in sentences):
        tags = [x.column("tag") for x in sentences]
    return evaluate_corpus(preds, golds, tags)


def train(model: NeuralModel, sentences: Sequence[Sentence], golds, config: TrainConfig,
          dev: tuple | None = None, log_stream: TextIO | None = None) -> TrainResult:
    """Train ``model`` in place on one stage; returns the averaged model.

    With ``dev`` = (sentences, golds) the held-out metric is tracked per
    epoch and the best averaged parameters are kept (early stopping after
    ``patience`` epochs without improvement).
    """
    examples = gold_corpus(model.system, sentences, golds)
    if not examples:
        raise ValueError("no usable training examples")
    for x, _ in examples:
        model.check_sentence(x)
    rng = np.random.default_rng(config.seed)
    opt = OptimizerState(config.learning_rate, config.momentum, config.decay, config.decay_steps,
                         config.clip_norm)
    params = model.params
    metric_key = PRIMARY_METRIC[model.system.kind]
    records: list[EpochRecord] = []
    best_params, best_metric, best_epoch, bad = params.copy(), -np.inf, 0, 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(examples))
        total, hist = 0.0, Counter()
        for start in range(0, len(order), config.batch_size):
            acc = None
            for i in order[start:start + config.batch_size]:
                x, gold = examples[i]
                if config.stage == "local":
                    loss, grads = local_loss_and_grad(model, x, gold)
                else:
                    if config.loss == "crf":
                        loss, grads, fallout = global_beam_loss_and_grad(model, x, gold, config.beam_size)
                    else:
                        loss, grads, fallout = hinge_loss_and_grad(model, x, gold, config.beam_size, config.margin)
                    hist["none" if fallout is None else fallout] += 1
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite loss in epoch {epoch}")
                total += loss
                grads = restrict_trainable(grads, config.trainable)
                if acc is None:
                    acc = grads
                else:
                    acc.add_(grads)
            sgd_step(params, acc, opt)

        averaged = model.with_params(opt.average.copy())
        metric = float("nan")
        if dev is not None:
            metric = evaluate_model(averaged, dev[0], dev[1], config.beam_size, config.decode_mode)[metric_key]
        rec = EpochRecord(config.stage, epoch, total / len(examples), metric, dict(hist))
        records.append(rec)
        if log_stream is not None:
            print(rec.to_line(), file=log_stream, flush=True)
        log.info(rec.to_line())
        if dev is None or metric > best_metric:
            best_params, best_metric, best_epoch, bad = averaged.params, metric, epoch, 0
        else:
            bad += 1
            if config.patience is not None and bad >= config.patience:
                break

    return TrainResult(model.with_params(best_params), params, records, best_epoch)


def reinitialize_final_layer(params: Params, seed: int, bias: float = 0.1) -> Params:
    """Copy of ``params`` with a freshly drawn decision layer."""
    out = params.copy()
    rng = np.random.default_rng([seed, 1])
    fan_in, fan_out = out["Wd"].shape
    r = np.sqrt(6.0 / (fan_in + fan_out))
    out["Wd"] = rng.uniform(-r, r, size=(fan_in, fan_out))
    out["bd"] = np.full(fan_out, bias)
    return out


# -- finite-difference gradient checks ---------------------------------------

def numeric_gradient(loss_fn: Callable[[], float], params: Params, h: float = 1e-4) -> Params:
    """Central differences of ``loss_fn`` (which reads ``params``) per coordinate."""
    out = params.zeros_like()
    for name, arr in params.items():
        flat = arr.reshape(-1)
        g = out[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            params.version += 1
            up = loss_fn()
            flat[i] = orig - h
            params.version += 1
            down = loss_fn()
            flat[i] = orig
            params.version += 1
            g[i] = (up - down) / (2 * h)
    return out


def max_relative_error(analytic: Params, numeric: Params, floor: float = 1e-6) -> float:
    a, n = analytic.flat(), numeric.flat()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


@dataclass
class GradientReport:
    errors: dict[str, float]
    tolerance: float
    n_params: int

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    def lines(self) -> list[str]:
        out = [f"parameters: {self.n_params}"]
        for name, err in self.errors.items():
            out.append(f"{name:<14} max_rel_err={err:.3e}  {'ok' if err < self.tolerance else 'FAIL'}")
        return out


def gradient_check(model: NeuralModel, sentence: Sentence, gold: Sequence[int], beam_size: int = 2,
                   margin: float = 1.0, tolerance: float = 1e-4, h: float = 1e-4) -> GradientReport:
    """Compare analytic gradients of all three losses against central differences."""
    params = model.params
    errors = {}

    loss, g = local_loss_and_grad(model, sentence, gold)
    errors["local"] = max_relative_error(g, numeric_gradient(lambda: local_loss_and_grad(model, sentence, gold)[0], params, h))

    paths, gi, _, _ = beam_update_set(model, sentence, gold, beam_size)
    _, g = set_loss_and_grad(model, sentence, paths, gi)
    num = numeric_gradient(lambda: set_loss_and_grad(model, sentence, paths, gi)[0], params, h)
    errors["global-beam"] = max_relative_error(g, num)

    gold_prefix, rival, _ = hinge_rival(model, sentence, gold, beam_size)
    if rival is not None:
        _, g = hinge_pair_loss_and_grad(model, sentence, gold_prefix, rival, margin)
        num = numeric_gradient(lambda: hinge_pair_loss_and_grad(model, sentence, gold_prefix, rival, margin)[0], params, h)
        errors["hinge"] = max_relative_error(g, num)
    return GradientReport(errors, tolerance, params.size)


def config_from_dict(values: dict) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in values.items() if k in names})


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)

"""``globnorm`` command line.

Subcommands: train, decode, eval, gradcheck, labbias, synth. Exit status is
0 on success, 1 on a runtime failure and 2 on a usage or validation error.
"""
from __future__ import annotations

import argparse
import inspect
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import yaml

from . import labbias
from .archive import ArchiveError, load_model
from .corpus import CorpusFormatError, GENERATORS, generate_synthetic, read_corpus, write_corpus
from .estimator import TransitionModel
from .features import TemplateError, fit_vocabularies, parse_template
from .inference import beam_search, greedy_decode, scored
from .model import NeuralModel
from .systems import TASKS, evaluate_corpus, make_system, unroll_gold
from .training import TrainingDivergedError, gradient_check

log = logging.getLogger("globnorm")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

ESTIMATOR_KEYS = tuple(inspect.signature(TransitionModel.__init__).parameters)[1:]


class UsageError(Exception):
    """Bad arguments, config or input files; maps to exit status 2."""


# -- configuration ----------------------------------------------------------------

def parse_override(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"override {text!r} is not key=value")
    return key.strip(), yaml.safe_load(value) if value else None


def load_config(path, overrides=(), seed=None) -> dict:
    """YAML mapping of estimator parameters, updated by ``key=value`` overrides."""
    config = {}
    if path is not None:
        try:
            config = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
        except yaml.YAMLError as e:
            raise UsageError(f"invalid YAML in {path}: {e}") from None
        if not isinstance(config, dict):
            raise UsageError(f"{path}: config must be a mapping")
    for text in overrides:
        key, value = parse_override(text)
        config[key] = value
    if seed is not None:
        config["seed"] = seed
    unknown = sorted(set(config) - set(ESTIMATOR_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    if isinstance(config.get("hidden_sizes"), list):
        config["hidden_sizes"] = tuple(config["hidden_sizes"])
    template = config.get("template")
    if isinstance(template, str) and "\n" not in template and Path(template).is_file():
        base = Path(template).parent
        try:
            config["template"] = parse_template(Path(template).read_text(encoding="utf-8"), base)
        except TemplateError as e:
            raise UsageError(str(e)) from None
    return config


def _read(path, task, gold=True):
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    return read_corpus(path, task, gold)


# -- subcommands ------------------------------------------------------------------

def cmd_train(args) -> int:
    config = load_config(args.config, args.set, args.seed)
    est = TransitionModel(**config)
    X, y = _read(args.train, est.task)
    eval_set = _read(args.dev, est.task) if args.dev else None
    log_file = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        est.fit(X, y, eval_set=eval_set, log_stream=log_file or sys.stderr)
    finally:
        if log_file:
            log_file.close()
    est.save(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    est = TransitionModel.from_archive(load_model(args.model))
    if args.task and args.task != est.task:
        raise UsageError(f"model was trained for {est.task}, not {args.task}")
    X, _ = _read(args.input, est.task, gold=False)
    for x in X:
        try:
            est.model_.check_sentence(x)
        except ValueError as e:
            raise UsageError(str(e)) from None
    model, B, mode = est.model_, args.beam or est.beam_size, args.mode or est._mode()

    def one(x):
        if B == 1 and mode == "local":
            seq = greedy_decode(x, model)
        else:
            seq = scored(beam_search(x, model, B, mode).top)
        return model.system.reconstruct(x, seq.decisions)

    start = time.perf_counter()
    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            preds = list(pool.map(one, X))
    else:
        preds = [one(x) for x in X]
    elapsed = max(time.perf_counter() - start, 1e-9)
    write_corpus(args.output, X, preds, est.task)
    print(f"decoded {len(X)} sentences in {elapsed:.2f}s ({len(X) / elapsed:.1f} sentences/sec)")
    return EXIT_OK


def cmd_eval(args) -> int:
    Xg, gold = _read(args.gold, args.task)
    Xp, pred = _read(args.pred, args.task)
    if len(Xg) != len(Xp):
        raise UsageError(f"gold has {len(Xg)} sentences, predictions {len(Xp)}")
    for i, (a, b) in enumerate(zip(Xg, Xp), 1):
        if a.forms != b.forms:
            raise UsageError(f"sentence {i}: gold and prediction tokens differ")
    tags = [x.column("tag") for x in Xg] if args.task == "parsing" else None
    for name, value in evaluate_corpus(pred, gold, tags).items():
        print(f"{name}\t{value:.2f}")
    return EXIT_OK


GRADCHECK_TEMPLATES = {
    "tagging": "words input:form -1..1 2 - -\nchars chars:2 0 2 - -\ntags history 1..2 2 - -\n",
    "parsing": "words input:form s0,b0,s1 2 - -\ntags input:tag s0,b0 2 - -\nlabels label s0.l1 2 - -\n",
    "compression": "words input:form -1..1 2 - -\nhistory history 1..2 2 - -\n",
}


def gradcheck_instance(task: str, seed: int = 0, hidden=(4, 3), activation="relu"):
    """A seeded model of a few hundred parameters and one gold example."""
    gen = {"tagging": "separable-tagging", "parsing": "projective-trees", "compression": "keep-drop"}[task]
    _, X, y = generate_synthetic(gen, 1, seed=seed, min_len=3, max_len=4)
    system = make_system(task, y)
    template = fit_vocabularies(parse_template(GRADCHECK_TEMPLATES[task]), X, system)
    model = NeuralModel.initialize(system, template, hidden, seed, activation)
    return model, X[0], unroll_gold(system, X[0], y[0])


def cmd_gradcheck(args) -> int:
    ok = True
    for task in args.task or TASKS:
        model, x, gold = gradcheck_instance(task, args.seed, tuple(args.hidden), args.activation)
        if model.params.size > 1000:
            raise UsageError(f"{model.params.size} parameters; gradient check is limited to 1000")
        report = gradient_check(model, x, gold, args.beam, tolerance=args.tolerance)
        print(f"[{task}]")
        print("\n".join(report.lines()))
        ok &= report.passed
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_labbias(args) -> int:
    if args.k < 0 or args.trials < 0:
        raise UsageError("k and trials must be >= 0")
    rows = labbias.alpha_table(args.alphas, args.k)
    audit = None
    if args.trials:
        audit = labbias.local_bound_audit(labbias.random_local_generator(args.seed), args.trials,
                                          labbias.lookahead_family(args.k))
    sys.stdout.write(labbias.format_report(rows, args.k, audit))
    return EXIT_OK


def cmd_synth(args) -> int:
    extra = {}
    if args.generator == "lookahead":
        extra = {"k": args.k, "pool": args.pool, "offset": args.offset}
    task, X, y = generate_synthetic(args.generator, args.size, args.seed, **extra)
    write_corpus(args.out, X, y, task)
    print(f"wrote {len(X)} {task} sentences to {args.out}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="globnorm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a YAML config")
    t.add_argument("--config", help="YAML file of estimator parameters")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--seed", type=int)
    t.add_argument("--train", required=True, help="training corpus (TSV)")
    t.add_argument("--dev", help="held-out corpus for early stopping")
    t.add_argument("--out", required=True, help="output model archive")
    t.add_argument("--log", help="training log file (default: stderr)")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", help="decode a corpus with a trained model")
    d.add_argument("--model", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--task", choices=TASKS, help="fail unless the model was trained for this task")
    d.add_argument("--beam", type=_positive)
    d.add_argument("--mode", choices=("local", "global"))
    d.add_argument("--threads", type=_positive, default=1)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="score predictions against gold")
    e.add_argument("--gold", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--task", required=True, choices=TASKS)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    g.add_argument("--task", action="append", choices=TASKS, help="repeatable; default all tasks")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--hidden", type=_positive, nargs="+", default=[4, 3])
    g.add_argument("--activation", choices=("relu", "tanh", "identity"), default="relu")
    g.add_argument("--beam", type=_positive, default=2)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    lb = sub.add_parser("labbias", help="label-bias table and local-model audit")
    lb.add_argument("--alphas", type=_floats, default=list(labbias.DEFAULT_ALPHAS))
    lb.add_argument("--k", type=int, default=0, help="lookahead family index")
    lb.add_argument("--trials", type=int, default=10_000, help="local models to audit (0 skips the audit)")
    lb.add_argument("--seed", type=int, default=0)
    lb.set_defaults(func=cmd_labbias)

    s = sub.add_parser("synth", help="write a synthetic corpus")
    s.add_argument("--generator", required=True, choices=sorted(GENERATORS))
    s.add_argument("--size", type=_positive, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=1, help="lookahead generator only")
    s.add_argument("--pool", type=_positive, default=1, help="lookahead generator only")
    s.add_argument("--offset", type=int, default=0, help="lookahead generator only")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, CorpusFormatError, ArchiveError, TemplateError) as e:
        print(f"globnorm {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError) as e:
        # estimator parameter validation
        print(f"globnorm {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, OSError, RuntimeError) as e:
        print(f"globnorm {args.command}: failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

import pytest

from globnorm.cli import load_config, main, UsageError


@pytest.fixture
def corpora(tmp_path):
    assert main(["synth", "--generator", "separable-tagging", "--size", "30", "--seed", "1",
                 "--out", str(tmp_path / "train.tsv")]) == 0
    assert main(["synth", "--generator", "separable-tagging", "--size", "10", "--seed", "2",
                 "--out", str(tmp_path / "test.tsv")]) == 0
    (tmp_path / "cfg.yaml").write_text(
        "task: tagging\nhidden_sizes: [16]\nlocal_epochs: 2\nglobal_epochs: 1\nbeam_size: 2\n", encoding="utf-8")
    return tmp_path


def train_args(d, out="m.gntp", *extra):
    return ["train", "--config", str(d / "cfg.yaml"), "--train", str(d / "train.tsv"),
            "--out", str(d / out), *extra]


def test_train_decode_eval(corpora, capsys):
    d = corpora
    assert main(train_args(d, "m.gntp", "--log", str(d / "log.txt"), "--dev", str(d / "test.tsv"))) == 0
    log = (d / "log.txt").read_text().splitlines()
    assert [l.split("\t")[0] for l in log] == ["stage=local", "stage=local", "stage=global"]
    assert main(["decode", "--model", str(d / "m.gntp"), "--input", str(d / "test.tsv"),
                 "--output", str(d / "pred.tsv"), "--threads", "2"]) == 0
    assert "sentences/sec" in capsys.readouterr().out
    assert main(["eval", "--gold", str(d / "test.tsv"), "--pred", str(d / "pred.tsv"), "--task", "tagging"]) == 0


def test_seeded_training_gives_identical_bytes(corpora):
    d = corpora
    assert main(train_args(d, "a.gntp", "--seed", "4")) == 0
    assert main(train_args(d, "b.gntp", "--seed", "4")) == 0
    assert (d / "a.gntp").read_bytes() == (d / "b.gntp").read_bytes()


def test_threads_do_not_change_output(corpora):
    d = corpora
    assert main(train_args(d)) == 0
    for n in ("1", "3"):
        assert main(["decode", "--model", str(d / "m.gntp"), "--input", str(d / "test.tsv"),
                     "--output", str(d / f"p{n}.tsv"), "--threads", n]) == 0
    assert (d / "p1.tsv").read_bytes() == (d / "p3.tsv").read_bytes()


def test_greedy_decode_equals_local_beam_of_one(corpora):
    d = corpora
    assert main(train_args(d, "m.gntp", "--set", "stage=local")) == 0
    assert main(["decode", "--model", str(d / "m.gntp"), "--input", str(d / "test.tsv"),
                 "--output", str(d / "g.tsv"), "--beam", "1", "--mode", "local"]) == 0
    from globnorm import TransitionModel
    from globnorm.corpus import read_corpus
    from globnorm.inference import beam_search, scored
    est = TransitionModel.load(d / "m.gntp")
    X, _ = read_corpus(d / "test.tsv", "tagging")
    _, preds = read_corpus(d / "g.tsv", "tagging")
    for x, p in zip(X, preds):
        assert est.system_.reconstruct(x, scored(beam_search(x, est.model_, 1, "local").top).decisions) == p


def test_usage_errors_exit_2(corpora, capsys):
    d = corpora
    assert main(["train", "--config", str(d / "cfg.yaml"), "--train", str(d / "missing.tsv"),
                 "--out", str(d / "m.gntp")]) == 2
    assert "no such file" in capsys.readouterr().err
    assert main(train_args(d, "m.gntp", "--set", "bogus=1")) == 2
    assert main(train_args(d, "m.gntp", "--set", "stage=pretrain")) == 2
    assert main(["train"]) == 2
    assert main([]) == 2


def test_decode_errors(corpora, capsys):
    d = corpora
    assert main(train_args(d)) == 0
    assert main(["decode", "--model", str(d / "m.gntp"), "--input", str(d / "test.tsv"),
                 "--output", str(d / "p.tsv"), "--task", "parsing"]) == 2
    (d / "bad.tsv").write_text("1\ta\n3\tb\n", encoding="utf-8")
    assert main(["decode", "--model", str(d / "m.gntp"), "--input", str(d / "bad.tsv"),
                 "--output", str(d / "p.tsv")]) == 2
    assert "bad.tsv:2:" in capsys.readouterr().err
    (d / "junk.gntp").write_bytes(b"junkjunkjunkjunk")
    assert main(["decode", "--model", str(d / "junk.gntp"), "--input", str(d / "test.tsv"),
                 "--output", str(d / "p.tsv")]) == 2


def test_eval_examples(tmp_path, capsys):
    gold = "1\ta\tN\t2\tx\n2\tb\tV\t0\troot\n3\tc\tN\t2\ty\n4\td\tN\t3\tz\n\n"
    pred = "1\ta\tN\t2\tx\n2\tb\tV\t0\troot\n3\tc\tN\t2\ty\n4\td\tN\t3\tWRONG\n\n"
    (tmp_path / "g.tsv").write_text(gold)
    (tmp_path / "p.tsv").write_text(pred)
    assert main(["eval", "--gold", str(tmp_path / "g.tsv"), "--pred", str(tmp_path / "g.tsv"), "--task", "parsing"]) == 0
    out = capsys.readouterr().out
    assert out == "exact_match\t100.00\nuas\t100.00\nlas\t100.00\n"
    assert main(["eval", "--gold", str(tmp_path / "g.tsv"), "--pred", str(tmp_path / "p.tsv"), "--task", "parsing"]) == 0
    out = capsys.readouterr().out
    assert "uas\t100.00" in out and "las\t75.00" in out
    (tmp_path / "short.tsv").write_text(gold + gold)
    assert main(["eval", "--gold", str(tmp_path / "g.tsv"), "--pred", str(tmp_path / "short.tsv"), "--task", "parsing"]) == 2


def test_labbias_output(capsys):
    assert main(["labbias", "--trials", "0"]) == 0
    out = capsys.readouterr().out
    rows = [l.split() for l in out.splitlines() if not l.startswith("#")][1:]
    assert [float(r[0]) for r in rows] == [0, 1, 2, 5, 10, 20]
    assert float(rows[-1][3]) > 1.99 and "audit" not in out
    assert main(["labbias", "--k", "2", "--trials", "50", "--alphas", "1,20"]) == 0
    out = capsys.readouterr().out
    assert "a b b b c -> A B B B C" in out and "trials=50" in out and "violations=0" in out
    assert main(["labbias", "--k", "-1"]) == 2


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--task", "tagging", "--seed", "3"]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
    assert main(["gradcheck", "--hidden", "200"]) == 2


def test_config_overrides(tmp_path):
    (tmp_path / "c.yaml").write_text("beam_size: 4\nhidden_sizes: [8, 8]\n")
    cfg = load_config(tmp_path / "c.yaml", ["beam_size=16", "loss=hinge"], seed=3)
    assert cfg == {"beam_size": 16, "hidden_sizes": (8, 8), "loss": "hinge", "seed": 3}
    with pytest.raises(UsageError):
        load_config(None, ["novalue"])
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(UsageError):
        load_config(tmp_path / "bad.yaml")

"""End-to-end subcommand tests driving cli.main(argv) in process."""

import numpy as np
import pytest

from mlvae import cli
from mlvae.corpus import Vocabulary

WORDS = ("oak", "elm", "fir", "ash", "yew", "bay", "ivy", "fig")


def corpus_lines():
    rng = np.random.default_rng(7)
    lines = []
    for _ in range(12):
        a, b, c = rng.choice(WORDS, size=3)
        lines.append(f"{a} {b} . {c} {a} .")
    return lines


TINY = [
    "--set", "d_emb=6", "--set", "d_plan=7", "--set", "d_word=8",
    "--set", "d_z=3", "--set", "sent_filters=2", "--set", "para_filters=2",
    "--set", "prior_hidden=3", "--set", "m_max=2", "--set", "n_max=6",
    "--set", "batch_size=4", "--set", "eval_every=4",
    "--set", "checkpoint_every=100", "--set", "heldout_fraction=0.0",
    "--set", "anneal_end=8",
]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "corpus.txt").write_text("\n".join(corpus_lines()) + "\n")
    pairs = [
        ("red fruit", "apples are red . they taste sweet ."),
        ("yellow fruit", "bananas are yellow . they bend easily ."),
        ("green fruit", "limes are green . very sour indeed ."),
        ("blue fruit", "berries are blue . birds eat them ."),
    ]
    (root / "pairs.tsv").write_text(
        "\n".join(f"{c}\t{t}" for c, t in pairs * 3) + "\n"
    )
    return root


def train_variant(workdir, variant, extra=()):
    out = workdir / f"run-{variant}{'-p' if extra else ''}"
    if not (out / "ckpt_final.mlv1").exists():
        src = "pairs.tsv" if extra else "corpus.txt"
        code = cli.main(
            ["train", str(workdir / src), "--out", str(out),
             "--variant", variant, "--steps", "8", "--seed", "3"]
            + TINY + list(extra)
        )
        assert code == 0
    return out / "ckpt_final.mlv1"


def test_build_vocab_writes_loadable_file(workdir, capsys):
    out = workdir / "vocab.tsv"
    assert cli.main(["build-vocab", str(workdir / "corpus.txt"), "--out", str(out)]) == 0
    vocab = Vocabulary.load(str(out))
    assert vocab.decode(0) == "_PAD" and len(vocab) > 3
    assert str(out) in capsys.readouterr().err


def test_build_vocab_missing_file_exits_2(workdir, capsys):
    assert cli.main(["build-vocab", str(workdir / "nope.txt"), "--out", "x"]) == 2
    assert "error:" in capsys.readouterr().err


def test_train_writes_run_dir(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    captured = capsys.readouterr()
    run = ckpt.parent
    assert ckpt.exists()
    assert (run / "ckpt_final.cfg").exists()
    assert (run / "vocab.tsv").exists()
    assert captured.out.splitlines()[0] == "step\trecon\tkl\tbeta\tppl"


def test_eval_prints_report(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    code = cli.main(
        ["eval", str(workdir / "corpus.txt"), "--checkpoint", str(ckpt), "--seed", "4"]
    )
    assert code == 0
    assert "nll <=" in capsys.readouterr().out


def test_sample_is_seeded_and_counted(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    out = workdir / "samples.txt"
    argv = ["sample", "--checkpoint", str(ckpt), "--count", "3", "--seed", "5",
            "--out", str(out)]
    assert cli.main(argv) == 0
    first = out.read_bytes()
    assert len(first.decode().splitlines()) == 3
    assert cli.main(argv) == 0
    assert out.read_bytes() == first
    capsys.readouterr()


def test_sample_from_lm_checkpoint_is_usage_error(workdir, capsys):
    ckpt = train_variant(workdir, "flat-LM")
    capsys.readouterr()
    code = cli.main(["sample", "--checkpoint", str(ckpt), "--count", "1"])
    assert code == 2
    assert "no latent space" in capsys.readouterr().err


def test_interpolate_emits_steps_plus_endpoints(workdir, capsys):
    ckpt = train_variant(workdir, "ml-VAE-D")
    capsys.readouterr()
    code = cli.main(
        ["interpolate", "--checkpoint", str(ckpt), "--seed-a", "1", "--seed-b", "2",
         "--steps", "2"]
    )
    assert code == 0
    assert len(capsys.readouterr().out.splitlines()) == 4


def test_metrics_panel(workdir, capsys):
    samples = workdir / "m_samples.txt"
    samples.write_text("the cat sat .\nthe dog ran .\n")
    code = cli.main(["metrics", str(samples), "--references", str(samples)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    panel = dict(line.split("\t") for line in lines)
    assert panel["B-2"] == "1.000000"
    assert {"sB-2", "uniq-2", "Etp-2"} <= panel.keys()
    assert all(float(v) >= 0.0 for v in panel.values())


def test_transfer_rewrites_each_text(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    pos = workdir / "pos.txt"
    neg = workdir / "neg.txt"
    texts = workdir / "inputs.txt"
    pos.write_text("oak elm .\noak fir .\n")
    neg.write_text("ivy fig .\nivy bay .\n")
    texts.write_text("elm oak .\nfig ivy .\nbay yew .\n")
    code = cli.main(
        ["transfer", str(texts), "--checkpoint", str(ckpt),
         "--positive", str(pos), "--negative", str(neg)]
    )
    assert code == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_generate_requires_paired_checkpoint(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    code = cli.main(["generate", "--checkpoint", str(ckpt), "--title", "red fruit"])
    assert code == 2
    assert "paired" in capsys.readouterr().err


def test_generate_from_paired_checkpoint(workdir, capsys):
    ckpt = train_variant(workdir, "ml-VAE-S", extra=("--set", "paired=1"))
    capsys.readouterr()
    argv = ["generate", "--checkpoint", str(ckpt), "--title", "red fruit"]
    assert cli.main(argv) == 0
    first = capsys.readouterr().out
    assert first.strip()
    assert cli.main(argv) == 0
    assert capsys.readouterr().out == first


def test_export_latents_labeled_csv(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    labeled = workdir / "labeled.txt"
    labeled.write_text("up\toak elm .\ndown\tivy fig .\n")
    out = workdir / "codes.csv"
    argv = ["export-latents", str(labeled), "--checkpoint", str(ckpt),
            "--labeled", "--out", str(out)]
    assert cli.main(argv) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()]
    assert [r[0] for r in rows] == ["up", "down"]
    assert all(len(r) == 1 + 3 for r in rows)  # label + d_z components
    first = out.read_bytes()
    assert cli.main(argv) == 0
    assert out.read_bytes() == first
    capsys.readouterr()


def test_export_latents_malformed_label_line_exits_2(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    bad = workdir / "bad_labels.txt"
    bad.write_text("no tab here .\n")
    code = cli.main(["export-latents", str(bad), "--checkpoint", str(ckpt),
                     "--labeled", "--out", str(workdir / "x.csv")])
    assert code == 2
    assert "label" in capsys.readouterr().err


def test_unknown_config_key_exits_2(workdir, capsys):
    code = cli.main(
        ["train", str(workdir / "corpus.txt"), "--out", str(workdir / "bad"),
         "--set", "nonsense=1"]
    )
    assert code == 2
    assert "nonsense" in capsys.readouterr().err


def test_wrong_vocabulary_exits_2(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    small = workdir / "small_vocab.tsv"
    Vocabulary(["only"]).save(str(small))
    code = cli.main(["sample", "--checkpoint", str(ckpt), "--count", "1",
                     "--vocab", str(small)])
    assert code == 2
    assert "expects" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_1(workdir, capsys):
    ckpt = train_variant(workdir, "flat-VAE")
    broken = workdir / "broken.mlv1"
    broken.write_bytes(b"not a checkpoint")
    (workdir / "broken.cfg").write_text((ckpt.parent / "ckpt_final.cfg").read_text())
    code = cli.main(["sample", "--checkpoint", str(broken), "--count", "1"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_flag_validation_is_argparse_usage_error(workdir):
    with pytest.raises(SystemExit) as exc:
        cli.main(["sample", "--checkpoint", "x", "--count", "0"])
    assert exc.value.code == 2

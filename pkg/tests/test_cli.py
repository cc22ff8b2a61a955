import json

import numpy as np
import pytest

from thaictc import cli
from thaictc.ctcdecode import save_emissions

LABELS = ["<pad>", "|", "ไ", "ป", "ม", "า", "ด", "ี"]


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "words.txt").write_text("ไป\nมา\nดี\n", encoding="utf-8")
    (tmp_path / "labels.txt").write_text(
        "#blank=0\n#delimiter=1\n" + "\n".join(LABELS) + "\n", encoding="utf-8"
    )
    (tmp_path / "train.txt").write_text(
        "ไป มา\nไป มา\nไป ดี\nมา ดี\nไป มา\n", encoding="utf-8"
    )
    return tmp_path


def onehot(path_labels, hot=0.99):
    indices = [LABELS.index(ch) for ch in path_labels]
    cold = (1 - hot) / (len(LABELS) - 1)
    m = np.full((len(indices), len(LABELS)), cold)
    for t, i in enumerate(indices):
        m[t, i] = hot
    return np.log(m)


def run(argv):
    return cli.main(argv)


def test_version(capsys):
    assert run(["--version"]) == 0
    out = capsys.readouterr().out
    assert "thaictc" in out and "arpa" in out


def test_unknown_subcommand(capsys):
    assert run(["frobnicate"]) == 1


def test_missing_file_is_io_error(workspace, capsys):
    rc = run(["tokenize", str(workspace / "nope.txt"), "--dict", str(workspace / "words.txt")])
    assert rc == 2


def test_tokenize(workspace, capsys):
    src = workspace / "in.txt"
    src.write_text("ไปมาดี\n", encoding="utf-8")
    assert run(["tokenize", str(src), "--dict", str(workspace / "words.txt")]) == 0
    assert capsys.readouterr().out == "ไป มา ดี\n"


def test_normalize_lines(workspace, capsys):
    src = workspace / "raw.txt"
    src.write_text("  ไป   มา ๆ \nสวัสดี!\n", encoding="utf-8")
    assert run([
        "normalize", "--lines", str(src), "--dict", str(workspace / "words.txt"),
    ]) == 0
    assert capsys.readouterr().out == "ไป มามา\nสวัสดี\n"


def test_normalize_corpus_drops_empty(workspace, capsys):
    src = workspace / "corpus.tsv"
    src.write_text(
        "client_id\tpath\tsentence\ns1\ta\tไปมา!\ns2\tb\t!!!\n", encoding="utf-8"
    )
    out = workspace / "clean.tsv"
    assert run([
        "normalize", "--corpus", str(src), "--dict", str(workspace / "words.txt"),
        "--out", str(out),
    ]) == 0
    err = capsys.readouterr().err
    assert "dropped 1" in err
    assert "ไปมา" in out.read_text(encoding="utf-8")


def test_lm_train_and_score(workspace, capsys):
    arpa = workspace / "model.arpa"
    assert run([
        "lm-train", "--input", str(workspace / "train.txt"),
        "--dict", str(workspace / "words.txt"), "--out", str(arpa),
    ]) == 0
    text = arpa.read_text(encoding="utf-8")
    assert text.startswith("\\data\\") and text.rstrip().endswith("\\end\\")

    src = workspace / "score_me.txt"
    src.write_text("ไป มา\nไป ดี\n", encoding="utf-8")
    assert run(["lm-score", str(src), "--lm", str(arpa)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    scores = [float(line.split("\t")[0]) for line in lines]
    assert len(scores) == 2
    assert scores[0] > scores[1]  # "ไป มา" dominates the training text


def test_split_and_figures(workspace, capsys):
    rows = ["client_id\tpath\tsentence\tduration_ms"]
    for s in range(12):
        for i in range(3):
            rows.append(f"spk{s:02d}\tclip_{s}_{i}.mp3\tไปมา\t{1000 + 100 * s}")
    (workspace / "v8.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    out_dir = workspace / "splits"
    figures = workspace / "figs"
    assert run([
        "split", "--v8", str(workspace / "v8.tsv"),
        "--targets", "0.8,0.1,0.1", "--out-dir", str(out_dir),
        "--figures", str(figures),
    ]) == 0
    captured = capsys.readouterr()
    assert "speaker overlap: none" in captured.out
    for label in ("train", "valid", "test"):
        assert (out_dir / f"{label}.tsv").exists()
    assert (figures / "split_durations.png").exists()


def test_split_with_legacy_is_stable_and_deterministic(workspace, capsys):
    legacy_rows = {
        "train": "spk_a\told1.mp3\tไปมา\t5000",
        "valid": "spk_b\told2.mp3\tมาดี\t5000",
        "test": "spk_c\told3.mp3\tไปดี\t5000",
    }
    for label, row in legacy_rows.items():
        (workspace / f"v7_{label}.tsv").write_text(
            f"client_id\tpath\tsentence\tduration_ms\n{row}\n", encoding="utf-8"
        )
    rows = ["client_id\tpath\tsentence\tduration_ms"]
    rows.append("spk_a\told1.mp3\tไปมา\t5000")  # carried over from v7
    for s in range(8):
        rows.append(f"new{s}\tnew_{s}.mp3\tไปมา\t{2000 + s}")
    (workspace / "v8.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    argv = [
        "split", "--v8", str(workspace / "v8.tsv"),
        "--v7-train", str(workspace / "v7_train.tsv"),
        "--v7-valid", str(workspace / "v7_valid.tsv"),
        "--v7-test", str(workspace / "v7_test.tsv"),
        "--targets", "0.8,0.1,0.1",
    ]
    d1, d2 = workspace / "out1", workspace / "out2"
    assert run(argv + ["--out-dir", str(d1)]) == 0
    assert run(argv + ["--out-dir", str(d2)]) == 0
    capsys.readouterr()
    for label in ("train", "valid", "test"):
        assert (d1 / f"{label}.tsv").read_bytes() == (d2 / f"{label}.tsv").read_bytes()
    train = (d1 / "train.tsv").read_text(encoding="utf-8")
    test = (d1 / "test.tsv").read_text(encoding="utf-8")
    assert "old1.mp3" in train and "legacy" in train
    assert "old3.mp3" in test


def test_decode_single_file(workspace, capsys):
    em = onehot(["ไ", "ป", "|", "ม", "า"])
    save_emissions(em, workspace / "utt.npy")
    assert run([
        "decode", "--emissions", str(workspace / "utt.npy"),
        "--vocab", str(workspace / "labels.txt"),
    ]) == 0
    assert capsys.readouterr().out == "ไป มา\n"


def test_decode_text_matrix(workspace, capsys):
    em = onehot(["ด", "ี"])
    txt = workspace / "utt.txt"
    txt.write_text(
        "\n".join(" ".join(f"{v:.8f}" for v in row) for row in em) + "\n",
        encoding="utf-8",
    )
    assert run([
        "decode", "--emissions", str(txt), "--vocab", str(workspace / "labels.txt"),
    ]) == 0
    assert capsys.readouterr().out == "ดี\n"


def test_decode_nbest(workspace, capsys):
    em = onehot(["ไ", "ป"], hot=0.6)
    save_emissions(em, workspace / "utt.npy")
    assert run([
        "decode", "--emissions", str(workspace / "utt.npy"),
        "--vocab", str(workspace / "labels.txt"), "--nbest", "3",
    ]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "id\trank\tscore\thypothesis"
    assert len(out) == 4


def _write_decode_fixture(workspace):
    em_dir = workspace / "emissions"
    em_dir.mkdir()
    save_emissions(onehot(["ไ", "ป", "|", "ม", "า"]), em_dir / "u1.npy")
    save_emissions(onehot(["ด", "ี"]), em_dir / "u2.npy")
    (workspace / "refs.tsv").write_text(
        "id\treference\nu1\tไป มา\nu2\tดี\n", encoding="utf-8"
    )
    return em_dir


def test_decode_dir_then_evaluate_matches_one_shot(workspace, capsys):
    em_dir = _write_decode_fixture(workspace)
    hyps = workspace / "hyps.tsv"
    base = ["--vocab", str(workspace / "labels.txt")]
    assert run(["decode", "--emissions-dir", str(em_dir), *base, "--out", str(hyps),
                "--threads", "2"]) == 0
    report_a = workspace / "a.json"
    assert run([
        "evaluate", "--refs", str(workspace / "refs.tsv"), "--hyps", str(hyps),
        "--dict", str(workspace / "words.txt"), "--out", str(report_a),
    ]) == 0
    report_b = workspace / "b.json"
    assert run([
        "decode", "--emissions-dir", str(em_dir), *base,
        "--refs", str(workspace / "refs.tsv"),
        "--dict", str(workspace / "words.txt"),
        "--report", str(report_b), "--out", str(workspace / "ignored.tsv"),
    ]) == 0
    assert report_a.read_bytes() == report_b.read_bytes()
    parsed = json.loads(report_a.read_text(encoding="utf-8"))
    assert parsed["wer"] == 0.0 and parsed["cer"] == 0.0


def test_decode_with_lm_flag(workspace, capsys):
    arpa = workspace / "model.arpa"
    assert run([
        "lm-train", "--input", str(workspace / "train.txt"),
        "--dict", str(workspace / "words.txt"), "--out", str(arpa),
    ]) == 0
    save_emissions(onehot(["ไ", "ป", "|", "ม", "า"], hot=0.7), workspace / "u.npy")
    assert run([
        "decode", "--emissions", str(workspace / "u.npy"),
        "--vocab", str(workspace / "labels.txt"),
        "--lm", str(arpa), "--alpha", "0.5", "--beta", "1.0",
    ]) == 0
    assert capsys.readouterr().out == "ไป มา\n"


def test_decode_alpha_without_lm_fails(workspace, capsys):
    save_emissions(onehot(["ไ", "ป"]), workspace / "u.npy")
    rc = run([
        "decode", "--emissions", str(workspace / "u.npy"),
        "--vocab", str(workspace / "labels.txt"), "--alpha", "0.5",
    ])
    assert rc == 1


def test_evaluate_pairs_tsv_and_jsonl(workspace, capsys):
    tsv = workspace / "pairs.tsv"
    tsv.write_text(
        "id\treference\thypothesis\nu1\tไปมา\tไปมา\nu2\tมาดี\tมาไป\n",
        encoding="utf-8",
    )
    assert run(["evaluate", "--pairs", str(tsv), "--dict", str(workspace / "words.txt")]) == 0
    tsv_report = json.loads(capsys.readouterr().out)

    jsonl = workspace / "pairs.jsonl"
    jsonl.write_text(
        '{"id": "u1", "reference": "ไปมา", "hypothesis": "ไปมา"}\n'
        '{"id": "u2", "reference": "มาดี", "hypothesis": "มาไป"}\n',
        encoding="utf-8",
    )
    assert run(["evaluate", "--pairs", str(jsonl), "--dict", str(workspace / "words.txt")]) == 0
    jsonl_report = json.loads(capsys.readouterr().out)
    assert tsv_report == jsonl_report
    assert tsv_report["wer"] == pytest.approx(0.25)


def test_evaluate_figures(workspace, capsys):
    tsv = workspace / "pairs.tsv"
    tsv.write_text(
        "id\treference\thypothesis\nu1\tไปมา\tไปมา\n", encoding="utf-8"
    )
    figs = workspace / "figs"
    assert run([
        "evaluate", "--pairs", str(tsv), "--dict", str(workspace / "words.txt"),
        "--figures", str(figs),
    ]) == 0
    assert (figs / "error_breakdown.png").exists()
    assert (figs / "utterance_wer_hist.png").exists()


def test_config_defaults_and_override(workspace, capsys):
    config = workspace / "config.json"
    config.write_text('{"discount": 1.5}', encoding="utf-8")
    rc = run([
        "lm-train", "--config", str(config),
        "--input", str(workspace / "train.txt"),
        "--dict", str(workspace / "words.txt"),
    ])
    assert rc == 1  # config value reached the estimator and was rejected
    capsys.readouterr()
    rc = run([
        "lm-train", "--config", str(config),
        "--input", str(workspace / "train.txt"),
        "--dict", str(workspace / "words.txt"), "--discount", "0.75",
    ])
    assert rc == 0  # explicit flag wins over the config file


def test_normalize_substitutions(workspace, capsys):
    table = workspace / "subs.json"
    table.write_text('{"๔": "4"}', encoding="utf-8")
    src = workspace / "raw.txt"
    src.write_text("ไป๔\n", encoding="utf-8")
    assert run([
        "normalize", "--lines", str(src), "--dict", str(workspace / "words.txt"),
        "--substitutions", str(table),
    ]) == 0
    assert capsys.readouterr().out == "ไป4\n"


def test_decode_greedy(workspace, capsys):
    save_emissions(onehot(["ไ", "ป", "|", "ม", "า"]), workspace / "u.npy")
    assert run([
        "decode", "--emissions", str(workspace / "u.npy"),
        "--vocab", str(workspace / "labels.txt"), "--greedy",
    ]) == 0
    assert capsys.readouterr().out == "ไป มา\n"
    rc = run([
        "decode", "--emissions", str(workspace / "u.npy"),
        "--vocab", str(workspace / "labels.txt"), "--greedy", "--alpha", "0.5",
    ])
    assert rc == 1


def test_decode_thread_count_does_not_change_output(workspace, capsys):
    em_dir = _write_decode_fixture(workspace)
    outputs = []
    for threads in ("1", "3"):
        out = workspace / f"hyps_{threads}.tsv"
        assert run([
            "decode", "--emissions-dir", str(em_dir),
            "--vocab", str(workspace / "labels.txt"),
            "--threads", threads, "--out", str(out),
        ]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_evaluate_thread_count_does_not_change_output(workspace, capsys):
    tsv = workspace / "pairs.tsv"
    rows = ["id\treference\thypothesis"]
    for i in range(12):
        rows.append(f"u{i}\tไปมาดี\tไปมา")
    tsv.write_text("\n".join(rows) + "\n", encoding="utf-8")
    outputs = []
    for threads in ("1", "4"):
        assert run([
            "evaluate", "--pairs", str(tsv), "--dict", str(workspace / "words.txt"),
            "--threads", threads,
        ]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]


def test_external_tokenizer_through_cli(workspace, capsys):
    import sys as _sys

    src = workspace / "in.txt"
    src.write_text("ไปมา\n", encoding="utf-8")
    cmd = (
        f"{_sys.executable} -c "
        '"import sys; [print(c) for c in sys.stdin.read() if not c.isspace()]"'
    )
    assert run(["tokenize", str(src), "--external", cmd]) == 0
    assert capsys.readouterr().out == "ไ ป ม า\n"

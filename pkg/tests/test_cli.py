import hashlib
import json

import numpy as np
import pytest

from knnmt.cli import main
from knnmt.core import Vocab, load_corpus


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def work(tmp_path):
    """A small bitext plus a matching two-talk talkset on disk."""
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(10)]
    lines = []
    for _ in range(16):
        n = int(rng.integers(2, 5))
        src = " ".join(words[i] for i in rng.integers(0, 10, size=n))
        tgt = " ".join(words[i] for i in rng.integers(0, 10, size=n))
        lines.append(f"{src}\t{tgt}")
    (tmp_path / "train.tsv").write_text("\n".join(lines) + "\n")
    talk_lines = []
    for talk in (0, 1):
        for _ in range(4):
            n = int(rng.integers(2, 4))
            src = " ".join(words[i] for i in rng.integers(0, 10, size=n))
            tgt = " ".join(words[i] for i in rng.integers(0, 10, size=n))
            talk_lines.append(f"{src}\t{tgt}\ttalks\t{talk}")
    (tmp_path / "talks.tsv").write_text("\n".join(talk_lines) + "\n")
    return tmp_path


def train_small(work, out="model.rmdl", extra=()):
    code = main(
        [
            "train",
            "--corpus", str(work / "train.tsv"),
            "--out", str(work / out),
            "--vocab-out", str(work / "vocab.txt"),
            "--epochs", "3",
            "--lr", "0.5",
            "--seed", "1",
            *extra,
        ]
    )
    assert code == 0
    return work / out, work / "vocab.txt"


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["train", "--nonsense"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert main(["decode", "--help"]) == 0

    def test_missing_file_is_data_error(self, work, capsys):
        code = main(
            [
                "train",
                "--corpus", str(work / "absent.tsv"),
                "--out", str(work / "m.rmdl"),
            ]
        )
        assert code == 2

    def test_malformed_corpus_is_data_error(self, work, capsys):
        (work / "bad.tsv").write_text("no tabs here\n")
        code = main(
            [
                "train",
                "--corpus", str(work / "bad.tsv"),
                "--out", str(work / "m.rmdl"),
            ]
        )
        assert code == 2
        assert "line 1" in capsys.readouterr().err

    def test_adapters_only_without_init_is_usage_error(self, work, capsys):
        code = main(
            [
                "train",
                "--corpus", str(work / "train.tsv"),
                "--out", str(work / "m.rmdl"),
                "--adapters-only",
            ]
        )
        assert code == 1

    def test_lm_domain_without_lm_is_usage_error(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "decode",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "train.tsv"),
                "--out", str(work / "h.jsonl"),
                "--lm-domain", str(work / "nope.txt"),
            ]
        )
        assert code == 1


class TestTrain:
    def test_writes_checkpoint_and_vocab(self, work, capsys):
        model, vocab = train_small(work)
        assert model.exists() and vocab.exists()
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["command"] == "train"
        assert "final_loss" in out

    def test_seeded_run_is_byte_reproducible(self, work, capsys):
        a, _ = train_small(work, out="a.rmdl")
        b, _ = train_small(work, out="b.rmdl")
        assert a.read_bytes() == b.read_bytes()

    def test_epoch_losses_go_to_stderr(self, work, capsys):
        train_small(work)
        err = capsys.readouterr().err
        assert "epoch" in err

    def test_manifest_always_on_stderr(self, work, capsys):
        train_small(work)
        lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith("{")]
        manifest = json.loads(lines[-1])
        assert manifest["command"] == "train"
        assert manifest["seed"] == 1
        assert "checksums" in manifest

    def test_manifest_file_written_on_request(self, work, capsys):
        code = main(
            [
                "train",
                "--corpus", str(work / "train.tsv"),
                "--out", str(work / "m.rmdl"),
                "--vocab-out", str(work / "v.txt"),
                "--epochs", "1",
                "--manifest", str(work / "run.json"),
            ]
        )
        assert code == 0
        manifest = json.loads((work / "run.json").read_text())
        assert manifest["outputs"]["out"] == str(work / "m.rmdl")

    def test_adapter_training_freezes_base(self, work, capsys):
        from knnmt.refmodel import base_param_checksum, load_checkpoint

        base, vocab = train_small(work)
        code = main(
            [
                "train",
                "--corpus", str(work / "train.tsv"),
                "--out", str(work / "adapted.rmdl"),
                "--vocab", str(vocab),
                "--init", str(base),
                "--adapters-only",
                "--adapter-tag", "talks",
                "--epochs", "2",
                "--seed", "3",
            ]
        )
        assert code == 0
        before = load_checkpoint(base)
        after = load_checkpoint(work / "adapted.rmdl")
        assert base_param_checksum(after) == base_param_checksum(before)
        assert "talks" in after.adapters

    def test_reverse_direction_swaps_sides(self, work, capsys):
        model, vocab = train_small(work, out="fwd.rmdl")
        code = main(
            [
                "train",
                "--corpus", str(work / "train.tsv"),
                "--out", str(work / "bwd.rmdl"),
                "--vocab", str(vocab),
                "--lang", "reverse",
                "--epochs", "3",
                "--lr", "0.5",
                "--seed", "1",
            ]
        )
        assert code == 0
        assert (work / "bwd.rmdl").read_bytes() != (work / "fwd.rmdl").read_bytes()


class TestDecode:
    def test_writes_jsonl_records(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "decode",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "hyps.jsonl"),
                "--w", "0",
            ]
        )
        assert code == 0
        records = [
            json.loads(l) for l in (work / "hyps.jsonl").read_text().splitlines()
        ]
        assert len(records) == 8
        for i, rec in enumerate(records):
            assert rec["id"] == i
            assert isinstance(rec["hypothesis"], str)
            assert rec["config"]["w"] == 0.0
            assert list(rec) == sorted(rec)

    def test_w_zero_output_identical_with_and_without_datastore(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "build-datastore",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "talks.knnd"),
            ]
        )
        assert code == 0
        for name, extra in (
            ("plain.jsonl", []),
            ("with_store.jsonl", ["--datastore", str(work / "talks.knnd")]),
        ):
            code = main(
                [
                    "decode",
                    "--model", str(model),
                    "--vocab", str(vocab),
                    "--corpus", str(work / "talks.tsv"),
                    "--out", str(work / name),
                    "--w", "0",
                    *extra,
                ]
            )
            assert code == 0
        assert (work / "plain.jsonl").read_bytes() == (work / "with_store.jsonl").read_bytes()

    def test_retrieval_decode_with_ivf_index(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "build-datastore",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "talks.knnd"),
                "--ivf-clusters", "4",
                "--ivf-nprobe", "4",
                "--ivf-out", str(work / "talks.knni"),
            ]
        )
        assert code == 0
        code = main(
            [
                "decode",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "hyps_ivf.jsonl"),
                "--datastore", str(work / "talks.knnd"),
                "--ivf-index", str(work / "talks.knni"),
                "--w", "0.3",
            ]
        )
        assert code == 0
        # full probe count keeps IVF retrieval identical to a flat scan
        code = main(
            [
                "decode",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "hyps_flat.jsonl"),
                "--datastore", str(work / "talks.knnd"),
                "--w", "0.3",
            ]
        )
        assert code == 0
        assert (work / "hyps_ivf.jsonl").read_bytes() == (work / "hyps_flat.jsonl").read_bytes()

    def test_ivf_clusters_requires_ivf_out(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "build-datastore",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "t.knnd"),
                "--ivf-clusters", "4",
            ]
        )
        assert code == 1

    def test_lm_fusion_path(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "lm-train",
                "--corpus", str(work / "train.tsv"),
                "--vocab", str(vocab),
                "--order", "2",
                "--out", str(work / "lm.txt"),
            ]
        )
        assert code == 0
        assert (work / "lm.txt").read_text().startswith("NGRAM-COUNTS v1 order=2")
        code = main(
            [
                "decode",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "fused.jsonl"),
                "--w", "0",
                "--lm", str(work / "lm.txt"),
                "--fusion-alpha", "0.3",
            ]
        )
        assert code == 0


class TestOtherCommands:
    def test_grid_search_tsv_shape(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "build-datastore",
                "--model", str(model),
                "--vocab", str(vocab),
                "--corpus", str(work / "talks.tsv"),
                "--out", str(work / "talks.knnd"),
            ]
        )
        assert code == 0
        code = main(
            [
                "grid-search",
                "--model", str(model),
                "--vocab", str(vocab),
                "--datastore", str(work / "talks.knnd"),
                "--dev", str(work / "talks.tsv"),
                "--out", str(work / "grid.tsv"),
                "--T-grid", "10,50",
                "--w-grid", "0.1,0.5",
                "--beam", "2",
            ]
        )
        assert code == 0
        lines = (work / "grid.tsv").read_text().splitlines()
        assert lines[0] == "T\tw\tBLEU"
        assert len(lines) == 5
        cells = [tuple(l.split("\t")[:2]) for l in lines[1:]]
        assert cells == [("10", "0.1"), ("10", "0.5"), ("50", "0.1"), ("50", "0.5")]
        result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert {"best_T", "best_w", "best_bleu"} <= set(result)

    def test_diversify_output_contains_originals(self, work, capsys):
        model, vocab = train_small(work, out="fwd.rmdl")
        code = main(
            [
                "train",
                "--corpus", str(work / "train.tsv"),
                "--out", str(work / "bwd.rmdl"),
                "--vocab", str(vocab),
                "--lang", "reverse",
                "--epochs", "3",
                "--seed", "1",
            ]
        )
        assert code == 0
        code = main(
            [
                "diversify",
                "--corpus", str(work / "train.tsv"),
                "--forward-model", str(work / "fwd.rmdl"),
                "--backward-model", str(work / "bwd.rmdl"),
                "--vocab", str(vocab),
                "--out", str(work / "div.tsv"),
                "--beam", "2",
            ]
        )
        assert code == 0
        vocab_obj = Vocab.load(vocab)
        original = load_corpus(work / "train.tsv", vocab_obj)
        augmented = load_corpus(work / "div.tsv", vocab_obj)
        assert augmented.pairs[: len(original.pairs)] == original.pairs
        assert len(augmented.pairs) >= len(original.pairs)

    def test_select_data_keeps_top_k(self, work, capsys):
        (work / "seed.tsv").write_text("w1 w2\tw3\n")
        code = main(
            [
                "select-data",
                "--pool", str(work / "train.tsv"),
                "--seed-corpus", str(work / "seed.tsv"),
                "--top-k", "4",
                "--out", str(work / "sel.tsv"),
            ]
        )
        assert code == 0
        assert len((work / "sel.tsv").read_text().splitlines()) == 4

    def test_leave_one_out_reports_per_talk(self, work, capsys):
        model, vocab = train_small(work)
        code = main(
            [
                "leave-one-out",
                "--model", str(model),
                "--vocab", str(vocab),
                "--talkset", str(work / "talks.tsv"),
                "--beam", "2",
                "--out", str(work / "loo.json"),
            ]
        )
        assert code == 0
        payload = json.loads((work / "loo.json").read_text())
        assert [t["talk_id"] for t in payload["per_talk"]] == [0, 1]
        assert payload["delta"] == pytest.approx(
            payload["aggregate_retrieval"] - payload["aggregate_baseline"]
        )

    def test_score_bleu_identity(self, work, capsys):
        (work / "hyp.txt").write_text("the dog runs fast\na cat sat down\n")
        (work / "ref.txt").write_text("the dog runs fast\na cat sat down\n")
        code = main(
            [
                "score",
                "--metric", "bleu",
                "--hyp", str(work / "hyp.txt"),
                "--ref", str(work / "ref.txt"),
            ]
        )
        assert code == 0
        result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert result["metric"] == "bleu"
        assert result["value"] == 100.0
        assert result["details"]["precisions"] == [1.0, 1.0, 1.0, 1.0]

    def test_score_wer(self, work, capsys):
        (work / "hyp.txt").write_text("the dog walks\n")
        (work / "ref.txt").write_text("the dog runs\n")
        code = main(
            [
                "score",
                "--metric", "wer",
                "--hyp", str(work / "hyp.txt"),
                "--ref", str(work / "ref.txt"),
            ]
        )
        assert code == 0
        result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert result["value"] == pytest.approx(1 / 3)

    def test_score_length_mismatch_is_data_error(self, work, capsys):
        (work / "hyp.txt").write_text("a\nb\n")
        (work / "ref.txt").write_text("a\n")
        code = main(
            [
                "score",
                "--metric", "bleu",
                "--hyp", str(work / "hyp.txt"),
                "--ref", str(work / "ref.txt"),
            ]
        )
        assert code == 2

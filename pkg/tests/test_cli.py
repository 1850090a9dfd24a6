"""CLI contract: JSON documents, side files, exit codes, determinism."""

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from helpers import separable_setup
from imblens import EmbeddingSet, ClassifierHead, load_classifier_head, write_embx
from imblens.cli import _THREAD_VARS, main


def run_cli(capsys, *argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def write_set(path, fe, labels, num_classes, split="other", logits=None):
    es = EmbeddingSet(
        fe=np.asarray(fe, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=num_classes,
        split=split,
        logits=None if logits is None else np.asarray(logits, dtype=np.float32),
    )
    return write_embx(es, str(path))


def write_head(path, weights, bias=None):
    head = ClassifierHead(
        weights=np.asarray(weights, dtype=np.float32),
        bias=None if bias is None else np.asarray(bias, dtype=np.float32),
    )
    return write_embx(head, str(path))


@pytest.fixture(scope="module")
def quad(tmp_path_factory):
    """Four instances, all predicted 0, with minimal_k = [1, 2, 3, 3]."""
    root = tmp_path_factory.mktemp("quad")
    fe = [[4, 0.5, 0.5], [2, 2, 0], [1, 1, 1], [1, 1, 0.9]]
    write_set(root / "fe", fe, labels=[0, 0, 0, 0], num_classes=2)
    write_head(root / "w", [[1, 1, 1], [0.7, 0.7, 0.7]])
    return root


@pytest.fixture(scope="module")
def small_pair(tmp_path_factory):
    """Two classes, one misclassified instance, exported logits included."""
    root = tmp_path_factory.mktemp("small")
    fe = [[1, 0], [1, 0], [0, 1]]
    logits = [[1, 0], [1, 0], [0, 1]]
    write_set(root / "fe", fe, labels=[0, 1, 1], num_classes=2, split="test", logits=logits)
    write_head(root / "w", [[1, 0], [0, 1]])
    return root


@pytest.fixture(scope="module")
def perfect(tmp_path_factory):
    """A block-indicator setup the head classifies perfectly; H = 12."""
    rng = np.random.default_rng(7)
    root = tmp_path_factory.mktemp("perfect")
    c, block, per_class = 3, 4, 5
    h = c * block
    labels = np.repeat(np.arange(c), per_class)
    fe = np.zeros((labels.size, h), dtype=np.float32)
    for i, y in enumerate(labels):
        fe[i, y * block : (y + 1) * block] = rng.uniform(0.5, 2.0, size=block)
    weights = np.zeros((c, h), dtype=np.float32)
    for y in range(c):
        weights[y, y * block : (y + 1) * block] = 1.0
    write_set(root / "fe", fe, labels=labels, num_classes=c, split="train")
    write_head(root / "w", weights)
    return root


@pytest.fixture(scope="module")
def separable_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("separable")
    es = separable_setup(per_class=15)
    write_set(root / "fe", es.fe, labels=es.labels, num_classes=2, split="train")
    return root / "fe"


class TestInspect:
    def test_text_summary(self, capsys, quad):
        rc, out, _ = run_cli(capsys, "inspect", quad / "fe")
        assert rc == 0
        assert "kind: embedding_set" in out
        assert "logits: absent" in out
        assert "num_classes: 2" in out
        assert "class counts: 0:4 1:0" in out

    def test_logits_reported_present(self, capsys, small_pair):
        rc, out, _ = run_cli(capsys, "inspect", small_pair / "fe")
        assert rc == 0
        assert "logits: present" in out
        assert "split: test" in out

    def test_head_summary(self, capsys, quad):
        rc, out, _ = run_cli(capsys, "inspect", quad / "w")
        assert rc == 0
        assert "kind: classifier_head" in out
        assert "bias: absent" in out

    def test_json_document(self, capsys, quad, tmp_path):
        out_file = tmp_path / "inspect.json"
        rc, out, _ = run_cli(capsys, "inspect", quad / "fe", "--json", "--out", out_file)
        assert rc == 0
        doc = json.loads(out)
        assert doc["summary"]["kind"] == "embedding_set"
        assert doc["summary"]["n"] == 4
        assert doc["summary"]["h"] == 3
        assert doc["summary"]["class_counts"] == [4, 0]
        assert doc["run_manifest"]["command"] == "inspect"
        assert json.loads(out_file.read_text()) == doc

    def test_missing_manifest_exit_code(self, capsys, tmp_path):
        rc, _, err = run_cli(capsys, "inspect", tmp_path / "nothing")
        assert rc == 2
        assert "MissingManifestError" in err


class TestTopk:
    def test_coverage_document(self, capsys, quad):
        rc, out, _ = run_cli(capsys, "topk", quad / "fe", quad / "w", "--k", "1,2,3")
        assert rc == 0
        doc = json.loads(out)
        rep = doc["report"]
        assert rep["minimal_k"] == [1, 2, 3, 3]
        assert rep["overall_coverage"] == {"1": 0.25, "2": 0.5, "3": 1.0}
        assert rep["per_class_coverage"] == {"0": {"1": 0.25, "2": 0.5, "3": 1.0}}
        assert rep["space"] == "ce"
        assert rep["empty_classes"] == [1]
        assert "contributions" not in doc

    def test_contrib_block_and_outputs(self, capsys, quad, tmp_path):
        out_dir = tmp_path / "reports"
        rc, out, _ = run_cli(
            capsys, "topk", quad / "fe", quad / "w", "--k", "1,2,3", "--contrib-k", "2", "--out", out_dir
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["contributions"]["k"] == 2
        assert "0" in doc["contributions"]["per_class"]
        assert json.loads((out_dir / "topk.json").read_text()) == doc
        with open(out_dir / "coverage.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["class", "k", "coverage"]
        assert rows[1:] == [["0", "1", "0.25"], ["0", "2", "0.5"], ["0", "3", "1.0"]]

    def test_fe_space_flags(self, capsys, quad):
        rc, out, _ = run_cli(
            capsys, "topk", quad / "fe", quad / "w", "--k", "1", "--space", "fe", "--fe-mode", "ce-aligned"
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["report"]["space"] == "fe"
        assert doc["run_manifest"]["parameters"]["fe_mode"] == "ce_aligned"

    def test_rerun_identical_apart_from_timestamp(self, capsys, quad):
        _, out1, _ = run_cli(capsys, "topk", quad / "fe", quad / "w", "--k", "1,2")
        _, out2, _ = run_cli(capsys, "topk", quad / "fe", quad / "w", "--k", "1,2")
        a, b = json.loads(out1), json.loads(out2)
        a["run_manifest"].pop("timestamp")
        b["run_manifest"].pop("timestamp")
        assert a == b

    def test_checksums_recorded_per_tensor_file(self, capsys, quad):
        _, out, _ = run_cli(capsys, "topk", quad / "fe", quad / "w", "--k", "1")
        doc = json.loads(out)
        fe_in, w_in = doc["run_manifest"]["inputs"]
        assert set(fe_in["tensors"]) == {"fe.bin", "labels.bin"}
        assert set(w_in["tensors"]) == {"weights.bin"}
        assert all(len(v) == 64 for v in fe_in["tensors"].values())

    def test_bad_k_is_usage_error(self, quad, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["topk", str(quad / "fe"), str(quad / "w"), "--k", "0,2"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit):
            main(["topk", str(quad / "fe"), str(quad / "w"), "--k", "abc"])
        capsys.readouterr()

    def test_swapped_inputs_rejected(self, capsys, quad):
        rc, _, err = run_cli(capsys, "topk", quad / "fe", quad / "fe", "--k", "1")
        assert rc == 2
        assert "expected a classifier head" in err


class TestStats:
    def test_single_class_has_no_ratio(self, capsys, quad):
        rc, out, _ = run_cli(capsys, "stats", quad / "fe", quad / "w", "--top", "3")
        assert rc == 0
        doc = json.loads(out)
        assert doc["largest_mean_ce_ratio"] is None
        assert doc["empty_classes"] == [1]
        assert set(doc["profiles"]) == {"0"}
        assert set(doc["weight_summaries"]) == {"0", "1"}

    def test_ratio_and_csv(self, capsys, tmp_path):
        write_set(tmp_path / "fe", [[2, 0], [0, 1]], labels=[0, 1], num_classes=2)
        write_head(tmp_path / "w", [[1, 0], [0, 1]])
        out_dir = tmp_path / "reports"
        rc, out, _ = run_cli(capsys, "stats", tmp_path / "fe", tmp_path / "w", "--out", out_dir)
        assert rc == 0
        doc = json.loads(out)
        block = doc["largest_mean_ce_ratio"]
        assert block == {"majority_class": 0, "majority_max": 2.0, "others_avg": 1.0, "ratio": 0.5}
        assert doc["profiles"]["0"]["mean_ce"] == [2.0, 0.0]
        assert json.loads((out_dir / "stats.json").read_text()) == doc
        with open(out_dir / "profiles.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["kind", "class", "rank", "identity", "value"]
        assert ["mean_ce", "0", "1", "0", "2.0"] in rows

    def test_explicit_majority_override(self, capsys, tmp_path):
        write_set(tmp_path / "fe2", [[2, 0], [0, 1]], labels=[0, 1], num_classes=2)
        write_head(tmp_path / "w2", [[1, 0], [0, 1]])
        rc, out, _ = run_cli(capsys, "stats", tmp_path / "fe2", tmp_path / "w2", "--majority", "1")
        assert rc == 0
        doc = json.loads(out)
        assert doc["largest_mean_ce_ratio"]["majority_class"] == 1
        assert doc["largest_mean_ce_ratio"]["ratio"] == 2.0


class TestDivergence:
    def test_self_comparison(self, capsys, perfect):
        rc, out, _ = run_cli(capsys, "divergence", perfect / "fe", perfect / "fe", perfect / "w")
        assert rc == 0
        rep = json.loads(out)["report"]
        assert rep["fb_train_tp"] == 0.0
        assert rep["fb_train_fp"] is None
        assert rep["overlap_tp"] == 1.0
        assert rep["overlap_fp"] is None
        assert rep["per_class_fb"]["0"] == {"tp": 0.0, "fp": None}
        assert rep["counts"]["0"] == {"train": 5, "tp": 5, "fp": 0, "fn": 0}

    def test_out_file_matches_stdout(self, capsys, perfect, tmp_path):
        out_file = tmp_path / "div.json"
        rc, out, _ = run_cli(
            capsys, "divergence", perfect / "fe", perfect / "fe", perfect / "w", "--out", out_file
        )
        assert rc == 0
        assert out_file.read_text() == out

    def test_top_m_beyond_h_is_validation_error(self, capsys, quad):
        rc, _, err = run_cli(capsys, "divergence", quad / "fe", quad / "fe", quad / "w")
        assert rc == 2
        assert "top_m" in err

    def test_rank_by_activation(self, capsys, perfect):
        rc, out, _ = run_cli(
            capsys, "divergence", perfect / "fe", perfect / "fe", perfect / "w", "--rank-by", "activation"
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["report"]["overlap_tp"] == 1.0
        assert doc["run_manifest"]["parameters"]["rank_by"] == "activation"


class TestRetrain:
    def test_separable_reaches_perfect_bac(self, capsys, separable_dir, tmp_path):
        out_dir = tmp_path / "head"
        rc, out, _ = run_cli(
            capsys, "retrain", separable_dir, "--epochs", 50, "--out", out_dir
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["trace"]["best_bac"] == 1.0
        assert doc["trace"]["eval_used"] is False
        assert len(doc["trace"]["per_epoch_loss"]) == 50
        assert json.loads((out_dir / "trace.json").read_text()) == doc
        head = load_classifier_head(str(out_dir))
        assert head.weights.shape == (2, 2)
        assert head.bias is not None

    def test_rerun_bytes_identical(self, capsys, separable_dir, tmp_path):
        args = ["retrain", separable_dir, "--epochs", 20]
        rc1, _, _ = run_cli(capsys, *args, "--out", tmp_path / "a")
        rc2, _, _ = run_cli(capsys, *args, "--out", tmp_path / "b")
        assert rc1 == rc2 == 0
        for name in ("weights.bin", "bias.bin", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_rate_keeps_zero_init(self, capsys, separable_dir, tmp_path):
        rc, out, _ = run_cli(
            capsys, "retrain", separable_dir, "--epochs", 3, "--lr", 0, "--out", tmp_path / "z"
        )
        assert rc == 0
        assert json.loads(out)["trace"]["best_bac"] == 0.5
        head = load_classifier_head(str(tmp_path / "z"))
        assert not head.weights.any()

    def test_metadata_records_selection(self, capsys, separable_dir, tmp_path):
        rc, _, _ = run_cli(
            capsys, "retrain", separable_dir, "--epochs", 30, "--seed", 9, "--out", tmp_path / "m"
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
        assert manifest["metadata"]["best_epoch"] == "1"
        assert manifest["metadata"]["seed"] == "9"

    def test_eval_split_changes_selection(self, capsys, separable_dir, tmp_path):
        es = separable_setup(per_class=15)
        flipped_dir = write_set(
            tmp_path / "flipped", es.fe, labels=1 - es.labels, num_classes=2, split="test"
        )
        rc, out, _ = run_cli(
            capsys,
            "retrain", separable_dir, "--epochs", 10, "--eval", flipped_dir, "--out", tmp_path / "e",
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["trace"]["eval_used"] is True
        assert doc["trace"]["best_epoch"] == 0
        head = load_classifier_head(str(tmp_path / "e"))
        assert not head.weights.any()

    def test_divergence_exit_code(self, capsys, separable_dir, tmp_path):
        rc, _, err = run_cli(
            capsys,
            "retrain", separable_dir,
            "--epochs", 10, "--lr", "1e100", "--schedule", "constant",
            "--out", tmp_path / "boom",
        )
        assert rc == 3
        assert "TrainingDivergedError" in err
        assert not (tmp_path / "boom" / "manifest.json").exists()


class TestBac:
    def test_perfect(self, capsys, perfect):
        rc, out, _ = run_cli(capsys, "bac", perfect / "fe", perfect / "w")
        assert rc == 0
        rep = json.loads(out)["report"]
        assert rep["bac"] == 1.0
        assert rep["overall_accuracy"] == 1.0
        assert rep["absent_classes"] == []

    def test_hand_confusion_and_logit_consistency(self, capsys, small_pair):
        rc, out, _ = run_cli(capsys, "bac", small_pair / "fe", small_pair / "w")
        assert rc == 0
        doc = json.loads(out)
        rep = doc["report"]
        assert rep["bac"] == 0.75
        assert rep["per_class_recall"] == [1.0, 0.5]
        assert rep["confusion"] == [[1, 0], [1, 1]]
        cons = doc["logit_consistency"]
        assert cons["within_tol"] is True
        assert cons["max_abs_err"] == 0.0
        assert cons["mismatched_argmax_count"] == 0

    def test_absent_class_is_null(self, capsys, quad):
        rc, out, _ = run_cli(capsys, "bac", quad / "fe", quad / "w")
        assert rc == 0
        rep = json.loads(out)["report"]
        assert rep["per_class_recall"] == [1.0, None]
        assert rep["absent_classes"] == [1]
        assert rep["bac"] == 1.0


class TestHarness:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "imblens 0.1.0" in capsys.readouterr().out

    def test_missing_command_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_unknown_choice_is_usage_error(self, capsys, quad):
        with pytest.raises(SystemExit):
            main(["topk", str(quad / "fe"), str(quad / "w"), "--space", "logits"])
        capsys.readouterr()

    def test_threads_flag_caps_pools(self, capsys, quad, monkeypatch):
        for var in _THREAD_VARS:
            monkeypatch.setenv(var, "sentinel")
        rc, _, _ = run_cli(capsys, "inspect", quad / "fe", "--threads", "3")
        assert rc == 0
        assert all(os.environ[var] == "3" for var in _THREAD_VARS)

    def test_threads_env_fallback(self, capsys, quad, monkeypatch):
        for var in _THREAD_VARS:
            monkeypatch.setenv(var, "sentinel")
        monkeypatch.setenv("IMBLENS_THREADS", "2")
        rc, _, _ = run_cli(capsys, "inspect", quad / "fe")
        assert rc == 0
        assert all(os.environ[var] == "2" for var in _THREAD_VARS)

    def test_invalid_threads_value(self, capsys, quad):
        rc, _, err = run_cli(capsys, "inspect", quad / "fe", "--threads", "0")
        assert rc == 2
        assert "threads" in err

    def test_module_entrypoint(self, quad):
        ok = subprocess.run(
            [sys.executable, "-m", "imblens.cli", "inspect", str(quad / "fe"), "--json"],
            capture_output=True,
            text=True,
        )
        assert ok.returncode == 0
        assert json.loads(ok.stdout)["summary"]["n"] == 4
        bad = subprocess.run(
            [sys.executable, "-m", "imblens.cli", "inspect", str(quad / "missing")],
            capture_output=True,
            text=True,
        )
        assert bad.returncode == 2
        assert "MissingManifestError" in bad.stderr

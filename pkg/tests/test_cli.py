import json
from pathlib import Path

import numpy as np
import pytest

from sigil.cli import main
from sigil.graphs import load_bundle


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = run(
        ["synth", "--out", out, "--nodes", 40, "--communities", 2, "--views", 2,
         "--feature-dim", 4, "--intra", 0.3, "--inter", 0.05, "--seed", 7]
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def injected_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("injected")
    code = run(
        ["inject", "--bundle", synth_dir / "synthetic.bundle", "--out", out,
         "--clique-size", 3, "--cliques", 2, "--attr", 4, "--k", 10, "--seed", 8]
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(injected_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    code = run(
        ["train", "--bundle", injected_dir / "injected.bundle", "--out", out,
         "--iterations", 30, "--hidden", 8, "--clusters", "2", "--lambda", 2.0,
         "--seed", 9, "--log-interval", 10]
    )
    assert code == 0
    return out


def test_synth_views_share_edge_content(synth_dir):
    e0 = (synth_dir / "synthetic.view0.edges").read_text()
    e1 = (synth_dir / "synthetic.view1.edges").read_text()
    assert e0 == e1
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["command"] == "synth"


def test_synth_without_seed_records_entropy_seed(tmp_path):
    out = tmp_path / "noseed"
    assert run(["synth", "--out", out, "--nodes", 20, "--seed-less" ]) == 2  # unknown flag
    assert run(["synth", "--out", out, "--nodes", 20]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert isinstance(manifest["seed"], int)


def test_synth_invalid_probability_is_usage_error(tmp_path):
    assert run(["synth", "--out", tmp_path / "x", "--intra", 1.7]) == 2
    assert run(["synth", "--out", tmp_path / "y", "--mask-prob", 1.0]) == 2


def test_inject_labels_and_counts(injected_dir):
    graph = load_bundle(injected_dir / "injected.bundle")
    assert graph.labels.count == 2 * 3 + 4


def test_inject_empty_plan_keeps_bundle_and_writes_empty_labels(synth_dir, tmp_path):
    out = tmp_path / "noop"
    code = run(
        ["inject", "--bundle", synth_dir / "synthetic.bundle", "--out", out,
         "--cliques", 0, "--attr", 0, "--seed", 1]
    )
    assert code == 0
    assert (out / "injected.labels").read_text() == ""
    original = (synth_dir / "synthetic.view0.features").read_text()
    assert (out / "injected.view0.features").read_text() == original


def test_inject_budget_error_names_constraint(synth_dir, tmp_path):
    code = run(
        ["inject", "--bundle", synth_dir / "synthetic.bundle",
         "--out", tmp_path / "over", "--clique-size", 30, "--cliques", 2,
         "--seed", 1]
    )
    assert code == 2


def test_missing_bundle_is_io_error(tmp_path):
    code = run(
        ["train", "--bundle", tmp_path / "missing.bundle", "--out", tmp_path / "t"]
    )
    assert code == 3


def test_train_outputs(trained_dir):
    assert (trained_dir / "model.ckpt").exists()
    log = (trained_dir / "train.log").read_text().splitlines()
    assert log[0].startswith("iteration total recon contrast")
    assert (trained_dir / "timing.log").exists()


def test_score_and_report_round_trip(injected_dir, trained_dir, tmp_path):
    out = tmp_path / "scores"
    code = run(
        ["score", "--bundle", injected_dir / "injected.bundle",
         "--checkpoint", trained_dir / "model.ckpt", "--out", out,
         "--beta", 0.5]
    )
    assert code == 0
    from sigil.scoring import read_score_report, write_score_report

    report = read_score_report(out / "scores.txt")
    again = tmp_path / "again.txt"
    write_score_report(report, again)
    assert (out / "scores.txt").read_text() == again.read_text()


def test_score_beta_out_of_range_is_usage_error(injected_dir, trained_dir, tmp_path):
    code = run(
        ["score", "--bundle", injected_dir / "injected.bundle",
         "--checkpoint", trained_dir / "model.ckpt",
         "--out", tmp_path / "s", "--beta", 2.0]
    )
    assert code == 2


def test_score_beta_zero_ranking_matches_score1(injected_dir, trained_dir, tmp_path):
    out = tmp_path / "b0"
    assert run(
        ["score", "--bundle", injected_dir / "injected.bundle",
         "--checkpoint", trained_dir / "model.ckpt", "--out", out, "--beta", 0.0]
    ) == 0
    from sigil.scoring import read_score_report

    report = read_score_report(out / "scores.txt")
    expected = np.lexsort((np.arange(report.score1.size), -report.score1))
    np.testing.assert_array_equal(report.ranking, expected)


def test_checkpoint_architecture_mismatch_is_io_error(trained_dir, tmp_path):
    other = tmp_path / "other"
    assert run(["synth", "--out", other, "--nodes", 25, "--feature-dim", 4,
                "--views", 2, "--seed", 3]) == 0
    code = run(
        ["score", "--bundle", other / "synthetic.bundle",
         "--checkpoint", trained_dir / "model.ckpt", "--out", tmp_path / "s2"]
    )
    assert code == 3


def test_evaluate_metrics(injected_dir, trained_dir, tmp_path):
    scores = tmp_path / "sc"
    assert run(
        ["score", "--bundle", injected_dir / "injected.bundle",
         "--checkpoint", trained_dir / "model.ckpt", "--out", scores]
    ) == 0
    out = tmp_path / "metrics"
    code = run(
        ["evaluate", "--scores", scores / "scores.txt",
         "--labels", injected_dir / "injected.labels", "--out", out,
         "--k", "5,40"]
    )
    assert code == 0
    payload = json.loads((out / "metrics.json").read_text())
    assert payload["recall_at_k"]["40"] == 1.0
    assert 0.0 <= payload["auc"] <= 1.0
    assert "recall_at_5" in (out / "metrics.txt").read_text()


def test_evaluate_label_mismatch_is_error(injected_dir, trained_dir, tmp_path):
    scores = tmp_path / "sc2"
    assert run(
        ["score", "--bundle", injected_dir / "injected.bundle",
         "--checkpoint", trained_dir / "model.ckpt", "--out", scores]
    ) == 0
    bad = tmp_path / "bad.labels"
    bad.write_text("999\n")
    code = run(
        ["evaluate", "--scores", scores / "scores.txt", "--labels", bad,
         "--out", tmp_path / "m2"]
    )
    assert code == 3


def test_perfect_scores_give_unit_metrics(tmp_path):
    from sigil.scoring import ScoreReport, write_score_report

    n = 10
    score1 = np.arange(n, 0, -1, dtype=float)
    report = ScoreReport(
        score1=score1,
        score2=np.zeros(n),
        combined=score1,
        beta=0.0,
        ranking=np.argsort(-score1, kind="stable"),
        cluster_assignment=np.zeros(n, dtype=np.int64),
    )
    scores = tmp_path / "scores.txt"
    write_score_report(report, scores)
    labels = tmp_path / "labels.txt"
    labels.write_text("0\n1\n2\n")
    out = tmp_path / "m"
    assert run(
        ["evaluate", "--scores", scores, "--labels", labels, "--out", out,
         "--k", "3,10"]
    ) == 0
    payload = json.loads((out / "metrics.json").read_text())
    assert payload["auc"] == 1.0
    assert payload["recall_at_k"]["3"] == 1.0


def test_diagnose_scoped_run_and_exit_codes(tmp_path):
    out = tmp_path / "diag"
    code = run(["diagnose", "--only", "lemma1", "--out", out, "--seed", 1])
    assert code == 0
    text = (out / "diagnostics.txt").read_text()
    assert "check=lemma1 " in text and "overall=pass" in text
    assert run(["diagnose", "--only", "bogus", "--out", tmp_path / "d2"]) == 2


# ---------------------------------------------------------------------------
# manifests and reruns


def _tree_bytes(root: Path, skip=("manifest.json", "timing.log")):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name not in skip:
            out[path.relative_to(root)] = path.read_bytes()
    return out


def test_rerun_reproduces_synth_bit_identically(synth_dir, tmp_path):
    out = tmp_path / "again"
    assert run(["rerun", synth_dir / "manifest.json", "--out", out]) == 0
    assert _tree_bytes(synth_dir) == _tree_bytes(out)
    # the manifest itself is byte-identical as well
    assert (synth_dir / "manifest.json").read_bytes() == (out / "manifest.json").read_bytes()


def test_rerun_reproduces_training_bit_identically(trained_dir, tmp_path):
    out = tmp_path / "retrain"
    assert run(["rerun", trained_dir / "manifest.json", "--out", out]) == 0
    assert (trained_dir / "model.ckpt").read_bytes() == (out / "model.ckpt").read_bytes()
    assert (trained_dir / "train.log").read_text() == (out / "train.log").read_text()


def test_rerun_detects_changed_inputs(tmp_path):
    base = tmp_path / "base"
    assert run(["synth", "--out", base, "--nodes", 20, "--feature-dim", 3,
                "--seed", 4]) == 0
    injected = tmp_path / "inj"
    assert run(["inject", "--bundle", base / "synthetic.bundle", "--out", injected,
                "--cliques", 1, "--clique-size", 3, "--seed", 5]) == 0
    # tamper with a data file the manifest digested
    feature_file = base / "synthetic.view0.features"
    feature_file.write_text(feature_file.read_text() + "# changed\n")
    code = run(["rerun", injected / "manifest.json", "--out", tmp_path / "out"])
    assert code == 1


def test_manifest_written_before_outputs(tmp_path):
    out = tmp_path / "m"
    assert run(["synth", "--out", out, "--nodes", 15, "--seed", 2]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for name in manifest["outputs"]:
        assert (out / name).exists()

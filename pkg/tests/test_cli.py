"""Command-line contract: exit codes, determinism, table formats."""

import pytest
from click.testing import CliRunner

from microqual.cli import main

from .conftest import REFERENCE_DIR, build_demo_kb, demo_interchange_lines

SUBCOMMANDS = ["ingest", "score", "evaluate", "retrieve", "tree", "serve", "export"]


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def data_dir(tmp_path):
    d = tmp_path / "store"
    kb = build_demo_kb()
    from .conftest import store_demo_baselines

    store_demo_baselines(kb)
    kb.save(d)
    return str(d)


def invoke(runner, args, **kw):
    return runner.invoke(main, args, catch_exceptions=False, **kw)


class TestHelp:
    def test_every_subcommand_help_exits_zero(self, runner):
        assert invoke(runner, ["--help"]).exit_code == 0
        for sub in SUBCOMMANDS:
            result = invoke(runner, [sub, "--help"])
            assert result.exit_code == 0, sub
            assert "--help" in result.output


class TestIngest:
    def test_labels_count(self, runner, tmp_path):
        result = invoke(
            runner,
            ["ingest", "--labels", str(REFERENCE_DIR / "labels.csv"),
             "--data-dir", str(tmp_path / "d")],
        )
        assert result.exit_code == 0
        assert "40 labels loaded" in result.output

    def test_embeddings_and_criteria(self, runner, tmp_path):
        emb = tmp_path / "emb.jsonl"
        emb.write_text("\n".join(demo_interchange_lines()) + "\n", encoding="utf-8")
        result = invoke(
            runner,
            ["ingest", "--embeddings", str(emb),
             "--criteria", str(REFERENCE_DIR / "criteria.json"),
             "--data-dir", str(tmp_path / "d")],
        )
        assert result.exit_code == 0
        assert "38 embeddings loaded" in result.output
        assert "6 criteria stored" in result.output

    def test_malformed_line_cites_line_number(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        lines = demo_interchange_lines()
        bad.write_text(lines[0] + "\n" + "{not json}\n", encoding="utf-8")
        result = runner.invoke(
            main, ["ingest", "--embeddings", str(bad), "--data-dir", str(tmp_path / "d")]
        )
        assert result.exit_code == 1
        assert "line 2" in result.output

    def test_reingest_duplicates_fails(self, runner, tmp_path):
        emb = tmp_path / "emb.jsonl"
        emb.write_text("\n".join(demo_interchange_lines()) + "\n", encoding="utf-8")
        d = str(tmp_path / "d")
        assert invoke(runner, ["ingest", "--embeddings", str(emb), "--data-dir", d]).exit_code == 0
        result = runner.invoke(main, ["ingest", "--embeddings", str(emb), "--data-dir", d])
        assert result.exit_code == 1
        assert "duplicate" in result.output

    def test_nothing_to_ingest_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["ingest", "--data-dir", str(tmp_path / "d")])
        assert result.exit_code == 2


class TestScoreFixtureMode:
    def test_fixture_scoring_writes_table(self, runner, tmp_path):
        out = tmp_path / "table.csv"
        result = invoke(
            runner,
            ["score", "--criterion", "EA6",
             "--fixture", str(REFERENCE_DIR / "distribution_scores.csv"),
             "--out", str(out), "--data-dir", str(tmp_path / "d")],
        )
        assert result.exit_code == 0
        header = out.read_text(encoding="utf-8").splitlines()[0]
        assert header == "image,delta_flava,delta_clip,delta_flava_z,delta_clip_z,delta_combined"

    def test_fixture_scoring_deterministic_bytes(self, runner, tmp_path):
        args = ["score", "--criterion", "EA6",
                "--fixture", str(REFERENCE_DIR / "distribution_scores.csv"),
                "--data-dir", str(tmp_path / "d")]
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        invoke(runner, args + ["--out", str(out1)])
        invoke(runner, args + ["--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_threshold_relabels_without_changing_scores(self, runner, tmp_path):
        base, shifted = tmp_path / "base.csv", tmp_path / "shifted.csv"
        common = ["score", "--criterion", "EA6",
                  "--fixture", str(REFERENCE_DIR / "distribution_scores.csv"),
                  "--data-dir", str(tmp_path / "d")]
        invoke(runner, common + ["--out", str(base)])
        invoke(runner, common + ["--threshold", "0.5", "--out", str(shifted)])
        # numeric columns identical; labels are not part of the table file
        assert base.read_bytes() == shifted.read_bytes()

    def test_weighted_unit_weights_byte_identical(self, runner, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        common = ["score", "--criterion", "EA6",
                  "--fixture", str(REFERENCE_DIR / "distribution_scores.csv"),
                  "--data-dir", str(tmp_path / "d")]
        invoke(runner, common + ["--out", str(a)])
        invoke(runner, common + ["--strategy", "weighted", "--weights", "1,1", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_full_precision_flag(self, runner, tmp_path):
        out = tmp_path / "full.csv"
        invoke(
            runner,
            ["score", "--criterion", "EA6",
             "--fixture", str(REFERENCE_DIR / "distribution_scores.csv"),
             "--precision", "full", "--out", str(out), "--data-dir", str(tmp_path / "d")],
        )
        body = out.read_text(encoding="utf-8")
        assert any(len(tok.split(".")[-1]) > 6 for tok in body.splitlines()[1].split(",")[1:])

    def test_missing_fixture_is_operational_error(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["score", "--criterion", "EA6", "--fixture", str(tmp_path / "nope.csv"),
             "--out", str(tmp_path / "o.csv"), "--data-dir", str(tmp_path / "d")],
        )
        assert result.exit_code == 2  # click validates the path: usage error


class TestScoreStoreMode:
    def test_scores_from_store_and_baseline(self, runner, data_dir, tmp_path):
        out = tmp_path / "ea1.csv"
        result = invoke(
            runner,
            ["score", "--criterion", "EA1", "--out", str(out),
             "--store-baseline", "--data-dir", data_dir],
        )
        assert result.exit_code == 0
        assert "baseline stored" in result.output
        assert len(out.read_text(encoding="utf-8").splitlines()) == 13  # header + 12 samples


class TestEvaluate:
    def test_synthetic_hand_counted_matrix(self, runner, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text(
            "image,delta_flava,delta_clip,delta_flava_z,delta_clip_z,delta_combined\n"
            "A.png,0,0,0.5,0.5,1.0\n"
            "B.png,0,0,0.25,0.25,0.5\n"
            "C.png,0,0,-0.25,-0.25,-0.5\n"
            "D.png,0,0,-0.5,-0.5,-1.0\n",
            encoding="utf-8",
        )
        labels = tmp_path / "labels.csv"
        labels.write_text(
            "sample,distribution\nA,accept\nB,reject\nC,accept\nD,reject\n", encoding="utf-8"
        )
        result = invoke(
            runner,
            ["evaluate", "--criterion", "EA6", "--against", str(labels), "--scores", str(scores)],
        )
        assert result.exit_code == 0
        assert "tp=1 fp=1 fn=1 tn=1" in result.output
        assert "accuracy=0.5000" in result.output

    def test_all_na_fails(self, runner, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text(
            "image,delta_flava,delta_clip,delta_flava_z,delta_clip_z,delta_combined\n"
            "A.png,0,0,0,0,1.0\n",
            encoding="utf-8",
        )
        labels = tmp_path / "labels.csv"
        labels.write_text("sample,distribution\nA,NA\n", encoding="utf-8")
        result = runner.invoke(
            main,
            ["evaluate", "--criterion", "EA6", "--against", str(labels), "--scores", str(scores)],
        )
        assert result.exit_code == 1
        assert "no labeled samples" in result.output


class TestRetrieveTreeExport:
    def test_retrieve_prints_k_rows(self, runner, data_dir):
        result = invoke(
            runner,
            ["retrieve", "--criteria", "EA1", "--k", "5", "--data-dir", data_dir],
        )
        assert result.exit_code == 0
        lines = [ln for ln in result.output.splitlines() if ln.strip()]
        assert len(lines) == 5
        assert all("\t" in ln for ln in lines)

    def test_tree_gate_failing_sample_prints_short_trace(self, runner, data_dir):
        # order with a criterion that cannot resolve forces a fail-closed gate
        result = invoke(
            runner,
            ["tree", "--sample", "Sample 5", "--order", "EA9,EA1", "--gates", "EA9",
             "--data-dir", data_dir],
        )
        assert result.exit_code == 0
        lines = [ln for ln in result.output.splitlines() if ln.strip()]
        assert lines[0].startswith("EA9\tfail")
        assert "final: reject (short-circuited)" in result.output

    def test_tree_full_run(self, runner, data_dir):
        result = invoke(runner, ["tree", "--sample", "Sample 5", "--data-dir", data_dir])
        assert result.exit_code == 0
        assert "final:" in result.output

    def test_export_projection_row_count(self, runner, data_dir, tmp_path):
        out = tmp_path / "proj.csv"
        result = invoke(
            runner,
            ["export", "--what", "projection", "--model", "flava",
             "--out", str(out), "--data-dir", data_dir],
        )
        assert result.exit_code == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 13  # header + 12 samples

    def test_export_report(self, runner, data_dir, tmp_path):
        out = tmp_path / "report.csv"
        result = invoke(
            runner,
            ["export", "--what", "report", "--model", "clip", "--criteria", "EA1,EA2",
             "--ks", "3,5", "--out", str(out), "--data-dir", data_dir],
        )
        assert result.exit_code == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "criterion_set,variant,model,k,precision_pct"
        assert len(lines) == 5  # 2 criteria x 2 ks

from mmrec.cli import main
from mmrec.data import load_dataset

from test_experiment import write_toy_workspace


def run(argv):
    return main([str(a) for a in argv])


class TestPreprocess:
    def test_with_flags(self, tmp_path, capsys):
        write_toy_workspace(tmp_path)
        code = run([
            "preprocess",
            "--interactions", tmp_path / "interactions.tsv",
            "--k", "1",
            "--split", "per_user_random",
            "--ratios", "0.8,0.1,0.1",
            "--seed", "9",
            "--out", tmp_path / "ds",
        ])
        assert code == 0
        ds = load_dataset(tmp_path / "ds")
        assert ds.n_users == 20 and ds.train.nnz > 0
        assert "users" in capsys.readouterr().out

    def test_with_config(self, tmp_path):
        config = write_toy_workspace(tmp_path)
        assert run(["preprocess", "--config", config, "--out", tmp_path / "ds"]) == 0
        assert (tmp_path / "ds" / "meta").exists()

    def test_missing_interactions_is_config_error(self, tmp_path):
        assert run(["preprocess", "--out", tmp_path / "ds"]) == 2

    def test_unreadable_file_is_hard_error(self, tmp_path):
        code = run(["preprocess", "--interactions", tmp_path / "nope.tsv", "--out", tmp_path / "d"])
        assert code == 1

    def test_bad_config_exit_2(self, tmp_path):
        config = write_toy_workspace(tmp_path, extra_lines=["learnig_rate: 0.1"])
        assert run(["preprocess", "--config", config, "--out", tmp_path / "ds"]) == 2


class TestTrain:
    def test_train_writes_artifacts(self, tmp_path, capsys):
        config = write_toy_workspace(tmp_path)
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 0
        assert (tmp_path / "out" / "checkpoint" / "meta").exists()
        assert (tmp_path / "out" / "train_log.tsv").exists()
        assert (tmp_path / "out" / "valid_report.tsv").exists()
        assert (tmp_path / "out" / "test_report.tsv").exists()

    def test_train_rejects_grid_config(self, tmp_path):
        config = write_toy_workspace(tmp_path, extra_lines=["reg: [0.0, 0.1]"])
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 2

    def test_multimodal_train(self, tmp_path):
        config = write_toy_workspace(tmp_path, extra_lines=["model: vbpr_mm"])
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 0


class TestGrid:
    def test_grid_end_to_end(self, tmp_path, capsys):
        config = write_toy_workspace(tmp_path, extra_lines=["reg: [0.0, 0.1]"])
        assert run(["grid", "--config", config, "--out", tmp_path / "out"]) == 0
        out = capsys.readouterr().out
        assert "2 combinations" in out
        assert (tmp_path / "out" / "summary.tsv").exists()
        assert (tmp_path / "out" / "combo_001" / "checkpoint" / "meta").exists()

    def test_grid_jobs_flag(self, tmp_path):
        config = write_toy_workspace(tmp_path, extra_lines=["reg: [0.0, 0.1]"])
        assert run(["grid", "--config", config, "--out", tmp_path / "out", "--jobs", "2"]) == 0


class TestEval:
    def test_eval_prints_report(self, tmp_path, capsys):
        config = write_toy_workspace(tmp_path)
        run(["train", "--config", config, "--out", tmp_path / "out"])
        capsys.readouterr()
        code = run([
            "eval",
            "--checkpoint", tmp_path / "out" / "checkpoint",
            "--data", tmp_path / "out" / "dataset",
            "--split", "test",
            "--topk", "5,10",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("metric\tk\tvalue")
        assert "recall\t5\t" in out and "n_evaluated\t" in out

    def test_eval_writes_report_file(self, tmp_path, capsys):
        config = write_toy_workspace(tmp_path)
        run(["train", "--config", config, "--out", tmp_path / "out"])
        code = run([
            "eval",
            "--checkpoint", tmp_path / "out" / "checkpoint",
            "--data", tmp_path / "out" / "dataset",
            "--out", tmp_path / "report",
        ])
        assert code == 0
        assert (tmp_path / "report" / "report.tsv").exists()

    def test_multimodal_eval_needs_config(self, tmp_path, capsys):
        config = write_toy_workspace(tmp_path, extra_lines=["model: vbpr_mm"])
        run(["train", "--config", config, "--out", tmp_path / "out"])
        capsys.readouterr()
        args = [
            "eval",
            "--checkpoint", tmp_path / "out" / "checkpoint",
            "--data", tmp_path / "out" / "dataset",
        ]
        assert run(args) == 1  # missing feature config is a hard error
        assert run(args + ["--config", config]) == 0
        out = capsys.readouterr().out
        assert "ndcg\t10\t" in out

    def test_eval_matches_train_report(self, tmp_path, capsys):
        config = write_toy_workspace(tmp_path)
        run(["train", "--config", config, "--out", tmp_path / "out"])
        capsys.readouterr()
        run([
            "eval",
            "--checkpoint", tmp_path / "out" / "checkpoint",
            "--data", tmp_path / "out" / "dataset",
            "--split", "test",
            "--topk", "5,10",
        ])
        printed = capsys.readouterr().out
        stored = (tmp_path / "out" / "test_report.tsv").read_text()
        assert printed == stored

import json

import pytest

from ladderemo import data as D
from ladderemo.cli import build_parser, main


def write_config(tmp_path, variant="STL", **extra):
    cfg = {"model": {"variant": variant, "hidden_dims": [8, 4]},
           "data": {"synth_spec": "spec.txt", "split_seed": 0},
           "optimizer": {"learning_rate": 1e-3}, "max_epochs": 2, "batch_size": 32,
           "seeds": [0, 1], "attributes": ["valence"]}
    cfg.update(extra)
    (tmp_path / "spec.txt").write_text("n_samples = 200\nfeature_dim = 10\nrank = 4\nn_speakers = 10\n")
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


class TestCli:
    def test_subcommands(self):
        parser = build_parser()
        for cmd in ("synth-data -o x", "train -c x", "evaluate -c x --checkpoint y", "gradcheck", "report a"):
            assert parser.parse_args(cmd.split()).command == cmd.split()[0]
        with pytest.raises(SystemExit):
            parser.parse_args([])

    def test_synth_data(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        assert main(["synth-data", "--set", "n_samples=60", "--set", "feature_dim=6",
                     "--set", "rank=3", "-o", str(out)]) == 0
        table, dropped = D.load_corpus(out / "features.csv", out / "labels.csv")
        assert table.features.shape == (60, 6) and dropped == 0
        assert D.SynthSpec.from_file(out / "synth_spec.txt").n_samples == 60

    def test_synth_data_rejects_bad_spec(self, tmp_path, capsys):
        assert main(["synth-data", "--set", "rank=99", "-o", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_train_evaluate_report(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["train", "-c", str(cfg), "--seeds", "3", "4", "--variant", "LadderSTL",
                     "-o", str(out)]) == 0
        text = capsys.readouterr().out
        assert "Ladder+STL" in text
        summary = out / "LadderSTL" / "summary.json"
        assert json.loads(summary.read_text())["attributes"]["valence"]["seeds"] == [3, 4]

        ckpt = out / "LadderSTL" / "valence" / "seed3" / "checkpoint.npz"
        assert main(["evaluate", "-c", str(cfg), "--checkpoint", str(ckpt), "--split", "validation"]) == 0
        assert "validation CCC valence" in capsys.readouterr().out

        assert main(["report", str(summary), "--csv", str(tmp_path / "t.csv")]) == 0
        assert "± " in capsys.readouterr().out
        assert (tmp_path / "t.csv").read_text().startswith("variant,split")

    def test_missing_config(self, tmp_path, capsys):
        assert main(["train", "-c", str(tmp_path / "nope.json")]) == 2

    def test_gradcheck(self, capsys):
        assert main(["gradcheck"]) == 0
        assert "PASS" in capsys.readouterr().out

import json
import subprocess
import sys

import pytest

from cascade import cli, synthetic

CONFIG_TOML = """
[paths]
train = "{train}"
test = "{test}"
essays = "{essays}"
output_dir = "{out}"

[corpus]
min_count = 1

[style]
dim = 10
window = 2
epochs = 4
lr = 0.05

[discourse]
dim = 6
epochs = 4

[cnn]
embed_dim = 12
heights = [1, 2]
filter_maps = 8
dense_dim = 10
max_len = 12

[training]
lr = 0.01
batch_size = 32
patience = 3
personality_epochs = 6
cascade_epochs = 6

[fusion]
dim = 6

[run]
seed = 13
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = synthetic.contextual_corpus(n_users=24, n_forums=4, n_comments=320,
                                         seed=3, n_essays=50)
    synthetic.write_jsonl(root / "train.jsonl", corpus.train)
    synthetic.write_jsonl(root / "test.jsonl", corpus.test)
    synthetic.write_essays_jsonl(root / "essays.jsonl", corpus.essays)
    config = root / "run.toml"
    config.write_text(CONFIG_TOML.format(
        train=root / "train.jsonl", test=root / "test.jsonl",
        essays=root / "essays.jsonl", out=root / "out"))
    return root, config


def run(config, *args):
    return cli.main(["--config", str(config), *args])


class TestWorkflow:
    def test_predict_before_train_exits_one(self, workspace, capsys):
        root, config = workspace
        code = cli.main(["--config", str(config), "predict", str(root / "test.jsonl")])
        assert code == 1
        assert "run `cascade train` first" in capsys.readouterr().err

    def test_full_workflow(self, workspace, capsys):
        root, config = workspace
        assert run(config, "prepare") == 0
        assert (root / "out" / "vocab.txt").exists()
        assert (root / "out" / "user_documents.txt").exists()
        assert run(config, "train-context") == 0
        assert (root / "out" / "context_bank.ckpt").exists()
        assert run(config, "train") == 0
        assert run(config, "eval") == 0
        out = capsys.readouterr().out
        payload = json.loads(out[out.index("{"):])
        assert set(payload) == {"accuracy", "f1_sarcastic", "precision_sarcastic",
                                "recall_sarcastic", "confusion", "loss_bits"}
        assert (root / "out" / "eval_report.json").exists()

    def test_provenance_line_on_stderr(self, workspace, capsys):
        root, config = workspace
        assert run(config, "prepare") == 0
        err = capsys.readouterr().err
        assert "provenance config=" in err and "seed=13" in err and "corpus=" in err

    def test_predict_jsonl_schema(self, workspace, capsys):
        root, config = workspace
        assert run(config, "predict", str(root / "test.jsonl")) == 0
        out = capsys.readouterr().out
        lines = [json.loads(line) for line in out.strip().splitlines()]
        assert len(lines) == sum(1 for _ in open(root / "test.jsonl"))
        for obj in lines[:5]:
            assert set(obj) == {"id", "label", "p_sarcastic"}
            assert obj["label"] in (0, 1)
            assert 0.0 <= obj["p_sarcastic"] <= 1.0

    def test_export_embeddings(self, workspace, capsys):
        root, config = workspace
        for which in ("user", "forum", "stylometric", "personality"):
            assert run(config, "export-embeddings", "--which", which) == 0
            assert (root / "out" / f"{which}_embeddings.txt").exists()

    def test_train_determinism_byte_identical(self, workspace, tmp_path):
        root, config = workspace
        first = (root / "out" / "cascade_model.ckpt").read_bytes()
        assert run(config, "train") == 0
        second = (root / "out" / "cascade_model.ckpt").read_bytes()
        assert first == second

    def test_missing_input_file_exits_two(self, workspace, tmp_path, capsys):
        root, config = workspace
        bad = tmp_path / "bad.toml"
        bad.write_text(config.read_text().replace("train.jsonl", "absent.jsonl"))
        assert cli.main(["--config", str(bad), "prepare"]) == 2

    def test_seed_override_changes_provenance(self, workspace, capsys):
        root, config = workspace
        assert cli.main(["--config", str(config), "--seed", "99", "prepare"]) == 0
        assert "seed=99" in capsys.readouterr().err


class TestEntryPoint:
    def test_console_script_help(self):
        result = subprocess.run([sys.executable, "-m", "cascade.cli", "--help"],
                                capture_output=True, text=True)
        assert result.returncode == 0
        for command in ("prepare", "train-context", "train", "eval", "predict",
                        "export-embeddings"):
            assert command in result.stdout

    def test_unknown_command_fails(self):
        result = subprocess.run([sys.executable, "-m", "cascade.cli", "frobnicate"],
                                capture_output=True, text=True)
        assert result.returncode != 0

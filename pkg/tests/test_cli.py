import json
import subprocess
import sys

import pytest

from conftest import materialize_lexicons, write_pipeline_config
from xlom.cli import main


@pytest.fixture(scope="module")
def workdir(mini_corpus, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    lexicons = materialize_lexicons(root / "lex")
    return root, lexicons


class TestSubcommands:
    def test_fixture_and_ingest(self, tmp_path):
        rc = main(["fixture", "--topics", "2", "--per-topic", "4", "--langs", "en",
                   "--dim", "4", "--noise", "0.1", "--seed", "3",
                   "--out", str(tmp_path / "fx")])
        assert rc == 0
        rc = main(["ingest", "--input", str(tmp_path / "fx" / "documents.jsonl"),
                   "--out", str(tmp_path / "ing"), "--langs", "en"])
        assert rc == 0
        assert (tmp_path / "ing" / "store.jsonl").exists()

    def test_embed_cluster_sweep_topics(self, workdir, mini_corpus, tmp_path):
        root, lexicons = workdir
        ing = tmp_path / "ing"
        assert main(["ingest", "--input", str(mini_corpus.documents_path),
                     "--out", str(ing), "--langs", "en,de"]) == 0
        emb = tmp_path / "emb"
        assert main(["embed", "--provider", "file",
                     "--store", str(ing / "store.jsonl"),
                     "--matrix", str(mini_corpus.matrix_path),
                     "--ids", str(mini_corpus.ids_path),
                     "--out", str(emb)]) == 0
        run_dir = tmp_path / "run5"
        assert main(["cluster", "--matrix", str(emb / "matrix.emb"),
                     "--ids", str(emb / "matrix.ids"), "--k", "5",
                     "--seed", "42", "--out", str(run_dir)]) == 0
        sweep_dir = tmp_path / "runs"
        assert main(["sweep", "--matrix", str(emb / "matrix.emb"),
                     "--ids", str(emb / "matrix.ids"),
                     "--k-min", "1", "--k-max", "6", "--seed", "42",
                     "--runs-dir", str(sweep_dir),
                     "--out", str(sweep_dir / "curves.json")]) == 0
        curves = json.loads((sweep_dir / "curves.json").read_text())
        assert curves["selected_k"] == 5
        topics_dir = tmp_path / "topics"
        assert main(["topics", "--run", str(run_dir),
                     "--store", str(ing / "store.jsonl"),
                     "--matrix", str(emb / "matrix.emb"),
                     "--ids", str(emb / "matrix.ids"),
                     "--top-words", "5", "--top-sentences", "2",
                     "--out", str(topics_dir)]) == 0
        senti = tmp_path / "senti.jsonl"
        assert main(["sentiment", "--store", str(ing / "store.jsonl"),
                     "--lexicon", f"en={lexicons['en']}",
                     "--lexicon", f"de={lexicons['de']}",
                     "--out", str(senti)]) == 0
        agg = tmp_path / "agg"
        assert main(["aggregate", "--docs", str(mini_corpus.documents_path),
                     "--store", str(ing / "store.jsonl"),
                     "--run", str(run_dir), "--topics", str(topics_dir / "topics.json"),
                     "--sentiment", str(senti), "--scopes", "article,comments",
                     "--out", str(agg)]) == 0
        assert (agg / "distributions.json").exists()
        sankey_out = tmp_path / "sankey.json"
        assert main(["sankey", "--runs-dir", str(sweep_dir),
                     "--runs", "k2,k05", "--out", str(sankey_out)]) == 0
        report = json.loads(sankey_out.read_text())
        assert sum(l["count"] for l in report["links"]) == 400

    def test_run_command(self, workdir, mini_corpus, tmp_path, capsys):
        root, lexicons = workdir
        cfg = write_pipeline_config(tmp_path / "c.json", mini_corpus, lexicons,
                                    tmp_path / "out", k_min=1, k_max=6,
                                    ladder=[2, 5])
        assert main(["run", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "executed stages" in out
        assert main(["run", "--config", str(cfg)]) == 0
        assert "up to date" in capsys.readouterr().out

    def test_error_is_stage_tagged_and_nonzero(self, capsys):
        rc = main(["ingest", "--input", "/nonexistent/docs.jsonl",
                   "--out", "/tmp/xlom-nope", "--langs", "en"])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("xlom ingest:")

    def test_bad_config_is_tagged(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{}")
        rc = main(["run", "--config", str(cfg)])
        assert rc == 1
        assert "xlom run:" in capsys.readouterr().err


class TestConsoleScript:
    def test_entry_point_help(self):
        proc = subprocess.run([sys.executable, "-m", "xlom.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "xlom" in proc.stdout

    def test_installed_script(self):
        proc = subprocess.run(["xlom", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0

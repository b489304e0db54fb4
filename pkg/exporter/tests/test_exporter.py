import json
import threading
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
import requests

from xlom_exporter.cli import main
from xlom_exporter.encoders import (BilingualHashEncoder, EncoderLoadError,
                                    load_encoder)
from xlom_exporter.export import ExportJob, StoreRow, encode_rows, export, read_store
from xlom_exporter.server import serve

# round-trip verification goes through the consuming pipeline's loader
from xlom.embeddings import cosine, fetch_embeddings, load_embeddings


def write_store(path: Path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for sid, lang, text in rows:
            fh.write(json.dumps({"sent_id": sid, "doc_id": sid.split("#")[0],
                                 "lang": lang, "text": text,
                                 "char_len": len(text)}) + "\n")
    return path


def ten_sentence_store(tmp_path):
    rows = [(f"en-a#{i:04d}", "en", f"sentence number {i} about organic food")
            for i in range(5)]
    rows += [(f"de-a#{i:04d}", "de", f"satz nummer {i} mit lebensmittel gesund")
             for i in range(5)]
    return write_store(tmp_path / "store.jsonl", rows)


def smoke_pairs():
    text = resources.files("xlom_exporter").joinpath("data", "smoke_pairs.json") \
        .read_text("utf-8")
    return json.loads(text)


class TestExport:
    def test_roundtrip_through_pipeline_loader(self, tmp_path):
        store = ten_sentence_store(tmp_path)
        job = ExportJob(store, tmp_path / "m.emb", tmp_path / "m.ids",
                        encoder_id="bilingual-hash-v1:d64")
        assert export(job) == 10
        matrix = load_embeddings(tmp_path / "m.emb", tmp_path / "m.ids")
        assert matrix.ids == [r.sent_id for r in read_store(store)]
        assert matrix.dim == 64
        assert matrix.encoder_tag == "bilingual-hash-v1:d64"

    def test_dim_512_shape(self, tmp_path):
        store = ten_sentence_store(tmp_path)
        job = ExportJob(store, tmp_path / "m.emb", tmp_path / "m.ids",
                        encoder_id="bilingual-hash-v1:d512")
        export(job)
        matrix = load_embeddings(tmp_path / "m.emb", tmp_path / "m.ids",
                                 normalize=False)
        assert len(matrix) == 10 and matrix.dim == 512

    def test_normalize_flag(self, tmp_path):
        store = ten_sentence_store(tmp_path)
        job = ExportJob(store, tmp_path / "m.emb", tmp_path / "m.ids",
                        encoder_id="bilingual-hash-v1:d64", normalize=True)
        export(job)
        matrix = load_embeddings(tmp_path / "m.emb", tmp_path / "m.ids",
                                 normalize=False)
        assert matrix.normalized
        norms = np.linalg.norm(matrix.vectors.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-4)

    def test_deterministic_bytes(self, tmp_path):
        store = ten_sentence_store(tmp_path)
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            export(ExportJob(store, tmp_path / sub / "m.emb",
                             tmp_path / sub / "m.ids",
                             encoder_id="bilingual-hash-v1:d64"))
        assert (tmp_path / "a/m.emb").read_bytes() == (tmp_path / "b/m.emb").read_bytes()
        assert (tmp_path / "a/m.ids").read_bytes() == (tmp_path / "b/m.ids").read_bytes()

    def test_batch_boundaries_preserve_order(self, tmp_path):
        store = ten_sentence_store(tmp_path)
        rows = read_store(store)
        encoder = load_encoder("bilingual-hash-v1:d32")
        one = encode_rows(rows, encoder, batch_size=64)
        small = encode_rows(rows, encoder, batch_size=2)
        assert np.allclose(one, small)

    def test_misbehaving_encoder_rejected(self):
        class Broken:
            dim = 4
            tag = "broken"

            def encode(self, texts, lang):
                return np.zeros((max(0, len(texts) - 1), 4))

        with pytest.raises(ValueError, match="shape"):
            encode_rows([StoreRow("a", "en", "x"), StoreRow("b", "en", "y")],
                        Broken(), batch_size=8)

    def test_unknown_encoder(self):
        with pytest.raises(EncoderLoadError):
            load_encoder("quantum-vibes-v9")


class TestCrossLingualSmoke:
    def test_translated_pairs_beat_random_cross_pairs(self):
        pairs = smoke_pairs()
        assert len(pairs) == 10
        encoder = BilingualHashEncoder(dim=256)
        en = encoder.encode([p[0] for p in pairs], "en")
        de = encoder.encode([p[1] for p in pairs], "de")
        pair_cos = [cosine(en[i], de[i]) for i in range(len(pairs))]
        rng = np.random.default_rng(13)
        random_cos = []
        while len(random_cos) < 100:
            i, j = rng.integers(0, len(pairs), size=2)
            if i == j:
                continue
            random_cos.append(cosine(en[i], de[j]))
        assert np.mean(pair_cos) > np.mean(random_cos), (
            f"pairs {np.mean(pair_cos):.3f} vs random {np.mean(random_cos):.3f}"
        )

    def test_every_pair_beats_the_random_mean(self):
        pairs = smoke_pairs()
        encoder = BilingualHashEncoder(dim=256)
        en = encoder.encode([p[0] for p in pairs], "en")
        de = encoder.encode([p[1] for p in pairs], "de")
        rng = np.random.default_rng(13)
        random_cos = []
        while len(random_cos) < 100:
            i, j = rng.integers(0, len(pairs), size=2)
            if i != j:
                random_cos.append(cosine(en[i], de[j]))
        threshold = np.mean(random_cos)
        for i in range(len(pairs)):
            assert cosine(en[i], de[i]) > threshold


@pytest.fixture
def running_server():
    encoder = load_encoder("bilingual-hash-v1:d32")
    server = serve(encoder, host="127.0.0.1", port=0, max_batch=16)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", encoder
    server.shutdown()


class TestHttpContract:
    def test_single_text(self, running_server):
        url, encoder = running_server
        resp = requests.post(f"{url}/embed", json={"texts": ["hello"], "lang": "en"})
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["dim"] == 32
        assert len(payload["vectors"]) == 1
        assert len(payload["vectors"][0]) == 32

    def test_empty_texts(self, running_server):
        url, _ = running_server
        resp = requests.post(f"{url}/embed", json={"texts": [], "lang": "en"})
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["dim"] == 32 and payload["vectors"] == []

    def test_malformed_json(self, running_server):
        url, _ = running_server
        resp = requests.post(f"{url}/embed", data="{not json",
                             headers={"Content-Type": "application/json"})
        assert resp.status_code == 400

    def test_oversize_batch(self, running_server):
        url, _ = running_server
        resp = requests.post(f"{url}/embed",
                             json={"texts": ["x"] * 17, "lang": "en"})
        assert resp.status_code == 413

    def test_unknown_path(self, running_server):
        url, _ = running_server
        resp = requests.post(f"{url}/nope", json={})
        assert resp.status_code == 404

    def test_serving_matches_export(self, running_server):
        url, encoder = running_server
        texts = ["organic food is healthy", "pesticides pollute the soil"]
        resp = requests.post(f"{url}/embed", json={"texts": texts, "lang": "en"})
        served = np.asarray(resp.json()["vectors"])
        direct = encoder.encode(texts, "en")
        assert np.all(np.abs(served - direct) <= 1e-5)

    def test_pipeline_http_client_compatible(self, running_server, tmp_path):
        # the consuming pipeline's http provider speaks to this server
        url, _ = running_server
        store = ten_sentence_store(tmp_path)
        rows = read_store(store)

        class S:  # the client only reads .sent_id, .lang, .text
            def __init__(self, r):
                self.sent_id, self.lang, self.text = r.sent_id, r.lang, r.text

        matrix = fetch_embeddings(url, [S(r) for r in rows], batch_size=4)
        assert matrix.ids == [r.sent_id for r in rows]
        assert matrix.dim == 32


class TestCli:
    def test_export_command(self, tmp_path):
        store = ten_sentence_store(tmp_path)
        rc = main(["export", "--in", str(store), "--out", str(tmp_path / "out"),
                   "--encoder", "bilingual-hash-v1:d32", "--batch", "4"])
        assert rc == 0
        matrix = load_embeddings(tmp_path / "out" / "matrix.emb",
                                 tmp_path / "out" / "matrix.ids")
        assert len(matrix) == 10

    def test_bad_encoder_fails(self, tmp_path, capsys):
        store = ten_sentence_store(tmp_path)
        rc = main(["export", "--in", str(store), "--out", str(tmp_path / "out"),
                   "--encoder", "nope"])
        assert rc == 1
        assert "xlom-export export:" in capsys.readouterr().err

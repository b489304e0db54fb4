"""Exporter acceptance: the release criterion as one checklist test."""

import json
import threading
from contextlib import contextmanager
from importlib import resources

import numpy as np
import requests

from xlom_exporter.encoders import BilingualHashEncoder, load_encoder
from xlom_exporter.export import ExportJob, export, read_store
from xlom_exporter.server import serve

from xlom.embeddings import cosine, load_embeddings


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] FAIL {name}")
        raise
    print(f"[ACCEPTANCE] PASS {name}")


def test_export_round_trip_and_contract(tmp_path):
    """Exporter output loads through the pipeline loader with exact id/dim
    agreement; translated pairs beat random cross-language pairs on the
    bundled smoke set; the /embed HTTP contract cases pass."""
    with criterion("export round-trip + smoke pairs + /embed contract"):
        # round-trip through the consuming pipeline's loader
        store = tmp_path / "store.jsonl"
        with open(store, "w", encoding="utf-8") as fh:
            for i in range(10):
                lang = "en" if i < 5 else "de"
                fh.write(json.dumps({
                    "sent_id": f"{lang}-a#{i:04d}", "doc_id": f"{lang}-a",
                    "lang": lang, "text": f"sentence {i} organic lebensmittel",
                    "char_len": 30,
                }) + "\n")
        job = ExportJob(store, tmp_path / "m.emb", tmp_path / "m.ids",
                        encoder_id="bilingual-hash-v1:d128")
        export(job)
        matrix = load_embeddings(tmp_path / "m.emb", tmp_path / "m.ids")
        assert matrix.ids == [r.sent_id for r in read_store(store)]
        assert matrix.dim == 128

        # cross-language smoke set
        pairs = json.loads(resources.files("xlom_exporter")
                           .joinpath("data", "smoke_pairs.json").read_text("utf-8"))
        encoder = BilingualHashEncoder(dim=256)
        en = encoder.encode([p[0] for p in pairs], "en")
        de = encoder.encode([p[1] for p in pairs], "de")
        pair_mean = float(np.mean([cosine(en[i], de[i]) for i in range(len(pairs))]))
        rng = np.random.default_rng(13)
        random_cos = []
        while len(random_cos) < 100:
            i, j = rng.integers(0, len(pairs), size=2)
            if i != j:
                random_cos.append(cosine(en[i], de[j]))
        random_mean = float(np.mean(random_cos))
        assert pair_mean > random_mean, f"{pair_mean:.3f} <= {random_mean:.3f}"

        # the three /embed contract cases
        server = serve(load_encoder("bilingual-hash-v1:d32"), port=0, max_batch=64)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_address[1]}/embed"
            ok = requests.post(url, json={"texts": ["hello"], "lang": "en"})
            assert ok.status_code == 200
            assert len(ok.json()["vectors"]) == 1
            assert ok.json()["dim"] == 32
            empty = requests.post(url, json={"texts": [], "lang": "en"})
            assert empty.status_code == 200 and empty.json()["vectors"] == []
            bad = requests.post(url, data="{not json",
                                headers={"Content-Type": "application/json"})
            assert bad.status_code == 400
        finally:
            server.shutdown()

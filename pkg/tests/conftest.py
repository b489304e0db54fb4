import json
from importlib import resources
from pathlib import Path

import pytest


def materialize_lexicons(target: Path, langs=("en", "de")) -> dict[str, str]:
    """Copy the bundled demo lexicons into a directory; returns lang -> path."""
    target.mkdir(parents=True, exist_ok=True)
    out = {}
    for lang in langs:
        text = resources.files("xlom").joinpath("data", f"lexicon_{lang}.json").read_text("utf-8")
        path = target / f"lexicon_{lang}.json"
        path.write_text(text, encoding="utf-8")
        out[lang] = str(path)
    return out


def write_pipeline_config(path: Path, fixture, lexicons: dict[str, str],
                          out_dir: Path, *, langs=("en", "de"), k_min=1, k_max=10,
                          seed=42, ladder=None, **extra) -> Path:
    config = {
        "langs": list(langs),
        "documents": str(fixture.documents_path),
        "out": str(out_dir),
        "embeddings": {
            "provider": "file",
            "matrix": str(fixture.matrix_path),
            "ids": str(fixture.ids_path),
        },
        "clustering": {"k_min": k_min, "k_max": k_max, "seed": seed},
        "topics": {"min_df": 3},
        "sentiment": {"lexicons": lexicons},
        "sankey": {"ladder": ladder or []},
    }
    for key, value in extra.items():
        config[key] = value
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """The bundled desk-scale corpus: 5 topics x 40 sentences x 2 languages."""
    from xlom.fixture import make_fixture
    root = tmp_path_factory.mktemp("mini_corpus")
    return make_fixture(root, n_topics=5, n_per_topic=40, langs=("en", "de"),
                        dim=16, noise=0.05, seed=1)

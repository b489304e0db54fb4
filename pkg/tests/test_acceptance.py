"""Acceptance suite: one test per release criterion, each at its stated tolerance.

Every test prints an [ACCEPTANCE] PASS/FAIL line so the suite can be read as
a checklist (run with -s or look at captured output on failure).
"""

import json
import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import materialize_lexicons, write_pipeline_config
from oracles import exhaustive_best_inertia, pair_counts, purity, quantile_sorted
from xlom.analytics import quantiles, sankey_flows, topic_distribution
from xlom.clustering import KMeansClusterer, fit_run, sweep
from xlom.corpus import ANCHOR_RE, URL_RE, Sentence, preprocess
from xlom.embeddings import load_embeddings
from xlom.fixture import make_fixture
from xlom.pipeline import PipelineConfig, run_pipeline
from xlom.topics import TermStats, clarity, term_stats


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] FAIL {name}")
        raise
    print(f"[ACCEPTANCE] PASS {name}")


def test_planted_topic_recovery(tmp_path):
    """5 topics x 40 sentences x 2 languages, dim 16, noise 0.05: the AIC sweep
    over k in [1,10] picks k=5 and the clustering recovers the planted truth."""
    with criterion("planted-topic recovery (selected_k=5, purity>=0.95, <5s)"):
        start = time.perf_counter()
        fx = make_fixture(tmp_path, n_topics=5, n_per_topic=40, langs=("en", "de"),
                          dim=16, noise=0.05, seed=1)
        matrix = load_embeddings(fx.matrix_path, fx.ids_path)
        result = sweep(matrix, k_min=1, k_max=10, seed=42)
        run = result.runs[result.selected_k]
        truth = [fx.truth[sid] for sid in run.ids]
        elapsed = time.perf_counter() - start
        assert result.selected_k == 5
        assert purity(run.labels, truth) >= 0.95
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_cross_lingual_cohesion(tmp_path):
    """With noise 0, translated pairs have identical embeddings and must land
    in the same cluster, for 100% of pairs."""
    with criterion("cross-lingual cohesion (100% of noise-0 pairs co-clustered)"):
        fx = make_fixture(tmp_path, n_topics=5, n_per_topic=40, langs=("en", "de"),
                          dim=16, noise=0.0, seed=2)
        matrix = load_embeddings(fx.matrix_path, fx.ids_path)
        run = fit_run(matrix, k=5, seed=42)
        assignments = run.assignments
        pairs = json.loads(fx.pairs_path.read_text())
        assert pairs
        mismatches = [p for p in pairs if assignments[p[0]] != assignments[p[1]]]
        assert not mismatches, f"{len(mismatches)} of {len(pairs)} pairs split"


def test_clarity_kl_suite():
    """Per-cluster clarity scores sum to a KL divergence, hence >= -1e-9, over
    100 randomized corpora; the hand-computed example passes at 1e-4."""
    with criterion("clarity/KL suite (100 random corpora + worked example)"):
        checked = 0
        for trial in range(100):
            rng = np.random.default_rng(1000 + trial)
            vocab = [f"w{i}" for i in range(int(rng.integers(10, 26)))]
            n_clusters = int(rng.integers(2, 6))
            sentences, assignments = [], {}
            for i in range(int(rng.integers(20, 61))):
                words = rng.choice(vocab, size=int(rng.integers(3, 9)))
                sid = f"s{i:03d}"
                text = " ".join(words)
                sentences.append(Sentence(sid, "d0", "en", text, len(text)))
                assignments[sid] = int(rng.integers(0, n_clusters))
            stats = term_stats(sentences, assignments, "en", min_df=1,
                               stem_tokens=False, stopwords=frozenset())
            for c in stats.cluster_mass:
                total = sum(t.score for t in clarity(stats, c))
                assert total >= -1e-9, f"trial {trial} cluster {c}: KL={total}"
                checked += 1
        assert checked >= 100

        stats = TermStats(lang="en", n_sentences=3, doc_freq={}, min_df=1,
                          corpus_mass={"w": 1 / 3, "x": 2 / 3},
                          cluster_mass={0: {"w": 0.5, "x": 0.5}})
        scores = {t.term: t.score for t in clarity(stats, 0)}
        assert scores["w"] == pytest.approx(0.2925, abs=1e-4)
        assert scores["w"] == pytest.approx(0.5 * math.log2(1.5), abs=1e-12)


def test_kmeans_exhaustive_correctness():
    """On every fixture with <= 10 points the best-of-restarts inertia equals
    the exhaustive-partition optimum; Lloyd inertia is non-increasing on every
    iteration of every restart (also enforced by an assertion inside Lloyd)."""
    with criterion("k-means exhaustive optimum + monotone Lloyd iterations"):
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            n = int(rng.integers(4, 11))
            k = int(rng.integers(2, 4))
            if k >= n:
                k = n - 1
            X = rng.normal(size=(n, 2))
            est = KMeansClusterer(n_clusters=k, seed=seed).fit(X)
            opt = exhaustive_best_inertia(X, k)
            assert est.inertia_ == pytest.approx(opt, rel=1e-9, abs=1e-9), (
                f"seed {seed}: n={n} k={k} got {est.inertia_} optimum {opt}"
            )
            for history in est.inertia_histories_:
                for prev, cur in zip(history, history[1:]):
                    assert cur <= prev + 1e-9 * max(1.0, prev)


def test_sankey_conservation():
    """For 50 random run pairs over 1,000 synthetic sentences, outflows equal
    cluster sizes and the total flow equals the common sentence count, exactly."""
    with criterion("Sankey conservation (50 random run pairs, exact)"):
        ids = [f"s{i:04d}" for i in range(1000)]
        rng = random.Random(77)
        for trial in range(50):
            k_a = rng.randrange(2, 13)
            k_b = rng.randrange(2, 13)
            a = {sid: rng.randrange(k_a) for sid in ids}
            b = {sid: rng.randrange(k_b) for sid in ids}
            result = sankey_flows(a, b)
            assert sum(f.count for f in result.flows) == result.n_common == 1000
            outflow: dict[int, int] = {}
            inflow: dict[int, int] = {}
            for f in result.flows:
                outflow[f.from_cluster] = outflow.get(f.from_cluster, 0) + f.count
                inflow[f.to_cluster] = inflow.get(f.to_cluster, 0) + f.count
            sizes_a: dict[int, int] = {}
            for c in a.values():
                sizes_a[c] = sizes_a.get(c, 0) + 1
            sizes_b: dict[int, int] = {}
            for c in b.values():
                sizes_b[c] = sizes_b.get(c, 0) + 1
            assert outflow == sizes_a
            assert inflow == sizes_b
            assert pair_counts(a, b) == {
                (f.from_cluster, f.to_cluster): f.count for f in result.flows
            }


def test_aggregation_suite():
    """Topic distributions always sum to 1 +- 1e-9; quantiles match the
    sorted-list interpolation oracle on 1,000 random vectors; the worked
    example ([0.5, -0.7, 0.1] -> 0.1, -0.3, 0.3) passes."""
    with criterion("aggregation suite (distributions + quantile oracle)"):
        from xlom.analytics import DocScope
        from xlom.topics import ClusterTopic, TopicModel, apply_labels

        rng = np.random.default_rng(31)
        for trial in range(50):
            k = int(rng.integers(2, 6))
            garbage = {int(rng.integers(0, k))} if rng.random() < 0.5 else set()
            clusters = [ClusterTopic(cluster=i, label=f"T{i}", garbage=i in garbage,
                                     mean_top_sentence_len=50.0) for i in range(k)]
            model = apply_labels(TopicModel(k=k, clusters=clusters), {})
            n = int(rng.integers(3, 40))
            assignments = {f"s{i}": int(rng.integers(0, k)) for i in range(n)}
            store = [Sentence(sid, "a1", "en", "long enough sentence here", 25)
                     for sid in assignments]
            scope = DocScope("a1", "article", ("a1",))
            dist = topic_distribution(scope, assignments, model, store)
            if dist.probs:
                assert sum(dist.probs.values()) == pytest.approx(1.0, abs=1e-9)
            assert 0.0 <= dist.garbage_share <= 1.0

        for trial in range(1000):
            gen = np.random.default_rng(5000 + trial)
            values = gen.uniform(-1, 1, size=int(gen.integers(1, 30))).tolist()
            q1, med, q3 = quantiles(values)
            assert q1 == pytest.approx(quantile_sorted(values, 0.25), abs=1e-12)
            assert med == pytest.approx(quantile_sorted(values, 0.50), abs=1e-12)
            assert q3 == pytest.approx(quantile_sorted(values, 0.75), abs=1e-12)
            assert q1 <= med <= q3
            assert min(values) <= q1 and q3 <= max(values)

        q1, med, q3 = quantiles([0.5, -0.7, 0.1])
        assert med == pytest.approx(0.1, abs=1e-12)
        assert q1 == pytest.approx(-0.3, abs=1e-12)
        assert q3 == pytest.approx(0.3, abs=1e-12)


def test_preprocessing_suite():
    """Length boundaries, anchor and bare-URL replacement, and idempotence
    over 10,000 fuzzed strings with zero violations."""
    with criterion("preprocessing suite (boundaries, URLs, 10k idempotence fuzz)"):
        assert preprocess("x" * 14) is None
        assert preprocess("x" * 15) == "x" * 15
        assert preprocess("x" * 16) == "x" * 16
        assert preprocess('See <a href="https://ex.com">this</a> for organic deals') \
            == "See url for organic deals"
        assert preprocess("Visit www.example.org/promo for organic food") \
            == "Visit url for organic food"

        rng = random.Random(4242)
        atoms = [
            "word", "Dr.", "ä", "ß", "  ", "\t", ".", "!", "?", "…", "<", ">",
            "<a href=\"http://x.y\">", "</a>", "<a>", "www.", "www.site.de/x",
            "https://example.com/a?b=c", "http://", "&amp;", "url", "ww",
            "a" * 20, "",
        ]
        violations = 0
        for _ in range(10_000):
            text = "".join(rng.choice(atoms) for _ in range(rng.randrange(0, 12)))
            once = preprocess(text)
            if once is None:
                continue
            if preprocess(once) != once:
                violations += 1
            if URL_RE.search(once) or ANCHOR_RE.search(once):
                violations += 1
            if len(once) < 15 or once != once.strip() or "  " in once:
                violations += 1
        assert violations == 0


def test_pipeline_determinism(mini_corpus, tmp_path):
    """The full pipeline, run twice with the same seed into fresh directories,
    produces byte-identical report files."""
    with criterion("determinism (two runs -> byte-identical reports)"):
        lexicons = materialize_lexicons(tmp_path / "lex")
        outputs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            cfg = write_pipeline_config(tmp_path / f"{name}.json", mini_corpus,
                                        lexicons, out, k_min=1, k_max=10,
                                        seed=42, ladder=[2, 5, 10])
            run_pipeline(PipelineConfig.from_json(cfg))
            outputs.append(out)
        a, b = outputs
        compared = 0
        for path_a in sorted(a.rglob("*")):
            if path_a.is_dir() or path_a.name in ("manifest.json", ".lock"):
                continue
            rel = path_a.relative_to(a)
            path_b = b / rel
            assert path_b.exists(), f"missing {rel} in second run"
            assert path_a.read_bytes() == path_b.read_bytes(), f"{rel} differs"
            compared += 1
        assert compared >= len(_REPORT_SCHEMAS)


def test_end_to_end_cli(mini_corpus, tmp_path):
    """`xlom run` on the bundled mini-corpus finishes in under 10 seconds and
    emits schema-valid reports (no secondary component involved: the fixture
    generator supplies the embeddings)."""
    with criterion("end-to-end xlom run (<10s, schema-valid reports)"):
        import jsonschema

        from xlom.cli import main

        lexicons = materialize_lexicons(tmp_path / "lex")
        out = tmp_path / "run"
        cfg = write_pipeline_config(tmp_path / "config.json", mini_corpus,
                                    lexicons, out, k_min=1, k_max=10,
                                    seed=42, ladder=[2, 5, 10])
        start = time.perf_counter()
        rc = main(["run", "--config", str(cfg)])
        elapsed = time.perf_counter() - start
        assert rc == 0
        assert elapsed < 10.0, f"took {elapsed:.2f}s"

        reports = {
            "distributions": out / "reports" / "distributions.json",
            "summaries": out / "reports" / "summaries.json",
            "top_words": out / "topics" / "topics.json",
            "sankey": out / "reports" / "sankey.json",
        }
        for name, path in reports.items():
            payload = json.loads(path.read_text("utf-8"))
            jsonschema.validate(payload, _REPORT_SCHEMAS[name])


_NUMBER_OR_NULL = {"type": ["number", "null"]}

_REPORT_SCHEMAS = {
    "distributions": {
        "type": "object",
        "required": ["distributions"],
        "properties": {
            "distributions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["scope_id", "kind", "probs", "garbage_share",
                                 "n_sentences"],
                    "properties": {
                        "scope_id": {"type": "string"},
                        "kind": {"enum": ["article", "comment_section"]},
                        "probs": {
                            "type": "object",
                            "additionalProperties": {"type": "number",
                                                     "minimum": 0, "maximum": 1},
                        },
                        "garbage_share": {"type": "number", "minimum": 0, "maximum": 1},
                        "n_sentences": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
    },
    "summaries": {
        "type": "object",
        "required": ["quantile_method", "summaries"],
        "properties": {
            "quantile_method": {"const": "linear"},
            "summaries": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["scope_id", "topic", "n", "median", "q1", "q3"],
                    "properties": {
                        "scope_id": {"type": "string"},
                        "topic": {"type": "string"},
                        "n": {"type": "integer", "minimum": 0},
                        "median": _NUMBER_OR_NULL,
                        "q1": _NUMBER_OR_NULL,
                        "q3": _NUMBER_OR_NULL,
                    },
                },
            },
        },
    },
    "top_words": {
        "type": "object",
        "required": ["k", "clusters"],
        "properties": {
            "k": {"type": "integer", "minimum": 1},
            "clusters": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["cluster", "label", "garbage", "top_words",
                                 "top_sentences"],
                    "properties": {
                        "cluster": {"type": "integer", "minimum": 0},
                        "label": {"type": ["string", "null"]},
                        "garbage": {"type": "boolean"},
                        "top_words": {
                            "type": "object",
                            "additionalProperties": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["term", "score"],
                                    "properties": {
                                        "term": {"type": "string"},
                                        "score": {"type": "number"},
                                    },
                                },
                            },
                        },
                        "top_sentences": {
                            "type": "object",
                            "additionalProperties": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["sent_id", "cosine"],
                                    "properties": {
                                        "sent_id": {"type": "string"},
                                        "cosine": {"type": "number",
                                                   "minimum": -1, "maximum": 1},
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
    },
    "sankey": {
        "type": "object",
        "required": ["nodes", "links"],
        "properties": {
            "nodes": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["run", "cluster", "label", "garbage"],
                    "properties": {
                        "run": {"type": "string"},
                        "cluster": {"type": "integer", "minimum": 0},
                        "label": {"type": ["string", "null"]},
                        "garbage": {"type": "boolean"},
                    },
                },
            },
            "links": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["source", "target", "count"],
                    "properties": {
                        "source": {"type": "integer", "minimum": 0},
                        "target": {"type": "integer", "minimum": 0},
                        "count": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
    },
}

"""End-to-end pipeline driver: config, run directory, stage manifest.

Stages run in a fixed order (ingest, embed, cluster, topics, sentiment,
aggregate, sankey).  Every stage's inputs are hashed into the manifest; a
stage is skipped when its recorded input signature matches and its outputs
are still intact, so re-running a finished directory does nothing and an
interrupted run resumes where it stopped.  Input files are never mutated.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .analytics import (build_scopes, build_sankey_report, summarize_sentiments,
                        topic_distribution, write_distributions, write_summaries)
from .clustering import ClusteringRun, sweep
from .corpus import TokenizerRules, ingest, load_store, read_documents
from .embeddings import (fetch_embeddings, load_embeddings, read_encoder_tag,
                         write_embeddings)
from .errors import ConfigError, PipelineError, XlomError
from .sentiment import load_lexicon, load_scores, score_corpus, write_scores
from .topics import (GARBAGE_THRESHOLD_LEN, TopicModel, build_topic_model,
                     load_label_map, load_word_file, top_sentences,
                     write_top_sentences_csv, write_top_words_csv)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "embed", "cluster", "topics", "sentiment", "aggregate", "sankey")
DEFAULT_K_LIMIT = 30


@dataclass
class PipelineConfig:
    langs: list[str]
    documents: Path
    out: Path
    provider: str = "file"  # "file" | "http"
    matrix: Optional[Path] = None
    ids: Optional[Path] = None
    endpoint: Optional[str] = None
    batch_size: int = 64
    normalize: bool = True
    k_min: int = 1
    k_max: int = 10
    seed: int = 42
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-4
    n_top_words: int = 10
    n_top_sentences: int = 3
    min_df: int = 3
    stem: bool = True
    labels: Optional[Path] = None
    domain_stopwords: dict[str, Path] = field(default_factory=dict)
    garbage_threshold_len: float = GARBAGE_THRESHOLD_LEN
    lexicons: dict[str, Path] = field(default_factory=dict)
    sankey_ladder: list[int] = field(default_factory=list)
    abbreviations: dict[str, list[str]] = field(default_factory=dict)
    k_limit: int = DEFAULT_K_LIMIT

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        base = Path(path).parent
        try:
            obj = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

        def resolve(p) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        try:
            emb = obj.get("embeddings", {})
            clu = obj.get("clustering", {})
            top = obj.get("topics", {})
            sen = obj.get("sentiment", {})
            san = obj.get("sankey", {})
            cfg = cls(
                langs=list(obj["langs"]),
                documents=resolve(obj["documents"]),
                out=resolve(obj["out"]),
                provider=emb.get("provider", "file"),
                matrix=resolve(emb["matrix"]) if "matrix" in emb else None,
                ids=resolve(emb["ids"]) if "ids" in emb else None,
                endpoint=emb.get("endpoint"),
                batch_size=int(emb.get("batch_size", 64)),
                normalize=bool(emb.get("normalize", True)),
                k_min=int(clu.get("k_min", 1)),
                k_max=int(clu.get("k_max", 10)),
                seed=int(clu.get("seed", 42)),
                n_init=int(clu.get("n_init", 10)),
                max_iter=int(clu.get("max_iter", 300)),
                tol=float(clu.get("tol", 1e-4)),
                n_top_words=int(top.get("top_words", 10)),
                n_top_sentences=int(top.get("top_sentences", 3)),
                min_df=int(top.get("min_df", 3)),
                stem=bool(top.get("stem", True)),
                labels=resolve(top["labels"]) if top.get("labels") else None,
                domain_stopwords={
                    lang: resolve(p)
                    for lang, p in (top.get("domain_stopwords") or {}).items()
                },
                garbage_threshold_len=float(
                    top.get("garbage_threshold_len", GARBAGE_THRESHOLD_LEN)
                ),
                lexicons={lang: resolve(p) for lang, p in (sen.get("lexicons") or {}).items()},
                sankey_ladder=[int(k) for k in (san.get("ladder") or [])],
                abbreviations={
                    lang: list(words)
                    for lang, words in (obj.get("abbreviations") or {}).items()
                },
                k_limit=int(clu.get("k_limit", DEFAULT_K_LIMIT)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config {path}: {exc}") from None
        return cfg

    def validate(self) -> None:
        if not self.langs:
            raise ConfigError("langs must not be empty")
        if not self.documents.exists():
            raise ConfigError(f"documents file not found: {self.documents}")
        if self.provider == "file":
            if self.matrix is None or self.ids is None:
                raise ConfigError("file provider needs embeddings.matrix and embeddings.ids")
            for p in (self.matrix, self.ids):
                if not p.exists():
                    raise ConfigError(f"embedding file not found: {p}")
        elif self.provider == "http":
            if not self.endpoint:
                raise ConfigError("http provider needs embeddings.endpoint")
        else:
            raise ConfigError(f"unknown embedding provider {self.provider!r}")
        if not (1 <= self.k_min <= self.k_max):
            raise ConfigError(f"invalid k range [{self.k_min}, {self.k_max}]")
        if self.k_max > self.k_limit:
            raise ConfigError(
                f"k_max={self.k_max} beyond limit {self.k_limit} (raise clustering.k_limit to allow)"
            )
        if self.labels is not None and not self.labels.exists():
            raise ConfigError(f"label map not found: {self.labels}")
        for lang, p in self.domain_stopwords.items():
            if not p.exists():
                raise ConfigError(f"domain stopword file for {lang} not found: {p}")
        missing = [lang for lang in self.langs if lang not in self.lexicons]
        if missing:
            raise ConfigError(f"no sentiment lexicon configured for: {', '.join(missing)}")
        for lang, p in self.lexicons.items():
            if not p.exists():
                raise ConfigError(f"lexicon for {lang} not found: {p}")
        bad = [k for k in self.sankey_ladder if not (self.k_min <= k <= self.k_max)]
        if bad:
            raise ConfigError(f"sankey ladder entries outside k range: {bad}")
        if len(self.sankey_ladder) == 1:
            raise ConfigError("sankey ladder needs at least two k values (or none)")

    def snapshot(self) -> dict:
        """JSON-safe copy of the full configuration for the manifest."""
        out = {}
        for key, value in self.__dict__.items():
            if isinstance(value, Path):
                out[key] = str(value)
            elif isinstance(value, dict):
                out[key] = {k: str(v) if isinstance(v, Path) else v for k, v in value.items()}
            else:
                out[key] = value
        return out


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sig(files: dict[str, Path], params: dict) -> str:
    payload = {
        "files": {name: _sha256_file(p) for name, p in sorted(files.items())},
        "params": params,
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()


class RunManifest:
    """Stage bookkeeping persisted as manifest.json in the run directory."""

    def __init__(self, path: Path, config_snapshot: dict):
        self.path = path
        if path.exists():
            self.data = json.loads(path.read_text("utf-8"))
        else:
            self.data = {"tool_version": __version__, "encoder_tag": None,
                         "config": config_snapshot, "stages": {}}
        self.data["tool_version"] = __version__
        self.data["config"] = config_snapshot

    def stage_fresh(self, name: str, input_sig: str, out_dir: Path) -> bool:
        record = self.data["stages"].get(name)
        if not record or record.get("input_sig") != input_sig:
            return False
        for rel, digest in record.get("outputs", {}).items():
            p = out_dir / rel
            if not p.exists() or _sha256_file(p) != digest:
                return False
        return True

    def record_stage(self, name: str, input_sig: str, out_dir: Path,
                     outputs: list[Path]) -> None:
        self.data["stages"][name] = {
            "input_sig": input_sig,
            "outputs": {
                str(p.relative_to(out_dir)): _sha256_file(p) for p in outputs
            },
        }
        self.write()

    def write(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        os.replace(tmp, self.path)


@contextmanager
def _run_lock(out_dir: Path):
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineError(
            f"run directory is locked by {lock}; another pipeline is active "
            "(delete the file if it is stale)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


@dataclass
class PipelineResult:
    manifest: RunManifest
    executed: list[str]
    out_dir: Path


def run_pipeline(config: PipelineConfig, force: bool = False) -> PipelineResult:
    """Execute all stages, skipping the ones whose inputs are unchanged."""
    config.validate()
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out / "manifest.json", config.snapshot())
    executed: list[str] = []

    with _run_lock(out):
        for name, runner in _stage_runners(config).items():
            try:
                input_sig, outputs = runner["signature"](), runner["outputs"]()
                if not force and manifest.stage_fresh(name, input_sig, out):
                    logger.info("stage %s: inputs unchanged, skipping", name)
                    continue
                logger.info("stage %s: running", name)
                runner["run"]()
                manifest.record_stage(name, input_sig, out, runner["outputs"]())
                executed.append(name)
            except PipelineError:
                raise
            except (XlomError, OSError) as exc:
                raise PipelineError(f"stage {name}: {exc}") from exc
        matrix_path = out / "embeddings" / "matrix.emb"
        if matrix_path.exists():
            manifest.data["encoder_tag"] = read_encoder_tag(matrix_path)
    manifest.write()
    return PipelineResult(manifest=manifest, executed=executed, out_dir=out)


def _stage_runners(config: PipelineConfig) -> dict[str, dict[str, Callable]]:
    """Stage table: each entry computes its input signature, output list, and body.

    A stage's signature covers its external input files, the outputs of the
    stages it consumes, and the config parameters it reads, so an upstream
    change re-runs everything downstream.
    """
    out = config.out
    ingest_dir = out / "ingest"
    emb_dir = out / "embeddings"
    runs_dir = out / "runs"
    topics_dir = out / "topics"
    senti_dir = out / "sentiment"
    reports_dir = out / "reports"

    store_path = ingest_dir / "store.jsonl"
    stats_path = ingest_dir / "stats.json"
    matrix_path = emb_dir / "matrix.emb"
    ids_path = emb_dir / "matrix.ids"
    curves_path = runs_dir / "curves.json"
    topics_path = topics_dir / "topics.json"
    scores_path = senti_dir / "sentiment.jsonl"

    def selected_k() -> int:
        return int(json.loads(curves_path.read_text("utf-8"))["selected_k"])

    def selected_run() -> ClusteringRun:
        return ClusteringRun.load(runs_dir / f"k{selected_k():02d}")

    def run_files() -> list[Path]:
        files = [curves_path]
        for k in range(config.k_min, config.k_max + 1):
            d = runs_dir / f"k{k:02d}"
            files += [d / "run.json", d / "centroids.emb", d / "centroids.ids",
                      d / "assignments.jsonl"]
        return files

    # --- stage bodies -----------------------------------------------------

    def do_ingest():
        rules = TokenizerRules.bundled(config.langs, config.abbreviations)
        ingest(config.documents, ingest_dir, config.langs, rules)

    def do_embed():
        emb_dir.mkdir(parents=True, exist_ok=True)
        store = load_store(store_path)
        ids = [s.sent_id for s in store]
        if config.provider == "file":
            matrix = load_embeddings(config.matrix, config.ids, normalize=config.normalize)
            matrix = matrix.subset(ids)
        else:
            matrix = fetch_embeddings(config.endpoint, store, config.batch_size)
            if config.normalize:
                matrix.normalize()
        write_embeddings(matrix, matrix_path, ids_path)

    def do_cluster():
        matrix = load_embeddings(matrix_path, ids_path, normalize=False)
        result = sweep(
            matrix,
            k_min=config.k_min, k_max=config.k_max, seed=config.seed,
            n_init=config.n_init, max_iter=config.max_iter, tol=config.tol,
            metadata={"normalized": matrix.normalized, "encoder_tag": matrix.encoder_tag},
        )
        result.save(runs_dir)

    def do_topics():
        topics_dir.mkdir(parents=True, exist_ok=True)
        store = load_store(store_path)
        matrix = load_embeddings(matrix_path, ids_path, normalize=False)
        label_map = load_label_map(config.labels) if config.labels else None
        domain = {
            lang: load_word_file(p) for lang, p in config.domain_stopwords.items()
        }
        model = build_topic_model(
            store, selected_run(), matrix,
            langs=config.langs,
            n_top_words=config.n_top_words,
            n_top_sentences=config.n_top_sentences,
            min_df=config.min_df,
            stem_tokens=config.stem,
            domain_stopwords=domain,
            garbage_threshold_len=config.garbage_threshold_len,
            label_map=label_map,
        )
        model.save(topics_path)
        write_top_words_csv(model, topics_dir / "top_words.csv")
        write_top_sentences_csv(model, topics_dir / "top_sentences.csv")

    def do_sentiment():
        senti_dir.mkdir(parents=True, exist_ok=True)
        store = load_store(store_path)
        lexicons = {lang: load_lexicon(p) for lang, p in config.lexicons.items()}
        write_scores(scores_path, score_corpus(store, lexicons))

    def do_aggregate():
        reports_dir.mkdir(parents=True, exist_ok=True)
        docs, _, _ = read_documents(config.documents, config.langs)
        store = load_store(store_path)
        run = selected_run()
        model = TopicModel.load(topics_path)
        scores = load_scores(scores_path)
        scopes = build_scopes(docs)
        assignments = run.assignments
        distributions = [
            topic_distribution(scope, assignments, model, store) for scope in scopes
        ]
        summaries = summarize_sentiments(scopes, store, assignments, model, scores)
        write_distributions(distributions, reports_dir / "distributions.json",
                            reports_dir / "distributions.csv")
        write_summaries(summaries, reports_dir / "summaries.json",
                        reports_dir / "summaries.csv")

    def do_sankey():
        reports_dir.mkdir(parents=True, exist_ok=True)
        ladder = config.sankey_ladder or _default_ladder(config.k_min, config.k_max)
        if len(ladder) < 2:
            (reports_dir / "sankey.json").write_text(
                json.dumps({"nodes": [], "links": [], "dropped_sentences": 0}) + "\n",
                encoding="utf-8",
            )
            return
        store = load_store(store_path)
        matrix = load_embeddings(matrix_path, ids_path, normalize=False)
        model = TopicModel.load(topics_path)
        sel = selected_k()
        runs = [ClusteringRun.load(runs_dir / f"k{k:02d}") for k in ladder]
        by_id = {s.sent_id: s for s in store}
        labels: dict[int, dict[int, Optional[str]]] = {}
        garbage: dict[int, dict[int, bool]] = {}
        for run in runs:
            if run.k == sel:
                labels[run.k] = {c.cluster: c.label for c in model.clusters}
                garbage[run.k] = {c.cluster: c.garbage for c in model.clusters}
            else:
                flags = {}
                for c in range(run.k):
                    ids = [sid for sid, cl in zip(run.ids, run.labels) if cl == c]
                    pooled = top_sentences(matrix, run.centroids[c], ids, m=10)
                    mean_len = (
                        sum(by_id[sid].char_len for sid, _ in pooled) / len(pooled)
                        if pooled else 0.0
                    )
                    flags[c] = mean_len < config.garbage_threshold_len
                labels[run.k] = {c: None for c in range(run.k)}
                garbage[run.k] = flags
        report = build_sankey_report(runs, labels, garbage)
        (reports_dir / "sankey.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    # --- signatures and output sets ---------------------------------------

    def topics_params() -> dict:
        return {
            "n_top_words": config.n_top_words,
            "n_top_sentences": config.n_top_sentences,
            "min_df": config.min_df,
            "stem": config.stem,
            "garbage_threshold_len": config.garbage_threshold_len,
            "langs": config.langs,
        }

    stages = {
        "ingest": {
            "signature": lambda: _sig(
                {"documents": config.documents},
                {"langs": config.langs, "abbreviations": config.abbreviations},
            ),
            "outputs": lambda: [store_path, stats_path],
            "run": do_ingest,
        },
        "embed": {
            "signature": lambda: _sig(
                {
                    "store": store_path,
                    **({"matrix": config.matrix, "ids": config.ids}
                       if config.provider == "file" else {}),
                },
                {"provider": config.provider, "endpoint": config.endpoint,
                 "batch_size": config.batch_size, "normalize": config.normalize},
            ),
            "outputs": lambda: [matrix_path, ids_path],
            "run": do_embed,
        },
        "cluster": {
            "signature": lambda: _sig(
                {"matrix": matrix_path, "ids": ids_path},
                {"k_min": config.k_min, "k_max": config.k_max, "seed": config.seed,
                 "n_init": config.n_init, "max_iter": config.max_iter, "tol": config.tol},
            ),
            "outputs": run_files,
            "run": do_cluster,
        },
        "topics": {
            "signature": lambda: _sig(
                {
                    "store": store_path, "matrix": matrix_path, "curves": curves_path,
                    **({"labels": config.labels} if config.labels else {}),
                    **{f"domain_{lang}": p for lang, p in config.domain_stopwords.items()},
                },
                topics_params(),
            ),
            "outputs": lambda: [topics_path, topics_dir / "top_words.csv",
                                topics_dir / "top_sentences.csv"],
            "run": do_topics,
        },
        "sentiment": {
            "signature": lambda: _sig(
                {"store": store_path,
                 **{f"lexicon_{lang}": p for lang, p in config.lexicons.items()}},
                {},
            ),
            "outputs": lambda: [scores_path],
            "run": do_sentiment,
        },
        "aggregate": {
            "signature": lambda: _sig(
                {"documents": config.documents, "store": store_path,
                 "curves": curves_path, "topics": topics_path, "scores": scores_path},
                {},
            ),
            "outputs": lambda: [reports_dir / "distributions.json",
                                reports_dir / "distributions.csv",
                                reports_dir / "summaries.json",
                                reports_dir / "summaries.csv"],
            "run": do_aggregate,
        },
        "sankey": {
            "signature": lambda: _sig(
                {"curves": curves_path, "topics": topics_path, "store": store_path},
                {"ladder": config.sankey_ladder,
                 "garbage_threshold_len": config.garbage_threshold_len},
            ),
            "outputs": lambda: [reports_dir / "sankey.json"],
            "run": do_sankey,
        },
    }
    return stages


def _default_ladder(k_min: int, k_max: int) -> list[int]:
    """Roughly geometric ladder inside the sweep range, e.g. 5, 10, 15, 20."""
    span = [k for k in (5, 10, 15, 20) if k_min <= k <= k_max]
    if len(span) >= 2:
        return span
    if k_max > k_min:
        return [k_min, k_max]
    return []

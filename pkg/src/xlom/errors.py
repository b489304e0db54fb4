"""Exception hierarchy shared by all pipeline stages."""


class XlomError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(XlomError):
    """Invalid document, sentence, or store content."""


class IngestError(XlomError):
    """Ingestion aborted (e.g. too many malformed input lines)."""


class EmbeddingFormatError(XlomError):
    """Embedding file does not conform to the EMB1 layout."""


class EmbeddingProviderError(XlomError):
    """HTTP embedding provider failed or returned inconsistent data."""


class ClusteringError(XlomError):
    """Invalid clustering request or degenerate input."""


class TopicsError(XlomError):
    """Topic-model construction failed (empty scope, bad label map ...)."""


class SentimentError(XlomError):
    """Missing or malformed sentiment lexicon."""


class AnalyticsError(XlomError):
    """Aggregation over an invalid scope or incompatible runs."""


class ConfigError(XlomError):
    """Pipeline configuration file is invalid."""


class PipelineError(XlomError):
    """A pipeline stage failed; the message names the stage."""

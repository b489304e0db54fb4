"""Cross-lingual opinion mining over a shared sentence-embedding space.

Sentences from every language are clustered jointly with K-means; an AIC
sweep picks the cluster count; clarity-ranked terms and centroid-nearest
sentences describe each topic per language; lexicon polarity scores feed
per-document sentiment summaries; and cross-k flows show how topics split
as the cluster count grows.
"""

__version__ = "0.1.0"

from .errors import XlomError  # noqa: F401

"""Batch embedding exporter for the xlom pipeline.

Reads a sentence store (JSON lines), encodes every sentence with a
configurable multilingual encoder, and writes the EMB1 matrix + ids files
the pipeline loads.  Can also serve the same encoder over the POST /embed
HTTP contract for the pipeline's http provider.

This package talks to the pipeline only through those file and wire
formats; it never imports pipeline internals.
"""

__version__ = "0.1.0"

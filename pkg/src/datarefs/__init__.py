"""Dataset-reference discovery pipeline: catalog search, full-text
acquisition, parsing, candidate extraction, catalog linkage, reporting,
and a human review loop."""

__version__ = "0.1.0"

"""Multi-vector dense retrieval, BM25, pretraining-pair and template question generation, and retrieval evaluation."""

__version__ = "0.1.0"

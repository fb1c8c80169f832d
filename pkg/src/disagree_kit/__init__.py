"""Toolkit for ordinal word-in-context relatedness labels and
annotator-disagreement scores over precomputed contextual embeddings."""

__version__ = "0.1.0"

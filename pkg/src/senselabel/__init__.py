"""Annotate unlabeled accelerometer windows through contrastive embeddings and few-shot retrieval prompts."""

__version__ = "0.1.0"

"""Unified NLU tooling: every supported task is expressed as atomic
classification or extraction over candidate labels, with fixed prompts, a
parseable completion grammar, corpus augmentation/balancing, pluggable
generation backends, and combined Micro-F1 + ROUGE scoring."""

__version__ = "0.1.0"

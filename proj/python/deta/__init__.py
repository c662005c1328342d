"""Noise-robust few-shot adaptation on synthetic patch-feature episodes.

Configs, episodes and models are plain dicts with the same layout as the
JSON files the ``deta`` command line tool reads and writes.
"""

import json

from . import _core
from ._core import DetaError, accuracy_ci, auroc, fpr_at_95_tpr, friedman

__all__ = [
    "DetaError",
    "accuracy_ci",
    "adapt",
    "auroc",
    "bench",
    "evaluate",
    "fpr_at_95_tpr",
    "friedman",
    "generate_episode",
]


def _dump(value):
    return "" if value is None else json.dumps(value)


def generate_episode(config=None):
    """Episode dict from a generator config (keys C, K, d, H, W, ...)."""
    return json.loads(_core.generate_episode(_dump(config)))


def adapt(episode, config=None):
    """Adapt a projection head on one episode; returns the model dict."""
    return json.loads(_core.adapt(json.dumps(episode), _dump(config)))


def evaluate(model, episode, head="localncc", temperature=1.0):
    """Per-query results: query_id, pred, true, noise, score."""
    text = _core.evaluate(json.dumps(model), json.dumps(episode), head, temperature)
    return [json.loads(line) for line in text.splitlines() if line]


def bench(config=None):
    """Run a noise-ratio sweep and return its summary dict."""
    return json.loads(_core.bench_summary(_dump(config)))

# Copyright (c) 2026 The toxprompt Authors
# SPDX-License-Identifier: Apache-2.0
"""Prompt tuning for toxicity tasks: metrics, span alignment and run drivers."""

from ._core import (
    ConfigError,
    DataError,
    Error,
    ModelError,
    SchemaError,
    ScorerError,
    apply_threshold,
    best_threshold,
    clf_metrics,
    config_digest,
    corpus_bleu,
    evaluate,
    intervals_to_offsets,
    mann_whitney_u,
    paired_t_test,
    perturb,
    remove_spans,
    resolve_config,
    run,
    significance_test,
    span_f1,
    span_offsets_to_intervals,
    subtract_spans,
    synthetic_insults,
    trim_spans,
    validate_report,
)


def _stringify(config):
    return {str(k): str(v).lower() if isinstance(v, bool) else str(v) for k, v in config.items()}


def tune(**config):
    """run() with keyword config, e.g. tune(task=1, **{"tune.steps": 50})."""
    return run(_stringify(config))


__all__ = [name for name in dir() if not name.startswith("_")]

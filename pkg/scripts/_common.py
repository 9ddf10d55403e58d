"""Shared helpers for the experiment scripts."""

import json


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` overrides; values are parsed as JSON when possible."""
    kw = {}
    for pair in pairs:
        key, _, raw = pair.partition("=")
        try:
            kw[key] = json.loads(raw)
        except json.JSONDecodeError:
            kw[key] = raw
    return cfg.replace(**kw) if kw else cfg

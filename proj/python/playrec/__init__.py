"""Playtime-guided recommendation pipeline."""

import json

from ._playrec import (
    DataError,
    DomainError,
    beta_cdf,
    beta_pdf,
    default_config,
    fit_mixture,
    ranking_metrics,
)
from ._playrec import run_command as _run_command

__all__ = [
    "DataError",
    "DomainError",
    "beta_cdf",
    "beta_pdf",
    "default_config",
    "fit_mixture",
    "ranking_metrics",
    "run",
]


def run(command, out, config=None, alphas=(), qs=(), seeds=()):
    """Run a pipeline command. `config` is a dict with module sections.

    Returns the parsed summary written to <out>/<command>_summary.json.
    """
    text = _run_command(command, str(out), json.dumps(config or {}),
                        list(alphas), list(qs), list(seeds))
    return json.loads(text)

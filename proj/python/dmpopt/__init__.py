"""DMP-based spreading optimization (SIR with seeding and vaccination controls)."""

import json
import os

from ._core import (
    Network,
    NumericalError,
    TimeoutError,
    allocate,
    exact_marginals,
    mitigate,
    monte_carlo,
    optimize_continuous,
    rank,
    run_dmp,
)
from . import _core

__all__ = [
    "Network",
    "NumericalError",
    "TimeoutError",
    "allocate",
    "exact_marginals",
    "mitigate",
    "monte_carlo",
    "optimize",
    "optimize_continuous",
    "rank",
    "run_dmp",
]


def optimize(problem, max_iters=None, restarts=None, time_limit=0.0):
    """Run the forward-backward optimizer.

    `problem` is a dict in the CLI's problem-file schema, a JSON string, or a
    path to such a file (a relative "graph" is then resolved next to it).
    The result is the report dict plus "nu"/"mu" arrays of shape (T, N).
    """
    base = ""
    if isinstance(problem, dict):
        text = json.dumps(problem)
    elif isinstance(problem, os.PathLike) or (isinstance(problem, str) and not problem.lstrip().startswith("{")):
        path = os.fspath(problem)
        with open(path) as f:
            text = f.read()
        base = os.path.dirname(os.path.abspath(path))
    else:
        text = problem
    return _core.optimize_json(text, base, max_iters=max_iters, restarts=restarts, time_limit=time_limit)

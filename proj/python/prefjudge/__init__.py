"""Python bindings for the prefjudge core."""

import json

from . import _core
from ._core import (
    DataIntegrityError,
    InvalidInput,
    bt_loss,
    grpo_advantages,
    length_compatible,
    majority_accuracy,
    word_count,
)

__all__ = [
    "DataIntegrityError",
    "InvalidInput",
    "base_spec",
    "bt_loss",
    "build_pairs",
    "canonical_dump",
    "eval_simulated",
    "grpo_advantages",
    "length_compatible",
    "majority_accuracy",
    "run_cli",
    "synthetic_pairs",
    "word_count",
]


def run_cli(*args):
    """Runs the command line in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


def base_spec(duration_seconds):
    return json.loads(_core.base_spec_json(float(duration_seconds)))


def synthetic_pairs(n, seed=0):
    return json.loads(_core.synthetic_pairs_json(n, seed))


def build_pairs(samples, rollouts, tau=0.25, min_words=5, seed=0):
    """Returns (pairs, discard_report) for lists of sample and rollout dicts."""
    pairs, report = _core.build_pairs_json(json.dumps(samples), json.dumps(rollouts), tau, min_words, seed)
    return json.loads(pairs), json.loads(report)


def eval_simulated(pairs, judge="order-invariant", p=0.75, n_trials=8, order_policy="random", seed=0):
    return json.loads(_core.eval_simulated_json(json.dumps(pairs), judge, p, n_trials, order_policy, seed))


def canonical_dump(value):
    return _core.canonical_dump_json(json.dumps(value))

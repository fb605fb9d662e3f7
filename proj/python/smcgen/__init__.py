"""Python front end for the smcgen engine.

Specs, results and reports are plain dicts mirroring the JSON the
command-line tool reads and writes.
"""

import json

from . import _core
from ._core import ConfigError, SmcgenError, ess, instance_names, method_names, recognize

__all__ = [
    "ConfigError",
    "SmcgenError",
    "bench",
    "compare",
    "enumerate_instance",
    "ess",
    "instance_names",
    "method_names",
    "quality",
    "recognize",
    "run",
    "spec_hash",
    "validate_spec",
    "welch",
]


def validate_spec(spec):
    """Return the canonical form of a run spec; raises ConfigError."""
    return json.loads(_core.validate_spec_json(json.dumps(spec)))


def spec_hash(spec):
    return _core.spec_hash(json.dumps(spec))


def run(spec):
    """Run the spec's method once per seed; one result dict per seed."""
    return json.loads(_core.run_json(json.dumps(spec)))


def enumerate_instance(name, node_cap=2_000_000):
    return json.loads(_core.enumerate_json(name, node_cap))


def quality(spec):
    """Returns (csv_text, summary dict)."""
    csv, summary = _core.quality_json(json.dumps(spec))
    return csv, json.loads(summary)


def compare(csv_text):
    return json.loads(_core.compare_json(csv_text))


def welch(a, b):
    return json.loads(_core.welch(list(a), list(b)))


def bench(vocab_size=1000, particles=10, runs=2):
    return json.loads(_core.bench_json(vocab_size, particles, runs))

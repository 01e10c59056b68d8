"""Geometry solution-program generation (C++ core with thin Python wrappers)."""

import json

from . import _core
from ._core import GeoprogError, run_cli

__all__ = ["GeoprogError", "Model", "default_registry", "execute_cal", "run_cli", "synth", "train"]


def default_registry():
    """The built-in DSL registry document."""
    return json.loads(_core.default_registry())


def synth(n, seed=0, cal_fraction=0.5):
    """Synthetic records as a list of dicts."""
    text = _core.synth(n, seed, cal_fraction)
    return [json.loads(line) for line in text.splitlines() if line]


def execute_cal(record):
    """Value of a cal record's program on its own numbers."""
    return _core.execute_cal(json.dumps(record))


class Model:
    """A trained model; wraps the native state."""

    def __init__(self, native):
        self._native = native

    @classmethod
    def load(cls, path):
        return cls(_core.Model.load(str(path)))

    def save(self, path):
        self._native.save(str(path))

    @property
    def config(self):
        return json.loads(self._native.config)

    @property
    def parameter_count(self):
        return self._native.parameter_count

    def predict(self, record, beam=10, type=None, score_rule="sum_log_prob"):
        return json.loads(self._native.predict(json.dumps(record), beam, type, score_rule))

    def greedy(self, record, type=None):
        return json.loads(self._native.greedy(json.dumps(record), type))

    def evaluate(self, data_path, k=1, beam=1):
        return json.loads(self._native.evaluate(str(data_path), k, beam))


def train(data_path, config=None, seed=None):
    """Trains on a JSONL dataset; `config` uses the keys of the train --config file."""
    native = _core.train(str(data_path), json.dumps(config or {}), seed)
    return Model(native)

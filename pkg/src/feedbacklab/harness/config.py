"""Experiment configuration, seed derivation, worker pool and result records.

Config files are flat ``key = value`` lines. ``#`` starts a comment, blank
lines are ignored, keys are case-sensitive and may repeat (the last one
wins). Values are read as int, then float, then ``true``/``false``, and
otherwise kept as strings. Flag overrides use the same ``key=value`` form.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError

THREADS_ENV = "FEEDBACKLAB_THREADS"

KINDS = {
    "capacity": ("snr",),
    "su-bounds": ("P", "eps"),
    "su-sk": ("n", "M", "P"),
    "su-power-control": ("n", "P", "eps"),
    "su-truncation": ("n", "M", "P", "eps"),
    "mac-region": ("P1", "P2", "eps"),
    "mac-ozarow": ("n", "P1", "P2", "eps"),
}
SIMULATED = {"su-sk", "su-power-control", "su-truncation", "mac-ozarow"}


def parse_value(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def parse_assignments(lines) -> dict:
    out = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {num}: expected key = value, got {raw.strip()!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ParameterError(f"line {num}: empty key")
        out[key] = parse_value(val)
    return out


def scenario_seed(master: int, scenario: str) -> int:
    """Stable 63-bit seed for ``scenario`` under ``master``."""
    h = hashlib.blake2b(f"{int(master)}:{scenario}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def thread_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return n


@contextmanager
def worker_pool(threads: int | None = None):
    """Thread pool sized by ``threads`` or the environment cap; ``None`` when single-threaded."""
    n = thread_count() if threads is None else threads
    if n <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=n) as pool:
        yield pool


@dataclass
class ExperimentConfig:
    scenario: str
    kind: str
    params: dict = field(default_factory=dict)
    trials: int = 10000
    seed: int = 0
    outputs: dict = field(default_factory=dict)
    tolerance: float = 3.0

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind is None:
            raise ParameterError("config needs a 'kind'")
        scenario = str(data.pop("scenario", kind))
        trials = data.pop("trials", 10000)
        seed = data.pop("seed", 0)
        tol = data.pop("tolerance", 3.0)
        outputs = {k: data.pop(k) for k in list(data) if k in ("csv", "json")}
        cfg = cls(scenario, str(kind), data, trials, seed, outputs, tol)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides=()) -> "ExperimentConfig":
        with open(path) as fh:
            data = parse_assignments(fh)
        data.update(parse_assignments(overrides))
        return cls.from_mapping(data)

    def validate(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown kind {self.kind!r}; choose from {sorted(KINDS)}")
        missing = [k for k in KINDS[self.kind] if k not in self.params]
        if missing:
            raise ParameterError(f"{self.scenario}: missing parameters {missing}")
        if self.kind in SIMULATED and (not isinstance(self.trials, int) or self.trials < 1):
            raise ParameterError(f"{self.scenario}: trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ParameterError(f"{self.scenario}: seed must be a nonnegative integer")
        if not self.tolerance > 0:
            raise ParameterError(f"{self.scenario}: tolerance must be positive")
        for key in ("n", "M", "L", "grid"):
            v = self.params.get(key)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ParameterError(f"{self.scenario}: {key} must be a positive integer, got {v!r}")
        for key in ("P", "P1", "P2", "snr"):
            v = self.params.get(key)
            if v is not None and not (isinstance(v, (int, float)) and v >= 0 and math.isfinite(v)):
                raise ParameterError(f"{self.scenario}: {key} must be a nonnegative number, got {v!r}")
        eps = self.params.get("eps")
        if eps is not None and not (isinstance(eps, (int, float)) and 0 <= eps < 1):
            raise ParameterError(f"{self.scenario}: eps must lie in [0, 1), got {eps!r}")

    @property
    def stream_seed(self) -> int:
        return scenario_seed(self.seed, self.scenario)


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        out["__type__"] = type(obj).__name__
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, int) and obj.bit_length() > 63:
        return {"__bigint__": str(obj)}
    return obj


def from_jsonable(obj):
    if isinstance(obj, dict):
        if "__bigint__" in obj:
            return int(obj["__bigint__"])
        return {k: from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [from_jsonable(v) for v in obj]
    if obj in ("nan", "inf", "-inf"):
        return float(obj)
    return obj


@dataclass
class ResultRecord:
    scenario: str
    params: dict
    metrics: dict
    passed: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "params": to_jsonable(self.params),
                "metrics": to_jsonable(self.metrics), "passed": to_jsonable(self.passed),
                "wall_time": self.wall_time}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ResultRecord":
        d = json.loads(text)
        return cls(d["scenario"], from_jsonable(d["params"]), from_jsonable(d["metrics"]),
                   from_jsonable(d["passed"]), d["wall_time"])

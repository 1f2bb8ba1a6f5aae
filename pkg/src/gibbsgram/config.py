"""Strict TOML run configuration.

Unknown sections or keys are rejected with the offending line number, and
:meth:`RunConfig.resolved` echoes every default so manifests record the
full parameter set.
"""
import re
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import NoiseSpec, build_expression, build_fhn, build_linear
from .errors import ConfigurationError
from .experiments import T_HIGH, T_LOW, FhnExperimentConfig
from .sde import SnapshotSchedule

REQUIRED = object()

MODEL_KEYS = {
    "linear": {"A", "B", "x0"},
    "fhn": {"p", "coupling", "input_pattern", "x0"},
    "expression": {"drift", "gain", "x0"},
}

SCHEMA = {
    "model": {"kind": REQUIRED, "label": None, "A": None, "B": None, "x0": None, "p": None,
              "coupling": None, "input_pattern": None, "drift": None, "gain": None},
    "noise": {"temperature": REQUIRED, "seed": 0, "paths": 1},
    "schedule": {"dt": REQUIRED, "times": None, "start": None, "step": None, "stop": None},
    "gramian": {"time": None, "reference": "origin", "streaming": False, "snapshots": None},
    "reduce": {"k": REQUIRED},
    "oracle": {"tau": REQUIRED, "bounds": REQUIRED, "points": REQUIRED, "bins": 40,
               "max_l1": 0.05, "max_gramian_rel_error": 0.05},
    "validate_linear": {"tau": REQUIRED, "replicates": 10, "tolerance": 0.05},
    "repro_fhn": {"temperature": REQUIRED, "seed": 0, "paths": 1000, "dt": 0.01,
                  "start": 0.1, "step": 0.1, "stop": 1000.0, "p": 4,
                  "couplings": [[1, 2, 0.1], [3, 4, 0.1], [2, 3, 0.005]],
                  "x0": [-1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, -2.0], "k": 2},
}


class RunConfig:
    """Parsed configuration file."""

    def __init__(self, data, text="", path=None):
        self.data = data
        self.text = text
        self.path = Path(path) if path is not None else None
        self._validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.loads(text, path)

    @classmethod
    def loads(cls, text, path=None):
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config syntax error: {exc}") from None
        return cls(data, text, path)

    def line_of(self, section, key=None):
        current = None
        for no, line in enumerate(self.text.splitlines(), start=1):
            stripped = line.strip()
            m = re.match(r"^\[\s*([^\]]+?)\s*\]", stripped)
            if m:
                current = m.group(1)
                if key is None and current == section:
                    return no
                continue
            if key is not None and current == section and re.match(
                    rf"^\"?{re.escape(key)}\"?\s*=", stripped):
                return no
        return None

    def where(self, section, key=None):
        line = self.line_of(section, key)
        name = section if key is None else f"{section}.{key}"
        return f"{name} (line {line})" if line else name

    def _validate(self):
        for section, body in self.data.items():
            if section not in SCHEMA:
                raise ConfigurationError(f"unknown section {self.where(section)}")
            if not isinstance(body, dict):
                raise ConfigurationError(f"{self.where(section)} must be a table")
            for key in body:
                if key not in SCHEMA[section]:
                    raise ConfigurationError(f"unknown key {self.where(section, key)}")
        model = self.data.get("model")
        if model is not None:
            kind = model.get("kind")
            if kind not in MODEL_KEYS:
                raise ConfigurationError(
                    f"{self.where('model', 'kind')} must be one of {sorted(MODEL_KEYS)}")
            for key in model:
                if key not in MODEL_KEYS[kind] | {"kind", "label"}:
                    raise ConfigurationError(
                        f"key {self.where('model', key)} is not valid for kind {kind!r}")

    def has(self, section):
        return section in self.data

    def section(self, name):
        if name not in self.data:
            raise ConfigurationError(f"missing section [{name}]")
        out = {}
        for key, default in SCHEMA[name].items():
            if key in self.data[name]:
                out[key] = self.data[name][key]
            elif default is REQUIRED:
                raise ConfigurationError(f"missing required key {name}.{key}")
            else:
                out[key] = default
        return out

    def resolved(self):
        return {name: self.section(name) for name in self.data}

    def _context(self, section, key, fn, *args):
        try:
            return fn(*args)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{self.where(section, key)}: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{self.where(section, key)}: {exc}") from None

    def model(self):
        m = self.section("model")
        kind = m["kind"]
        label = m["label"] or kind

        def need(key):
            if m[key] is None:
                raise ConfigurationError(f"missing required key {self.where('model', key)} for kind {kind!r}")
            return m[key]

        if kind == "linear":
            return self._context("model", "A", build_linear, need("A"), need("B"), need("x0"), label)
        if kind == "fhn":
            return self._context("model", "coupling", build_fhn, need("p"), need("coupling"),
                                 m["input_pattern"], m["x0"], label)
        return self._context("model", "drift", build_expression, need("drift"), need("gain"),
                             need("x0"), label)

    def noise(self, seed=None):
        s = self.section("noise")
        seed = s["seed"] if seed is None else seed
        return self._context("noise", "temperature", NoiseSpec, s["temperature"], seed, s["paths"])

    def schedule(self, times=None):
        s = self.section("schedule")
        if times is not None:
            return self._context("schedule", "dt", SnapshotSchedule.from_times, times, s["dt"])
        if s["times"] is not None:
            return self._context("schedule", "times", SnapshotSchedule.from_times, s["times"], s["dt"])
        if None in (s["start"], s["step"], s["stop"]):
            raise ConfigurationError(
                f"{self.where('schedule')} needs either times or start/step/stop")
        return self._context("schedule", "start", SnapshotSchedule.from_range,
                             s["start"], s["step"], s["stop"], s["dt"])

    def fhn_experiment(self, seed=None):
        s = self.section("repro_fhn")
        T = s["temperature"]
        if isinstance(T, str):
            named = {"low": T_LOW, "high": T_HIGH}
            if T not in named:
                raise ConfigurationError(
                    f"{self.where('repro_fhn', 'temperature')} must be a number, 'low' or 'high'")
            T = named[T]
        cfg = FhnExperimentConfig(
            temperature=float(T), seed=int(s["seed"] if seed is None else seed),
            path_count=int(s["paths"]), dt=float(s["dt"]), t_start=float(s["start"]),
            t_step=float(s["step"]), t_stop=float(s["stop"]), p=int(s["p"]),
            couplings=tuple((int(i), int(j), float(v)) for i, j, v in s["couplings"]),
            x0=tuple(float(v) for v in s["x0"]), k=int(s["k"]))
        self._context("repro_fhn", "couplings", cfg.model)
        self._context("repro_fhn", "temperature", cfg.noise)
        self._context("repro_fhn", "start", cfg.schedule)
        return cfg

    def resolve_path(self, value):
        p = Path(value)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p

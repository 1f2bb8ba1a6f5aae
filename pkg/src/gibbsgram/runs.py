"""Run directories: JSON/CSV outputs plus a manifest of content hashes."""
import hashlib
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_json(obj):
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def versions():
    return {"gibbsgram": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_directory(out, experiment, seed):
    path = Path(out) / f"{experiment}-seed{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(directory, experiment, seed, config, files):
    """Write ``manifest.json`` listing every output with its SHA-256."""
    directory = Path(directory)
    entries = []
    for name in sorted(files):
        p = directory / name
        entries.append({"name": name, "sha256": sha256_file(p), "bytes": p.stat().st_size})
    manifest = {
        "experiment": experiment,
        "seed": seed,
        "config": config,
        "config_sha256": sha256_json(config),
        "versions": versions(),
        "files": entries,
    }
    path = directory / "manifest.json"
    dump_json(manifest, path)
    return path

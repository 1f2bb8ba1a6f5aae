"""Euler-Maruyama ensembles of the noise-driven dynamics.

Each path ``k`` evolves as::

    x <- x + (f(x) + g(x) u(t, x)) dt + g(x) sqrt(T dt) w

with ``w`` drawn from a Philox stream keyed by ``(seed, k)``.  Paths are
integrated in lockstep batches, every operation is elementwise per path,
so splitting the ensemble over any number of workers reproduces the
serial result bit for bit.
"""
import csv
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._numerics import matvec
from .dynamics import NoiseSpec
from .errors import ConfigurationError, DivergenceError, TimeLookupError

DIVERGENCE_LIMIT = 1e6
NOISE_BUDGET = 1 << 24  # doubles of pre-drawn noise per worker
SNAPSHOT_MAGIC = b"GKSN1"


@dataclass(frozen=True)
class SnapshotSchedule:
    """Snapshot times, all integer multiples of the step ``dt``.

    Use :meth:`from_times` or :meth:`from_range`; they snap each time to
    the nearest step and record the largest relative adjustment in
    ``max_snap``.
    """

    steps: np.ndarray
    dt: float
    max_snap: float = 0.0

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        if steps.ndim != 1 or steps.size == 0:
            raise ConfigurationError("schedule needs at least one snapshot time")
        if steps[0] < 1 or np.any(np.diff(steps) <= 0):
            raise ConfigurationError("snapshot times must be positive and strictly increasing")
        if not self.dt > 0 or not np.isfinite(self.dt):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def from_times(cls, times, dt, tol=1e-6):
        times = np.asarray(times, dtype=float).ravel()
        if times.size == 0:
            raise ConfigurationError("schedule needs at least one snapshot time")
        if not dt > 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        if np.any(~np.isfinite(times)) or np.any(times <= 0):
            raise ConfigurationError("snapshot times must be finite and positive")
        ratio = times / dt
        steps = np.rint(ratio)
        off = np.abs(ratio - steps)
        if np.any(off > tol * np.maximum(1.0, ratio)):
            bad = times[np.argmax(off)]
            raise ConfigurationError(f"snapshot time {bad} is not a multiple of dt={dt}")
        snap = float(np.max(np.abs(steps * dt - times) / times))
        return cls(steps.astype(np.int64), dt, snap)

    @classmethod
    def from_range(cls, start, step, stop, dt):
        """Times ``start, start+step, ..., stop`` (inclusive)."""
        if not step > 0 or stop < start:
            raise ConfigurationError(f"bad range start={start} step={step} stop={stop}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return cls.from_times(start + step * np.arange(count), dt)

    @property
    def times(self):
        return self.steps * self.dt

    @property
    def horizon(self):
        return float(self.steps[-1] * self.dt)

    def __len__(self):
        return len(self.steps)

    def index_of(self, t):
        times = self.times
        hits = np.flatnonzero(np.abs(times - t) <= 1e-9 * max(1.0, abs(t)))
        if hits.size == 0:
            shown = ", ".join(f"{v:g}" for v in times[:10])
            more = " ..." if len(times) > 10 else ""
            raise TimeLookupError(f"time {t} is not in the schedule; available: {shown}{more}")
        return int(hits[0])

    def subset(self, indices):
        return SnapshotSchedule(self.steps[np.asarray(indices)], self.dt, self.max_snap)


@dataclass(frozen=True, eq=False)
class EnsembleSnapshots:
    """States ``data[path, time, component]`` sampled on a schedule."""

    data: np.ndarray
    schedule: SnapshotSchedule
    noise: NoiseSpec
    model_label: str
    initial_state: np.ndarray
    model_kind: str = "custom"
    input_free: bool = True

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[1] != len(self.schedule):
            raise ConfigurationError(
                f"snapshot data shape {data.shape} does not match "
                f"{len(self.schedule)} schedule times")
        if data.shape[0] != self.noise.path_count:
            raise ConfigurationError(
                f"snapshot data has {data.shape[0]} paths, noise spec says "
                f"{self.noise.path_count}")
        if not np.all(np.isfinite(data)):
            raise ConfigurationError("snapshot data contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def path_count(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[2]

    @property
    def times(self):
        return self.schedule.times

    def at(self, t):
        """All path states at snapshot time ``t``, shape ``(paths, n)``."""
        return self.data[:, self.schedule.index_of(t), :]


def noise_stream(seed, path):
    """Counter-based normal stream for one path."""
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(path) << 64)))


class SnapshotRecorder:
    """Observer that stores every snapshot."""

    def __init__(self, path_count, schedule, n):
        self.data = np.empty((path_count, len(schedule), n))

    def observe(self, index, time, paths, states):
        self.data[paths, index] = states


def _apply_gain(gain, vec):
    # gain (P, n, m) or (n, m); vec (P, m)
    if gain.ndim == 2:
        return matvec(gain, vec)
    out = gain[..., 0] * vec[:, 0, None]
    for c in range(1, gain.shape[-1]):
        out = out + gain[..., c] * vec[:, c, None]
    return out


def _run_slice(model, noise, schedule, control, lo, hi, observers):
    P = hi - lo
    m = model.m
    dt = schedule.dt
    amp = float(np.sqrt(noise.temperature * dt))
    noisy = noise.temperature > 0
    total = int(schedule.steps[-1])
    snaps = schedule.steps
    B = model.constant_gain
    x = np.tile(model.initial_state, (P, 1))
    paths = slice(lo, hi)
    gens = [noise_stream(noise.seed, k) for k in range(lo, hi)] if noisy else None
    chunk = max(1, min(total, NOISE_BUDGET // max(1, P * m)))

    step = 0
    nxt = 0
    while step < total:
        c = min(chunk, total - step)
        if noisy:
            W = np.empty((P, c, m))
            for j, g in enumerate(gens):
                g.standard_normal(out=W[j])
        for s in range(c):
            t = step * dt
            gx = None
            fx = model.drift(x)
            if control is not None:
                u = np.broadcast_to(np.asarray(control(t, x), dtype=float), (P, m))
                gx = B if B is not None else np.asarray(model.input_gain(x))
                fx = fx + _apply_gain(gx, u)
            if noisy:
                if gx is None:
                    gx = B if B is not None else np.asarray(model.input_gain(x))
                x_new = x + fx * dt + amp * _apply_gain(gx, W[:, s])
            else:
                x_new = x + fx * dt
            step += 1
            ok = np.abs(x_new) <= DIVERGENCE_LIMIT
            if not ok.all():
                bad = int(np.flatnonzero(~ok.all(axis=1))[0])
                raise DivergenceError(lo + bad, step * dt, x[bad])
            x = x_new
            while nxt < len(snaps) and snaps[nxt] == step:
                for ob in observers:
                    ob.observe(nxt, step * dt, paths, x)
                nxt += 1


def stream_ensemble(model, noise, schedule, observers, control=None, workers=1):
    """Integrate the ensemble, handing each snapshot to ``observers``.

    Observers implement ``observe(index, time, paths, states)`` where
    ``paths`` is the slice of global path indices covered by ``states``.
    Different workers touch disjoint slices.
    """
    if model.n != len(model.initial_state):
        raise ConfigurationError("model dimension and initial state disagree")
    P = noise.path_count
    workers = max(1, min(int(workers), P))
    bounds = np.linspace(0, P, workers + 1).round().astype(int)
    parts = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(parts) == 1:
        _run_slice(model, noise, schedule, control, 0, P, observers)
        return
    errors = []
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        futures = [pool.submit(_run_slice, model, noise, schedule, control, a, b, observers)
                   for a, b in parts]
        for fut in futures:
            exc = fut.exception()
            if exc is not None:
                errors.append(exc)
    if errors:
        divs = [e for e in errors if isinstance(e, DivergenceError)]
        raise min(divs, key=lambda e: e.path) if divs else errors[0]


def simulate_ensemble(model, noise, schedule, control=None, workers=1, observers=()):
    """Simulate ``noise.path_count`` paths and keep every snapshot.

    With ``control=None`` this is the noise response of the uncontrolled
    system.  ``control(t, X)`` returns inputs of shape ``(paths, m)`` or
    ``(m,)``.
    """
    rec = SnapshotRecorder(noise.path_count, schedule, model.n)
    stream_ensemble(model, noise, schedule, [rec, *observers], control, workers)
    return EnsembleSnapshots(rec.data, schedule, noise, model.label,
                             model.initial_state, model.kind, control is None)


def deterministic_trajectory(model, schedule):
    """Single noiseless, input-free path."""
    return simulate_ensemble(model, NoiseSpec(0.0, 0, 1), schedule)


def write_snapshots_binary(ens, path):
    """``GKSN1`` file: magic, u64 paths, u64 times, u64 n, f64 data path-major."""
    data = np.ascontiguousarray(ens.data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<QQQ", *data.shape))
        fh.write(data.tobytes())


def read_snapshots_binary(path):
    """Return the ``(paths, times, n)`` array stored in a ``GKSN1`` file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ConfigurationError(f"{path} is not a GKSN1 snapshot file")
        header = fh.read(24)
        if len(header) != 24:
            raise ConfigurationError(f"{path}: truncated header")
        shape = struct.unpack("<QQQ", header)
        payload = fh.read()
    expected = 8 * shape[0] * shape[1] * shape[2]
    if len(payload) != expected:
        raise ConfigurationError(
            f"{path}: expected {expected} data bytes for shape {shape}, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).astype(float)


def write_snapshots_csv(ens, path):
    """One row per (path, time): ``path, t, x1 .. xn``."""
    times = ens.times
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["path", "t"] + [f"x{i + 1}" for i in range(ens.n)])
        for k in range(ens.path_count):
            for j, t in enumerate(times):
                out.writerow([k, repr(float(t))] + [repr(float(v)) for v in ens.data[k, j]])

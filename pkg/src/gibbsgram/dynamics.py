"""Controlled dynamics ``dx/dt = f(x) + g(x) u`` and the built-in model families.

All callbacks are vectorized over leading axes: ``drift`` maps ``(..., n)``
to ``(..., n)`` and ``input_gain`` maps ``(..., n)`` to ``(..., n, m)``.
Network states use the interleaved layout ``[v1, w1, v2, w2, ...]``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import matvec
from .errors import ConfigurationError, NumericError
from .expr import compile_expression

FHN_RATE = 0.08
FHN_DAMPING = 0.8


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _matrix(name, value, ndim=2):
    a = np.asarray(value, dtype=float)
    if a.ndim != ndim:
        raise ConfigurationError(f"{name} must be a {ndim}-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class LinearSystem:
    """Constant matrices of ``dx/dt = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _matrix("A", self.A)
        B = _matrix("B", self.B)
        if A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ConfigurationError(
                f"B must have {A.shape[0]} rows to match A, got shape {B.shape}")
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "B", _readonly(B))

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class FhnNetwork:
    """Diffusively coupled FitzHugh-Nagumo neurons.

    ``input_pattern`` (p x m) says how each input drives the ``v`` equation
    of each neuron; a column of ones is a common input.
    """

    p: int
    coupling: np.ndarray
    input_pattern: np.ndarray

    def __post_init__(self):
        eta = _matrix("coupling", self.coupling)
        if eta.shape != (self.p, self.p):
            raise ConfigurationError(
                f"coupling must be {self.p}x{self.p}, got shape {eta.shape}")
        if not np.allclose(eta, eta.T, rtol=0.0, atol=1e-12):
            raise ConfigurationError("coupling matrix must be symmetric")
        if np.any(eta < 0):
            raise ConfigurationError("coupling strengths must be nonnegative")
        if np.any(np.diag(eta) != 0):
            raise ConfigurationError("coupling matrix must have a zero diagonal")
        pattern = _matrix("input_pattern", self.input_pattern)
        if pattern.shape[0] != self.p:
            raise ConfigurationError(
                f"input_pattern must have {self.p} rows, got shape {pattern.shape}")
        object.__setattr__(self, "coupling", _readonly(eta))
        object.__setattr__(self, "input_pattern", _readonly(pattern))

    @property
    def n(self):
        return 2 * self.p

    def gain_matrix(self):
        B = np.zeros((self.n, self.input_pattern.shape[1]))
        B[0::2] = self.input_pattern
        return B

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        v = x[..., 0::2]
        w = x[..., 1::2]
        degree = self.coupling.sum(axis=1)
        coupling = matvec(self.coupling, v) - degree * v
        out = np.empty(np.broadcast_shapes(x.shape), dtype=float)
        out[..., 0::2] = v - v * v * v / 3.0 - w + coupling
        out[..., 1::2] = FHN_RATE * (v - FHN_DAMPING * w)
        return out


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    """Drift ``f``, input gain ``g`` and initial state of a controlled system.

    Instances are immutable and can be shared between worker threads.
    ``constant_gain`` is set when ``g`` does not depend on the state, which
    lets the integrator skip evaluating it every step.
    """

    n: int
    m: int
    drift: Callable
    input_gain: Callable
    initial_state: np.ndarray
    label: str
    kind: str = "custom"
    constant_gain: Optional[np.ndarray] = None
    linear: Optional[LinearSystem] = None
    network: Optional[FhnNetwork] = None
    probe: bool = field(default=True, repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.n}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError(f"input count must be a positive integer, got {self.m}")
        x0 = np.asarray(self.initial_state, dtype=float)
        if x0.shape != (self.n,):
            raise ConfigurationError(
                f"initial state must have length {self.n}, got shape {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ConfigurationError("initial state must be finite")
        object.__setattr__(self, "initial_state", _readonly(x0))
        if self.constant_gain is not None:
            B = np.asarray(self.constant_gain, dtype=float)
            if B.shape != (self.n, self.m):
                raise ConfigurationError(
                    f"constant gain must be {self.n}x{self.m}, got shape {B.shape}")
            object.__setattr__(self, "constant_gain", _readonly(B))
        if self.probe:
            self._smoke_check()

    def probe_points(self):
        x0 = self.initial_state
        eye = np.eye(self.n)
        return np.vstack([x0, x0 + eye, x0 - eye])

    def _smoke_check(self):
        pts = self.probe_points()
        f = np.asarray(self.drift(pts))
        if f.shape != pts.shape:
            raise ConfigurationError(
                f"drift of {self.label!r} returned shape {f.shape} for states {pts.shape}")
        g = np.asarray(self.input_gain(pts))
        if g.shape != (pts.shape[0], self.n, self.m):
            raise ConfigurationError(
                f"input gain of {self.label!r} must return (..., {self.n}, {self.m}), "
                f"got {g.shape}")
        bad = ~(np.all(np.isfinite(f), axis=1) & np.all(np.isfinite(g), axis=(1, 2)))
        if bad.any():
            raise NumericError(
                f"model {self.label!r} is not finite at probe point {pts[bad][0].tolist()}")


def _constant_gain_fn(B):
    def gain(x):
        x = np.asarray(x)
        return np.broadcast_to(B, x.shape[:-1] + B.shape)
    return gain


def build_linear(A, B, x0, label="linear"):
    """Linear model with ``drift(x) = A x`` and ``input_gain(x) = B``."""
    sys = LinearSystem(A, B)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ConfigurationError(f"x0 must have length {sys.n}, got shape {x0.shape}")
    A_ = sys.A

    def drift(x):
        return matvec(A_, np.asarray(x, dtype=float))

    return DynamicsModel(n=sys.n, m=sys.B.shape[1], drift=drift,
                         input_gain=_constant_gain_fn(sys.B), initial_state=x0,
                         label=label, kind="linear", constant_gain=sys.B, linear=sys)


def build_fhn(p, coupling, input_pattern=None, x0=None, label="fhn"):
    """FitzHugh-Nagumo network of ``p`` neurons, state dimension ``2p``.

    Neuron ``i`` obeys::

        dv/dt = v - v^3/3 - w + sum_j eta_ij (v_j - v_i) + inputs
        dw/dt = 0.08 (v - 0.8 w)

    ``input_pattern`` defaults to a single common input on every ``v``.
    """
    if input_pattern is None:
        input_pattern = np.ones((p, 1))
    net = FhnNetwork(int(p), coupling, input_pattern)
    if x0 is None:
        x0 = np.zeros(net.n)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (net.n,):
        raise ConfigurationError(f"x0 must have length {net.n}, got shape {x0.shape}")
    B = net.gain_matrix()
    return DynamicsModel(n=net.n, m=B.shape[1], drift=net.drift,
                         input_gain=_constant_gain_fn(B), initial_state=x0,
                         label=label, kind="fhn", constant_gain=B, network=net)


def build_expression(drift, gain, x0, label="expression"):
    """Model from per-component expression strings.

    ``gain`` is an n x m nested list whose entries are numbers or
    expressions; an all-numeric gain is treated as constant.
    """
    if isinstance(drift, str) or not len(drift):
        raise ConfigurationError("drift must be a non-empty list of expressions")
    n = len(drift)
    fs = [compile_expression(e, n) for e in drift]
    rows = list(gain)
    if len(rows) != n or any(isinstance(r, str) for r in rows):
        raise ConfigurationError(f"gain must be a list of {n} rows")
    m = len(rows[0])
    if m == 0 or any(len(r) != m for r in rows):
        raise ConfigurationError("gain rows must all have the same positive length")

    def drift_fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([f(x) for f in fs], axis=-1)

    numeric = all(not isinstance(v, str) for r in rows for v in r)
    if numeric:
        B = _matrix("gain", rows)
        return DynamicsModel(n=n, m=m, drift=drift_fn, input_gain=_constant_gain_fn(B),
                             initial_state=x0, label=label, kind="expression",
                             constant_gain=B)
    gs = [[compile_expression(str(v), n) for v in r] for r in rows]

    def gain_fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.stack([g(x) for g in r], axis=-1) for r in gs], axis=-2)

    return DynamicsModel(n=n, m=m, drift=drift_fn, input_gain=gain_fn,
                         initial_state=x0, label=label, kind="expression")


def drift_jacobian(model, x, h=1e-5):
    """Central finite-difference Jacobian of the drift at ``x``."""
    if not h > 0:
        raise ConfigurationError(f"step h must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    eye = np.eye(model.n) * h
    plus = np.asarray(model.drift(x + eye))
    minus = np.asarray(model.drift(x - eye))
    for probe, val in ((x + eye, plus), (x - eye, minus)):
        bad = ~np.all(np.isfinite(val), axis=1)
        if bad.any():
            raise NumericError(f"drift is not finite at {probe[bad][0].tolist()}")
    # row j of plus/minus is f(x +- h e_j), i.e. column j of the Jacobian
    return ((plus - minus) / (2.0 * h)).T


@dataclass(frozen=True)
class NoiseSpec:
    """Input-channel noise: temperature ``T``, 64-bit seed and ensemble size.

    ``T = 0`` gives noiseless (deterministic) integration.
    """

    temperature: float
    seed: int = 0
    path_count: int = 1

    def __post_init__(self):
        T = float(self.temperature)
        if not np.isfinite(T) or T < 0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature}")
        if int(self.seed) != self.seed or not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if int(self.path_count) != self.path_count or self.path_count < 1:
            raise ConfigurationError(f"path_count must be >= 1, got {self.path_count}")
        object.__setattr__(self, "temperature", T)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path_count", int(self.path_count))

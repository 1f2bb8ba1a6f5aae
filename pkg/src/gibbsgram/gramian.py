"""Controllability Gramians: analytic, Monte-Carlo and quadrature estimates.

Monte-Carlo estimates keep, for every matrix entry, an exact floating-point
expansion of the raw sum of products.  The stored matrix is the correctly
rounded quotient by the path count, so results do not depend on summation
order, and Gramians summed over disjoint snapshot sets add up exactly.
"""
import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from ._numerics import exact_expansion, rounded_quotient, simpson_weights
from .errors import ConfigurationError, NumericError

PROVENANCES = ("analytic", "monte_carlo", "quadrature")
PSD_TOL = 1e-10
MAX_QUADRATURE_DIM = 3


@dataclass(frozen=True, eq=False)
class GramianMatrix:
    """Symmetric positive-semidefinite Gramian with its provenance."""

    matrix: np.ndarray
    provenance: str
    horizon: Optional[float] = None
    temperature: Optional[float] = None
    sample_count: Optional[int] = None
    snapshot_count: Optional[int] = None
    reference: str = "origin"
    boundary_mass: Optional[float] = None
    exact_sums: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ConfigurationError(f"unknown provenance {self.provenance!r}")
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ConfigurationError(f"Gramian must be square, got shape {M.shape}")
        if not np.all(np.isfinite(M)):
            raise NumericError("Gramian has non-finite entries")
        M = 0.5 * (M + M.T)
        lam = np.linalg.eigvalsh(M)
        if lam[0] < -PSD_TOL * max(lam[-1], 0.0) - 1e-300:
            raise NumericError(
                f"Gramian is not positive semidefinite (eigenvalues {lam[0]:.3g} .. {lam[-1]:.3g})")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def eigenvalues(self):
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self.matrix)[::-1]

    def __add__(self, other):
        if not isinstance(other, GramianMatrix):
            return NotImplemented
        if other.n != self.n:
            raise ConfigurationError("cannot add Gramians of different dimension")
        exact = (self.exact_sums is not None and other.exact_sums is not None
                 and self.sample_count == other.sample_count
                 and self.reference == other.reference)
        if exact:
            sums = tuple(a + b for a, b in zip(self.exact_sums, other.exact_sums))
            return _from_exact(sums, self.n, self.sample_count,
                               horizon=_max_or_none(self.horizon, other.horizon),
                               temperature=self.temperature,
                               snapshot_count=(self.snapshot_count or 0)
                               + (other.snapshot_count or 0),
                               reference=self.reference)
        prov = self.provenance if self.provenance == other.provenance else "monte_carlo"
        return GramianMatrix(self.matrix + other.matrix, prov,
                             horizon=_max_or_none(self.horizon, other.horizon),
                             temperature=self.temperature, reference=self.reference)

    def report(self):
        return {
            "provenance": self.provenance,
            "n": self.n,
            "temperature": self.temperature,
            "horizon": self.horizon,
            "sample_count": self.sample_count,
            "snapshot_count": self.snapshot_count,
            "reference": self.reference,
            "boundary_mass": self.boundary_mass,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "matrix": [[float(v) for v in row] for row in self.matrix],
        }

    def to_csv(self, path):
        np.savetxt(path, self.matrix, fmt="%.17g", delimiter=",")

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _max_or_none(a, b):
    vals = [v for v in (a, b) if v is not None]
    return max(vals) if vals else None


def _upper_pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _from_exact(sums, n, count, **meta):
    M = np.empty((n, n))
    for (i, j), s in zip(_upper_pairs(n), sums):
        M[i, j] = M[j, i] = rounded_quotient(s, count)
    return GramianMatrix(M, "monte_carlo", sample_count=count, exact_sums=sums, **meta)


def _moment_sums(Y):
    # Y: (samples, n); exact sum of y_i y_j over samples for every i <= j
    return tuple(exact_expansion(Y[:, i] * Y[:, j]) for i, j in _upper_pairs(Y.shape[1]))


def _reference_vector(ens, reference):
    if isinstance(reference, str):
        if reference == "origin":
            return None, "origin"
        if reference == "initial":
            return np.asarray(ens.initial_state, dtype=float), "initial"
        raise ConfigurationError(f"reference must be 'origin', 'initial' or a vector, got {reference!r}")
    ref = np.asarray(reference, dtype=float)
    if ref.shape != (ens.n,):
        raise ConfigurationError(f"reference point must have length {ens.n}")
    return ref, "custom"


def _require_input_free(ens):
    if not ens.input_free:
        raise ConfigurationError("Gibbs Gramian estimates need an ensemble simulated with u = 0")


def linear_gramian(sys, tau):
    """Finite-horizon Gramian ``int_0^tau e^{As} B B^T e^{A^T s} ds``.

    Uses the block matrix exponential of ``[[-A, BB^T], [0, A^T]] tau``:
    its lower-right block is ``e^{A^T tau}`` and its upper-right block is
    ``e^{-A tau} G``.
    """
    sys = getattr(sys, "linear", None) or sys
    A = np.asarray(sys.A, dtype=float)
    B = np.asarray(sys.B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"A must be square, got shape {A.shape}")
    if not tau > 0:
        raise ConfigurationError(f"horizon must be positive, got {tau}")
    n = A.shape[0]
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -A
    C[:n, n:] = B @ B.T
    C[n:, n:] = A.T
    F = expm(C * tau)
    G = F[n:, n:].T @ F[:n, n:]
    return GramianMatrix(G, "analytic", horizon=float(tau))


def empirical_gibbs_gramian(ens, tau, reference="origin"):
    """Raw second moment ``(1/P) sum_k x_k(tau) x_k(tau)^T`` of the noise response.

    The mean is not subtracted.  ``reference="initial"`` measures
    displacement from the initial state instead of from the origin.
    """
    _require_input_free(ens)
    X = ens.at(tau)
    ref, tag = _reference_vector(ens, reference)
    if ref is not None:
        X = X - ref
    return _from_exact(_moment_sums(X), ens.n, ens.path_count,
                       horizon=float(ens.schedule.times[ens.schedule.index_of(tau)]),
                       temperature=ens.noise.temperature, snapshot_count=1,
                       reference=tag)


def snapshot_summed_gramian(ens, times=None, reference="origin"):
    """Sum of the empirical Gramians over all (or the given) snapshot times."""
    _require_input_free(ens)
    if times is None:
        idx = np.arange(len(ens.schedule))
    else:
        idx = np.array([ens.schedule.index_of(t) for t in times], dtype=int)
    if idx.size == 0:
        raise ConfigurationError("cannot sum a Gramian over an empty schedule")
    ref, tag = _reference_vector(ens, reference)
    Y = ens.data[:, idx, :]
    if ref is not None:
        Y = Y - ref
    return _from_exact(_moment_sums(Y.reshape(-1, ens.n)), ens.n, ens.path_count,
                       horizon=float(ens.schedule.times[idx].max()),
                       temperature=ens.noise.temperature, snapshot_count=int(idx.size),
                       reference=tag)


class StreamingGramian:
    """Observer accumulating the snapshot-summed Gramian without storing paths.

    Every path keeps a Neumaier-compensated running sum over snapshot times;
    :meth:`result` reduces the per-path sums exactly in path-index order.
    Agrees with :func:`snapshot_summed_gramian` up to the compensated
    rounding of the per-path sums.
    """

    def __init__(self, path_count, n, temperature=None, reference=None):
        self.path_count = path_count
        self.n = n
        self.temperature = temperature
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self._sum = np.zeros((path_count, n, n))
        self._comp = np.zeros((path_count, n, n))
        self._times = np.zeros(0)
        self.snapshot_count = 0
        self.horizon = 0.0

    def observe(self, index, time, paths, states):
        X = states if self.reference is None else states - self.reference
        prod = X[:, :, None] * X[:, None, :]
        s = self._sum[paths]
        t = s + prod
        big = np.abs(s) >= np.abs(prod)
        self._comp[paths] += np.where(big, (s - t) + prod, (prod - t) + s)
        self._sum[paths] = t
        if paths.start == 0:
            self.snapshot_count = index + 1
            self.horizon = max(self.horizon, time)

    def result(self):
        sums = tuple(exact_expansion(np.concatenate([self._sum[:, i, j], self._comp[:, i, j]]))
                     for i, j in _upper_pairs(self.n))
        return _from_exact(sums, self.n, self.path_count, horizon=float(self.horizon),
                           temperature=self.temperature, snapshot_count=self.snapshot_count,
                           reference="origin" if self.reference is None else "custom")


def _box_axes(domain, points):
    axes = []
    for lo, hi in domain:
        if not hi > lo:
            raise ConfigurationError(f"empty integration interval [{lo}, {hi}]")
        axes.append(np.linspace(lo, hi, points))
    return axes


def _weighted_moments(L, domain, points, temperature):
    axes = _box_axes(domain, points)
    d = len(axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = np.asarray(L(pts), dtype=float).reshape(-1) / temperature
    if vals.shape[0] != pts.shape[0]:
        raise ConfigurationError("L must return one value per point")
    if np.any(np.isnan(vals)) or np.any(vals == -np.inf):
        raise NumericError("L returned NaN or -inf on the integration box")
    w = np.ones(1)
    for ax in axes:
        w = np.multiply.outer(w, simpson_weights(points, ax[1] - ax[0])).reshape(-1)
    return pts, vals, w, d


def gibbs_gramian_quadrature(L, domain, points_per_axis, temperature=1.0,
                             max_boundary_mass=1e-8):
    """Gibbs Gramian ``int phi(x) x x^T dx`` with ``phi ~ exp(-L/T)`` by Simpson's rule.

    Parameters
    ----------
    L : callable
        Vectorized cost, maps points ``(N, d)`` to ``(N,)``; ``+inf`` marks
        unreachable states, which get zero weight.
    domain : sequence of (lo, hi)
        Integration box, one interval per axis, ``d <= 3``.
    points_per_axis : int
        Odd number of Simpson nodes per axis.
    temperature : float
        Divides ``L``.
    max_boundary_mass : float
        Largest tolerated fraction of ``exp(-L/T)`` outside the box, estimated
        on a box twice as wide with the same spacing.
    """
    domain = [tuple(map(float, iv)) for iv in domain]
    if not 1 <= len(domain) <= MAX_QUADRATURE_DIM:
        raise ConfigurationError(
            f"quadrature is limited to dimension <= {MAX_QUADRATURE_DIM}, got {len(domain)}")
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    pts, vals, w, d = _weighted_moments(L, domain, points_per_axis, temperature)
    finite = np.isfinite(vals)
    if not finite.any():
        raise NumericError("exp(-L) vanishes on the whole box; rescale the domain")
    shift = vals[finite].min()
    dens = np.where(finite, np.exp(-(vals - shift)), 0.0) * w
    Z = dens.sum()
    if not Z > 0 or not np.isfinite(Z):
        raise NumericError("normalization integral underflowed; rescale the domain")
    M = np.einsum("k,ki,kj->ij", dens, pts, pts) / Z

    big = [(0.5 * (lo + hi) - (hi - lo), 0.5 * (lo + hi) + (hi - lo)) for lo, hi in domain]
    bpts, bvals, bw, _ = _weighted_moments(L, big, 2 * points_per_axis - 1, temperature)
    bdens = np.where(np.isfinite(bvals), np.exp(-(bvals - shift)), 0.0) * bw
    Zbig = bdens.sum()
    boundary = float(max(0.0, 1.0 - Z / Zbig)) if Zbig > 0 else 0.0
    if boundary > max_boundary_mass:
        raise NumericError(
            f"{boundary:.3g} of the Gibbs mass lies outside the box "
            f"(limit {max_boundary_mass:g}); enlarge the domain")
    return GramianMatrix(M, "quadrature", temperature=float(temperature),
                         boundary_mass=boundary)

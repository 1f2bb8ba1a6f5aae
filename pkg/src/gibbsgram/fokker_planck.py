"""Grid solver for the forward Kolmogorov (Fokker-Planck) equation.

Independent route to the density of the noise response::

    d rho/dt = -div(f rho) + (T/2) sum_ij d_i d_j (D_ij rho),   D = g g^T

on a box with absorbing boundaries.  Fluxes use Scharfetter-Gummel
(exponentially fitted upwind) weights: upwind at high cell Peclet number,
central at low, nonnegative for explicit steps below the stability limit.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator

from ._numerics import trapezoid_weights
from .errors import ConfigurationError, DomainTooSmallError, NumericError
from .gramian import empirical_gibbs_gramian

log = logging.getLogger(__name__)

MAX_GRID_DIM = 2
LEAK_LIMIT = 1e-3


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid: ``bounds[a] = (lo, hi)`` with ``points[a]`` nodes."""

    bounds: tuple
    points: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        points = tuple(int(p) for p in self.points)
        if len(bounds) != len(points) or not 1 <= len(bounds) <= MAX_GRID_DIM:
            raise ConfigurationError(
                f"grid must be 1-D or 2-D with matching bounds/points, got {bounds}, {points}")
        for (lo, hi), p in zip(bounds, points):
            if not hi > lo or p < 3:
                raise ConfigurationError(f"bad grid axis [{lo}, {hi}] with {p} points")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "points", points)

    @property
    def dimension(self):
        return len(self.points)

    @property
    def axes(self):
        return [np.linspace(lo, hi, p) for (lo, hi), p in zip(self.bounds, self.points)]

    @property
    def spacing(self):
        return tuple((hi - lo) / (p - 1) for (lo, hi), p in zip(self.bounds, self.points))

    def mesh(self):
        """Node coordinates, shape ``points + (d,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def weights(self):
        """Tensor-product trapezoid weights."""
        w = np.ones(())
        for p, h in zip(self.points, self.spacing):
            w = np.multiply.outer(w, trapezoid_weights(p, h))
        return w

    def as_dict(self):
        return {"bounds": [list(b) for b in self.bounds], "points": list(self.points)}


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability density on a grid, normalized by the trapezoid rule."""

    grid: GridSpec
    values: np.ndarray
    time: float
    mass_before_renormalization: float = 1.0
    leaked_mass: float = 0.0
    steps: int = 0
    dt: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.points:
            raise ConfigurationError(f"density shape {v.shape} does not match grid {self.grid.points}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self):
        return self.grid.dimension

    def integral(self):
        return float(np.sum(self.values * self.grid.weights()))

    def second_moment(self):
        """``int rho(x) x x^T dx`` by the trapezoid rule."""
        X = self.grid.mesh().reshape(-1, self.dimension)
        w = (self.values * self.grid.weights()).reshape(-1)
        return np.einsum("k,ki,kj->ij", w, X, X)

    def to_csv(self, path):
        X = self.grid.mesh().reshape(-1, self.dimension)
        cols = [f"x{i + 1}" for i in range(self.dimension)] + ["density"]
        data = np.column_stack([X, self.values.reshape(-1)])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")


def _bernoulli(z):
    """``z / (exp(z) - 1)`` with the removable singularity at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = z / np.expm1(np.where(small, 1.0, z))
    out = np.where(small, 1.0 - 0.5 * z, out)
    return np.where(np.isnan(out) & (z > 0), 0.0, out)


def _diffusion(model, pts):
    g = np.asarray(model.input_gain(pts), dtype=float)
    return np.einsum("...im,...jm->...ij", g, g)


def _face_points(grid, axis):
    # faces between consecutive nodes along `axis`, including the two
    # boundary faces next to the (zero-density) ghost nodes
    axes = grid.axes
    h = grid.spacing[axis]
    lo = grid.bounds[axis][0]
    n = grid.points[axis]
    axes[axis] = lo + (np.arange(n + 1) - 0.5) * h
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _extended_nodes(grid, axis):
    axes = grid.axes
    h = grid.spacing[axis]
    lo = grid.bounds[axis][0]
    n = grid.points[axis]
    axes[axis] = lo + (np.arange(-1, n + 1)) * h
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _pad(rho, axis):
    pad = [(0, 0)] * rho.ndim
    pad[axis] = (1, 1)
    return np.pad(rho, pad)


def _take(a, axis, sl):
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


class _FluxOperator:
    """Explicit finite-volume right-hand side of the Fokker-Planck equation.

    ``D = g g^T`` is split as ``diag(r) + |D_xy| v v^T / (h_x h_y)`` with
    ``v = (h_x, +-h_y)``: the remainder ``r_a = D_aa - |D_xy| h_a / h_b``
    diffuses along the axes with Scharfetter-Gummel fluxes that also carry
    the drift, and the rank-one part diffuses along the grid diagonal.  Both
    have nonnegative neighbor weights, so explicit steps below the stability
    limit keep the density nonnegative.
    """

    def __init__(self, model, T, grid):
        self.grid = grid
        self.d = grid.dimension
        self.h = grid.spacing
        self.left = []
        self.right = []
        self.cross = []
        rate = np.zeros(grid.points)
        if self.d == 2:
            D01 = _diffusion(model, grid.mesh().reshape(-1, 2))[:, 0, 1].reshape(grid.points)
            hxy = self.h[0] * self.h[1]
            for sign in (1.0, -1.0):
                c = 0.5 * T * np.maximum(sign * D01, 0.0) / hxy
                if np.any(c > 0):
                    self.cross.append((sign, c))
                    rate = rate + 2 * c

        def axis_diffusion(pts, a):
            D = _diffusion(model, pts.reshape(-1, self.d))
            r = D[:, a, a]
            if self.d == 2:
                b = 1 - a
                r = r - np.abs(D[:, a, b]) * self.h[a] / self.h[b]
            if np.any(r < -1e-12 * np.abs(D[:, a, a]).max()):
                raise ConfigurationError(
                    f"grid spacing ratio h{a + 1}/h{2 - a} is too large for the cross diffusion; "
                    "need D_aa h_b >= |D_ab| h_a everywhere")
            return np.maximum(r, 0.0).reshape(pts.shape[:-1])

        for a in range(self.d):
            h = self.h[a]
            faces = _face_points(grid, a)
            fa = np.asarray(model.drift(faces.reshape(-1, self.d)))[:, a].reshape(faces.shape[:-1])
            Dext = axis_diffusion(_extended_nodes(grid, a), a)
            dface = 0.5 * T * axis_diffusion(faces, a)
            # Ito form: d_a (r rho) = r d_a rho + rho d_a r
            f_eff = fa - 0.5 * T * np.diff(Dext, axis=a) / h
            # J_{i+1/2} = left * rho_i - right * rho_{i+1}; pure upwind where r = 0
            pos = dface > 0
            with np.errstate(divide="ignore", invalid="ignore"):
                pe = np.where(pos, f_eff * h / np.where(pos, dface, 1.0), 0.0)
            L = np.where(pos, dface / h * _bernoulli(-pe), np.maximum(f_eff, 0.0))
            R = np.where(pos, dface / h * _bernoulli(pe), np.maximum(-f_eff, 0.0))
            self.left.append(L)
            self.right.append(R)
            rate = rate + (_take(L, a, slice(1, None)) + _take(R, a, slice(None, -1))) / h
        self.max_rate = float(rate.max())

    def __call__(self, rho):
        out = np.zeros_like(rho)
        for a in range(self.d):
            rp = _pad(rho, a)
            J = self.left[a] * _take(rp, a, slice(None, -1)) - self.right[a] * _take(rp, a, slice(1, None))
            out -= np.diff(J, axis=a) / self.h[a]
        for sign, c in self.cross:
            u = np.pad(c * rho, 1)
            if sign > 0:
                out += u[2:, 2:] + u[:-2, :-2] - 2 * u[1:-1, 1:-1]
            else:
                out += u[2:, :-2] + u[:-2, 2:] - 2 * u[1:-1, 1:-1]
        return out


def evolve_density(model, temperature, tau, grid, x0=None, safety=None, max_steps=2_000_000,
                   min_points_per_diffusion_length=20):
    """Density of the noise response at time ``tau`` on ``grid``.

    The initial delta at ``x0`` is replaced by a Gaussian two cells wide.
    The explicit step is chosen from the stability limit; runs needing more
    than ``max_steps`` steps raise :class:`NumericError`.
    """
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if not isinstance(grid, GridSpec):
        grid = GridSpec(*grid)
    d = grid.dimension
    if model.n != d:
        raise ConfigurationError(f"model dimension {model.n} does not match {d}-D grid")
    x0 = np.asarray(model.initial_state if x0 is None else x0, dtype=float)
    for a, ((lo, hi), xa) in enumerate(zip(grid.bounds, x0)):
        if not lo < xa < hi:
            raise ConfigurationError(f"x0[{a}]={xa} lies outside the box [{lo}, {hi}]")
    diff_len = np.sqrt(temperature * tau)
    for a, h in enumerate(grid.spacing):
        if diff_len / h < min_points_per_diffusion_length:
            raise ConfigurationError(
                f"axis {a}: spacing {h:g} resolves the diffusion length {diff_len:g} with "
                f"fewer than {min_points_per_diffusion_length} points")

    op = _FluxOperator(model, float(temperature), grid)
    if safety is None:
        safety = 0.9
    dt_max = safety / op.max_rate
    steps = int(np.ceil(tau / dt_max))
    if steps > max_steps:
        raise NumericError(f"stability limit needs {steps} steps (cap {max_steps}); coarsen the grid")
    dt = tau / steps

    mesh = grid.mesh()
    width = 2.0 * np.array(grid.spacing)
    rho = np.exp(-0.5 * np.sum(((mesh - x0) / width) ** 2, axis=-1))
    cell = float(np.prod(grid.spacing))
    rho /= rho.sum() * cell
    for _ in range(steps):
        rho = rho + dt * op(rho)
    if not np.all(np.isfinite(rho)):
        raise NumericError("density became non-finite")
    leaked = 1.0 - rho.sum() * cell
    if leaked > LEAK_LIMIT:
        raise DomainTooSmallError(
            f"{leaked:.3g} of the probability left the box (limit {LEAK_LIMIT:g}); enlarge the domain")
    mass = float(np.sum(rho * grid.weights()))
    if abs(mass - 1.0) > 1e-6:
        log.info("renormalizing density at t=%g: integral %.9f", tau, mass)
    return GridDensity(grid, rho / mass, float(tau), mass, float(leaked), steps, dt)


@dataclass(frozen=True, eq=False)
class GridControllability:
    """Stochastic controllability function recovered from a density.

    ``scaled`` holds ``L(x)/T = -ln rho(x) + c`` with ``c`` chosen so the
    minimum is 0; cells with zero density hold ``+inf``.
    """

    grid: GridSpec
    scaled: np.ndarray
    temperature: float

    @property
    def cost(self):
        return self.temperature * self.scaled


def stochastic_controllability_on_grid(density, temperature, floor=0.0):
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    if abs(density.integral() - 1.0) > 1e-6:
        raise ConfigurationError("density must be normalized")
    rho = density.values
    positive = rho > floor
    if not positive.any():
        raise NumericError("density has no positive cells")
    with np.errstate(divide="ignore"):
        scaled = np.where(positive, -np.log(np.where(positive, rho, 1.0)), np.inf)
    scaled = scaled - scaled[positive].min()
    return GridControllability(density.grid, scaled, float(temperature))


@dataclass(frozen=True, eq=False)
class CrosscheckReport:
    l1_distance: float
    gramian_rel_error: float
    grid_spec: dict
    mc_spec: dict
    density: Optional[GridDensity] = field(default=None, repr=False)

    def report(self):
        return {"l1_distance": self.l1_distance, "gramian_rel_error": self.gramian_rel_error,
                "grid_spec": self.grid_spec, "mc_spec": self.mc_spec}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _bin_masses(density, edges):
    """Probability of each histogram bin under the grid density."""
    grid = density.grid
    F = density.values
    for a, ax in enumerate(grid.axes):
        F = cumulative_trapezoid(F, ax, axis=a, initial=0.0)
    interp = RegularGridInterpolator(grid.axes, F, bounds_error=False, fill_value=None)
    corners = np.stack(np.meshgrid(*edges, indexing="ij"), axis=-1)
    C = interp(corners.reshape(-1, grid.dimension)).reshape(corners.shape[:-1])
    for a in range(grid.dimension):
        C = np.diff(C, axis=a)
    return C


def crosscheck_theorem(model, temperature, tau, ens, grid, x0=None, bins=40):
    """Compare a Monte-Carlo ensemble with the grid density at time ``tau``.

    Reports the L1 distance between the histogram of ``x(tau)`` and the
    grid density (as bin probabilities over the grid box) and the relative
    Frobenius error between the empirical Gibbs Gramian and the density's
    second moment.
    """
    if not temperature > 0:
        raise ConfigurationError("the density route requires temperature > 0")
    x0 = np.asarray(model.initial_state if x0 is None else x0, dtype=float)
    if ens.model_label != model.label:
        raise ConfigurationError(
            f"ensemble was simulated for {ens.model_label!r}, not {model.label!r}")
    if ens.noise.temperature != temperature:
        raise ConfigurationError(
            f"ensemble temperature {ens.noise.temperature} differs from {temperature}")
    if not np.array_equal(ens.initial_state, x0):
        raise ConfigurationError("ensemble initial state differs from x0")
    if ens.n != model.n:
        raise ConfigurationError("ensemble and model dimensions differ")
    samples = ens.at(tau)
    if not isinstance(grid, GridSpec):
        grid = GridSpec(*grid)
    density = evolve_density(model, temperature, tau, grid, x0=x0)

    edges = [np.linspace(lo, hi, bins + 1) for lo, hi in grid.bounds]
    hist, _ = np.histogramdd(samples, bins=edges)
    hist = hist / ens.path_count
    outside = 1.0 - hist.sum()
    grid_mass = _bin_masses(density, edges)
    l1 = float(np.abs(hist - grid_mass).sum() + abs(outside - (1.0 - grid_mass.sum())))

    G_mc = empirical_gibbs_gramian(ens, tau).matrix
    M2 = density.second_moment()
    rel = float(np.linalg.norm(G_mc - M2) / np.linalg.norm(M2))
    mc_spec = {"paths": ens.path_count, "dt": ens.schedule.dt, "seed": ens.noise.seed,
               "temperature": temperature, "tau": float(tau), "bins": bins}
    return CrosscheckReport(l1, rel, grid.as_dict(), mc_spec, density)

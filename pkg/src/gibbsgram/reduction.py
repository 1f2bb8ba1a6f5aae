"""Principal subspaces of Gramians, POD errors and Galerkin reduced models."""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from ._numerics import matvec
from .dynamics import DynamicsModel, LinearSystem
from .errors import ConfigurationError

TIE_TOL = 1e-12
SIGN_TOL = 1e-12


def _sign_normalize(V):
    V = V.copy()
    for c in range(V.shape[1]):
        col = V[:, c]
        nz = np.flatnonzero(np.abs(col) > SIGN_TOL * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            V[:, c] = -col
    return V


def _order(lam, V):
    """Descending eigenvalues; exact ties broken by descending lexicographic order."""
    idx = np.argsort(-lam, kind="stable")
    lam, V = lam[idx], _sign_normalize(V[:, idx])
    scale = max(abs(lam[0]), np.finfo(float).tiny)
    start = 0
    for i in range(1, len(lam) + 1):
        if i == len(lam) or lam[start] - lam[i] > TIE_TOL * scale:
            if i - start > 1:
                block = V[:, start:i]
                keys = sorted(range(i - start), key=lambda c: tuple(block[:, c]), reverse=True)
                V[:, start:i] = block[:, keys]
            start = i
    return lam, V


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    """Orthonormal ``n x k`` basis with the full spectrum of its source Gramian."""

    basis: np.ndarray
    eigenvalues: np.ndarray
    source: object = field(default=None, repr=False)

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def k(self):
        return self.basis.shape[1]

    @property
    def explained_fraction(self):
        total = self.eigenvalues.sum()
        return self.eigenvalues[:self.k] / total if total > 0 else np.zeros(self.k)

    def report(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "explained_fraction": [float(v) for v in self.explained_fraction],
            "sign_convention": "first-nonzero-positive",
            "k": self.k,
            "n": self.n,
        }

    def to_csv(self, path):
        np.savetxt(path, self.basis, fmt="%.17g", delimiter=",")

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def principal_basis(G, k):
    """Top-``k`` eigenvectors of a Gramian.

    Signs are fixed so the first nonzero entry of each column is positive,
    which makes the result a pure function of the matrix.
    """
    M = np.asarray(getattr(G, "matrix", G), dtype=float)
    n = M.shape[0]
    if int(k) != k or not 1 <= k <= n:
        raise ConfigurationError(f"k must be an integer in [1, {n}], got {k}")
    lam, V = eigh(M, driver="ev")
    lam, V = _order(lam, V)
    basis = np.ascontiguousarray(V[:, :int(k)]) + 0.0  # drop negative zeros
    basis.setflags(write=False)
    lam.setflags(write=False)
    return ProjectionBasis(basis, lam, G)


def _basis_matrix(rho, n):
    R = np.asarray(getattr(rho, "basis", rho), dtype=float)
    if R.ndim != 2 or R.shape[0] != n:
        raise ConfigurationError(f"basis must have {n} rows, got shape {R.shape}")
    return R


def projection_error(ens, rho):
    """Ensemble average of the summed squared projection error.

    ``(1/P) sum_k sum_tau |(I - rho rho^T) x_k(tau)|^2`` over every path
    ``k`` and snapshot ``tau`` of the ensemble.
    """
    R = _basis_matrix(rho, ens.n)
    X = ens.data.reshape(-1, ens.n)
    resid = X - (X @ R) @ R.T
    return float(np.einsum("ij,ij->", resid, resid) / ens.path_count)


def directional_reach_score(ens, e, tau):
    """Monte-Carlo estimate of ``E |e^T x(tau)|^2`` for a unit direction ``e``."""
    e = np.asarray(e, dtype=float)
    if e.shape != (ens.n,):
        raise ConfigurationError(f"direction must have length {ens.n}")
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ConfigurationError("direction must be nonzero")
    if abs(norm - 1.0) > 1e-12:
        warnings.warn(f"direction has norm {norm:.6g}; normalizing", stacklevel=2)
        e = e / norm
    proj = ens.at(tau) @ e
    return float(np.dot(proj, proj) / ens.path_count)


@dataclass(frozen=True, eq=False)
class ReducedModel(DynamicsModel):
    """Galerkin projection ``dz/dt = rho^T f(rho z) + rho^T g(rho z) u``."""

    base: DynamicsModel = None
    projection: ProjectionBasis = None

    @property
    def k(self):
        return self.n

    def lift(self, z):
        return matvec(self.projection.basis, np.asarray(z, dtype=float))


def galerkin_reduce(model, rho):
    """Project ``model`` onto the span of ``rho``; starts at ``rho^T x0``."""
    R = _basis_matrix(rho, model.n)
    if not isinstance(rho, ProjectionBasis):
        rho = ProjectionBasis(R, np.full(R.shape[1], np.nan))
    Rt = np.ascontiguousarray(R.T)
    k = R.shape[1]

    def drift(z):
        return matvec(Rt, np.asarray(model.drift(matvec(R, np.asarray(z, dtype=float)))))

    linear = None
    const = None
    if model.constant_gain is not None:
        const = Rt @ model.constant_gain

        def gain(z):
            z = np.asarray(z)
            return np.broadcast_to(const, z.shape[:-1] + const.shape)
    else:
        def gain(z):
            g = np.asarray(model.input_gain(matvec(R, np.asarray(z, dtype=float))))
            return np.einsum("ki,...im->...km", Rt, g)
    if model.linear is not None:
        linear = LinearSystem(Rt @ model.linear.A @ R, Rt @ model.linear.B)
    z0 = Rt @ model.initial_state
    return ReducedModel(n=k, m=model.m, drift=drift, input_gain=gain, initial_state=z0,
                        label=f"{model.label}/galerkin{k}", kind="reduced",
                        constant_gain=const, linear=linear, base=model, projection=rho)

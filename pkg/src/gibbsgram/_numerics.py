"""Low-level numerical helpers.

Everything here is elementwise or exactly rounded, so results for a given
path never depend on how paths are batched across workers.
"""
import math
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, NumericError


def matvec(M, x):
    """Apply ``M`` (r x c) to the last axis of ``x`` (..., c).

    Each output component is accumulated column by column with plain
    elementwise operations instead of BLAS, whose kernel choice (and so
    rounding) depends on the batch shape.  Zero entries are skipped.
    """
    M = np.asarray(M, dtype=float)
    r, c = M.shape
    cols = [x[..., j] for j in range(c)]
    out = np.zeros(x.shape[:-1] + (r,))
    for i in range(r):
        acc = None
        for j in range(c):
            a = M[i, j]
            if a == 0.0:
                continue
            acc = cols[j] * a if acc is None else acc + cols[j] * a
        if acc is not None:
            out[..., i] = acc
    return out


def exact_expansion(values, max_terms=64):
    """Return floats whose exact (unrounded) sum equals ``sum(values)``.

    Repeated ``math.fsum`` peels off the correctly rounded residual until
    nothing is left.
    """
    vals = np.asarray(values, dtype=float).ravel().tolist()
    comps = []
    for _ in range(max_terms):
        r = math.fsum(vals + [-c for c in comps])
        if not math.isfinite(r):
            raise NumericError("non-finite value in exact summation")
        if r == 0.0:
            return tuple(comps)
        comps.append(r)
    raise NumericError("exact summation did not converge")


def rounded_quotient(expansion, count):
    """Correctly rounded ``sum(expansion) / count``."""
    total = sum((Fraction(c) for c in expansion), Fraction(0))
    return float(total / count)


def simpson_weights(num, h):
    """Composite Simpson weights for ``num`` equally spaced nodes."""
    if num < 3 or num % 2 == 0:
        raise ConfigurationError(
            f"composite Simpson needs an odd node count >= 3, got {num}")
    w = np.ones(num)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def trapezoid_weights(num, h):
    w = np.full(num, h)
    w[0] = w[-1] = 0.5 * h
    return w

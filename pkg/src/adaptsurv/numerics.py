"""Special functions, quadrature, root finding and seeded random streams.

Everything here is a thin, checked layer over numpy/scipy so the rest of the
package has one place to import its numerical primitives from.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize, special


class NoSignChange(ValueError):
    """Root bracket does not contain a sign change."""


class NonFinite(ArithmeticError):
    """Objective evaluated to nan or inf inside the bracket."""


def norm_cdf(x):
    """Standard normal distribution function (vectorised)."""
    return special.ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def norm_sf(x):
    """Upper tail 1 - Phi(x), accurate far into the right tail."""
    return special.ndtr(-np.asarray(x, dtype=float))


def norm_quantile(p):
    """Inverse of :func:`norm_cdf`.

    Raises ValueError for p outside the open unit interval.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError(f"norm_quantile needs 0 < p < 1, got {p!r}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def gauss_legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    if nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_nodes(lo: float, hi: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped onto [lo, hi]."""
    x, w = gauss_legendre(nodes)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def integrate(f: Callable, lo: float, hi: float, nodes: int = 64) -> float:
    """Gauss-Legendre estimate of the integral of ``f`` over [lo, hi].

    ``f`` is called once with the full node array, so it must be vectorised.
    Exact for polynomials of degree <= 2*nodes - 1.
    """
    x, w = gl_nodes(lo, hi, nodes)
    return float(np.dot(w, f(x)))


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bracketed root of a scalar function (Brent's method, never unbracketed)."""
    if not tol > 0:
        raise ValueError("tol must be positive")

    def checked(x: float) -> float:
        y = float(f(x))
        if not math.isfinite(y):
            raise NonFinite(f"objective is {y} at x={x}")
        return y

    flo, fhi = checked(lo), checked(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise NoSignChange(f"f({lo})={flo:.3g} and f({hi})={fhi:.3g} have the same sign")
    return optimize.brentq(checked, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


# --- random streams -------------------------------------------------------
# numpy's PCG64 is bit-reproducible across platforms; child streams come from
# SeedSequence.spawn so replication i always gets the same stream.

def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent streams derived from a base seed (one per worker/replication)."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def derive_rng(seed: int, index: int) -> np.random.Generator:
    """The ``index``-th child stream of ``seed``; same result as ``derive_rngs(seed, n)[index]``."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_uniform(rng: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1)."""
    # random() is [0, 1); push the measure-zero 0 inside the interval
    return np.maximum(rng.random(size), np.finfo(float).tiny)


def sample_std_normal(rng: np.random.Generator, size=None):
    return rng.standard_normal(size)

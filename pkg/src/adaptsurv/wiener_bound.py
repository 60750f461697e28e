"""Brownian boundary-crossing probabilities and the worst-case level bound.

The monitored first-stage statistic, on the information scale
u = D1(t)/D1(Tmax), is ``B(u)/sqrt(u)`` with ``B`` a Brownian motion with drift
``xi`` per unit information.  Naively continuing first-stage follow-up and
stopping at the most favourable time rejects when
``w1 * B(u)/sqrt(u) + w2 * z2 > cutoff`` for some u in [u1, 1], i.e. when B
crosses ``c * sqrt(u)`` with ``c = (cutoff - w2 * z2) / w1``.

Crossing of the square-root boundary is computed by replacing it with the
piecewise-linear interpolant through a knot grid.  Given the path values at
consecutive knots, the probability of crossing a straight segment in between
is the Brownian-bridge factor ``exp(-2 (b0 - x0)(b1 - x1) / du)``, which does
not depend on the drift.  The sub-density of "not crossed yet" is carried
from knot to knot on Gauss-Legendre grids, so the cost is linear in the
number of knots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .combo_test import Weights
from .numerics import find_root, gl_nodes, norm_cdf, norm_quantile, norm_sf

DEFAULT_KNOTS = 16
OUTER_NODES = 64
Z_LIMIT = 8.0
# c outside this window: crossing probability is 1 (below) or 0 (above) to
# better than 1e-9 for any u1 >= 1e-3
C_LOW, C_HIGH = -6.5, 9.0


class InvalidBoundary(ValueError):
    """A boundary that starts at or below the origin of the process."""


@dataclass(frozen=True)
class LinearSegment:
    """Boundary ``a*u + b`` on the horizon (0, c]."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("segment horizon c must be positive")


@dataclass(frozen=True)
class BoundaryProblem:
    w1: float
    u1: float
    alpha: float
    drift: float = 0.0
    knots: int = DEFAULT_KNOTS

    def __post_init__(self):
        if not 0.0 < self.w1 <= 1.0:
            raise ValueError(f"w1 must be in (0, 1], got {self.w1}")
        if not 0.0 < self.u1 <= 1.0:
            raise ValueError(f"u1 must be in (0, 1], got {self.u1}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.knots < 2:
            raise ValueError("need at least 2 knots")

    @property
    def w2(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.w1 * self.w1))

    @property
    def grid(self) -> np.ndarray:
        return knot_grid(self.u1, self.knots)


@dataclass(frozen=True)
class PowerInputs:
    w: Weights
    d1_t1: float
    d1_tmax: float
    theta_r: float
    alpha: float
    k_star: float
    knots: int = DEFAULT_KNOTS

    def __post_init__(self):
        if not 0 < self.d1_t1 <= self.d1_tmax:
            raise ValueError("need 0 < D1(T1) <= D1(Tmax)")
        if self.theta_r < 0:
            raise ValueError("theta_R must be nonnegative")

    @property
    def u1(self) -> float:
        return self.d1_t1 / self.d1_tmax

    @property
    def drift(self) -> float:
        return self.theta_r * math.sqrt(self.d1_tmax / 4.0)


def knot_grid(u1: float, knots: int = DEFAULT_KNOTS) -> np.ndarray:
    """``knots`` points geometrically spaced on [u1, 1] (dense near u1)."""
    if u1 >= 1.0:
        return np.array([1.0])
    g = np.geomspace(u1, 1.0, knots)
    g[0], g[-1] = u1, 1.0
    return g


# --- exact single-segment results ------------------------------------------

def linear_noncross(seg: LinearSegment, drift: float = 0.0) -> float:
    """P{W(u) < a*u + b for all 0 < u <= c} for W a BM with drift started at 0.

    A drift ``mu`` is the same as a driftless path under the boundary with
    slope ``a - mu``.
    """
    if not seg.b > 0:
        raise InvalidBoundary(f"intercept must be positive, got {seg.b}")
    a = seg.a - drift
    b, c = seg.b, seg.c
    rc = math.sqrt(c)
    first = norm_cdf((a * c + b) / rc)
    # exp(-2ab) * Phi(.) in log space; exp(-2ab) alone overflows for a << 0
    second = math.exp(-2.0 * a * b + special.log_ndtr((a * c - b) / rc))
    return float(min(1.0, max(0.0, first - second)))


def bridge_cross(b0, x0, b1, x1, du):
    """Probability a Brownian bridge from x0 to x1 over ``du`` touches the
    straight line from b0 to b1 (endpoints below the line)."""
    return np.exp(-2.0 * (b0 - x0) * (b1 - x1) / du)


# --- piecewise-linear engine -------------------------------------------------

def _layer_nodes(du_min: float, width: float, resolution: float, max_nodes: int) -> int:
    # Gauss-Legendre spacing mid-interval is about pi*width/(2n); keep it a
    # fraction of the narrowest transition kernel sd
    n = int(math.ceil(math.pi * width / (2.0 * resolution * math.sqrt(du_min))))
    return int(min(max(n, 48), max_nodes))


def _below_mass(mass, x, b0, b1, lo, drift, step):
    """Mass moving from nodes ``x`` to below ``lo`` over ``step`` without touching
    the chord b0 -> b1.  Closed form: Gaussian kernel times the bridge factor."""
    m = x + drift * step
    sd = math.sqrt(step)
    a = b0 - x
    plain = norm_cdf((lo - m) / sd)
    touched = np.exp(-2.0 * a * (b1 - m - a) / step + special.log_ndtr((lo - m - 2.0 * a) / sd))
    return float(np.dot(mass, np.clip(plain - touched, 0.0, None)))


def _window(j, times, b, drift, tail):
    """Grid range at knot j: from the level below which crossing later is
    negligible (or the unconditional tail) up to the boundary."""
    t, horizon = times[j], times[-1] - times[j]
    reach = tail * math.sqrt(horizon) + max(drift, 0.0) * horizon
    floor = drift * t - tail * math.sqrt(t)
    lo = max(floor, float(b[j:].min()) - reach)
    hi = min(b[j], drift * t + tail * math.sqrt(t))
    # with an empty grid, the mass is either all below the boundary or all above it
    return lo, hi, floor < b[j]


def _noncross_batch(times, bounds, drift, *, tail=8.0, resolution=0.5, max_nodes=900):
    """Vectorised no-crossing probability for a batch of piecewise-linear boundaries.

    ``times`` has shape (m+1,), ``bounds`` shape (B, m+1).  When
    ``times[0] == 0`` the path starts at 0 (boundary must start above 0);
    otherwise B(times[0]) ~ N(drift*t0, t0) and monitoring starts there.
    Paths that fall ``tail`` standard deviations of the remaining horizon
    below every later knot are counted as survivors and dropped from the grid.
    """
    times = np.asarray(times, dtype=float)
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    nb, m1 = bounds.shape
    if m1 != times.size:
        raise ValueError("bounds and times disagree in length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("knot times must be strictly increasing")
    du = np.diff(times)
    out = np.zeros(nb)

    if times[0] == 0.0:
        if np.any(bounds[:, 0] <= 0):
            raise InvalidBoundary("boundary must start above the origin")
        if m1 == 1:
            return np.ones(nb)
    if m1 == 1:
        sd = math.sqrt(times[0])
        return norm_cdf((bounds[:, 0] - drift * times[0]) / sd)

    for k in range(nb):
        b = bounds[k]
        mass, x, start, safe = _initial_layer(times, b, drift, du, tail, resolution, max_nodes)
        for i in range(start, m1 - 1):
            if mass is None:
                break
            j = i + 1
            step = du[i]
            lo, hi, alive = _window(j, times, b, drift, tail)
            if hi <= lo:
                if alive:
                    safe += _below_mass(mass, x, b[i], b[j], b[j], drift, step)
                mass = None
                break
            safe += _below_mass(mass, x, b[i], b[j], lo, drift, step)
            du_next = du[j] if j < m1 - 1 else du[i]
            n = _layer_nodes(min(du[i], du_next), hi - lo, resolution, max_nodes)
            y, wy = gl_nodes(lo, hi, n)
            diff = y[None, :] - x[:, None] - drift * step
            kern = np.exp(-0.5 * diff * diff / step) / math.sqrt(2.0 * math.pi * step)
            kill = 1.0 - bridge_cross(b[i], x[:, None], b[j], y[None, :], step)
            dens = mass @ (kern * kill)
            mass, x = dens * wy, y
        out[k] = safe + (0.0 if mass is None else float(mass.sum()))
    return np.clip(out, 0.0, 1.0)


def _initial_layer(times, b, drift, du, tail, resolution, max_nodes):
    """Weighted sub-density at the first knot whose law is continuous, plus the
    survivor mass already below the grid.  Mass is None when nothing is left
    on the grid."""
    if times[0] == 0.0:
        # point mass at 0: propagate analytically onto knot 1
        t1 = times[1]
        lo, hi, alive = _window(1, times, b, drift, tail)
        one, origin = np.ones(1), np.zeros(1)
        if hi <= lo:
            safe = _below_mass(one, origin, b[0], b[1], b[1], drift, t1) if alive else 0.0
            return None, None, 1, safe
        safe = _below_mass(one, origin, b[0], b[1], lo, drift, t1)
        du_next = du[1] if du.size > 1 else du[0]
        n = _layer_nodes(min(du[0], du_next), hi - lo, resolution, max_nodes)
        y, wy = gl_nodes(lo, hi, n)
        dens = (np.exp(-0.5 * (y - drift * t1) ** 2 / t1) / math.sqrt(2 * math.pi * t1)
                * (1.0 - bridge_cross(b[0], 0.0, b[1], y, t1)))
        return dens * wy, y, 1, safe
    t0 = times[0]
    sd = math.sqrt(t0)
    lo, hi, alive = _window(0, times, b, drift, tail)
    if hi <= lo:
        safe = float(norm_cdf((b[0] - drift * t0) / sd)) if alive else 0.0
        return None, None, 0, safe
    safe = float(norm_cdf((lo - drift * t0) / sd))
    n = _layer_nodes(du[0], hi - lo, resolution, max_nodes)
    x, wx = gl_nodes(lo, hi, n)
    dens = np.exp(-0.5 * ((x - drift * t0) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    return dens * wx, x, 0, safe


def piecewise_noncross(times, bounds, drift: float = 0.0, **engine) -> float:
    """P{path stays below the piecewise-linear boundary through (times, bounds)}.

    If ``times[0] == 0`` the path is pinned at the origin there; otherwise
    B(times[0]) is drawn from its unconditional law and only the horizon
    [times[0], times[-1]] is monitored.
    """
    return float(_noncross_batch(times, np.asarray(bounds, float)[None, :], drift, **engine)[0])


def sqrt_noncross_curve(cs, u1: float, drift: float = 0.0, knots: int = DEFAULT_KNOTS, **engine):
    """No-crossing probability of ``c*sqrt(u)`` on [u1, 1] for each c in ``cs``."""
    cs = np.atleast_1d(np.asarray(cs, dtype=float))
    if u1 >= 1.0:
        return norm_cdf(cs - drift)
    g = knot_grid(u1, knots)
    return _noncross_batch(g, cs[:, None] * np.sqrt(g)[None, :], drift, **engine)


def sqrt_crossing_given_p2(bp: BoundaryProblem, cutoff: float, p2: float, **engine) -> float:
    """Probability that the monitored combination statistic exceeds ``cutoff``
    somewhere on [u1, 1], given the second-stage p-value."""
    z2 = norm_quantile(1.0 - p2)
    c = (cutoff - bp.w2 * z2) / bp.w1
    return float(1.0 - sqrt_noncross_curve([c], bp.u1, bp.drift, bp.knots, **engine)[0])


def _z_window(w1: float, w2: float, cutoff: float) -> tuple[float, float]:
    # z range where c = (cutoff - w2 z)/w1 lies in [C_LOW, C_HIGH]
    if w2 == 0.0:
        return -Z_LIMIT, -Z_LIMIT
    z_lo = (cutoff - w1 * C_HIGH) / w2
    z_hi = (cutoff - w1 * C_LOW) / w2
    return max(z_lo, -Z_LIMIT), min(z_hi, Z_LIMIT)


def crossing_integral(w1: float, u1: float, cutoff: float, drift: float = 0.0,
                      knots: int = DEFAULT_KNOTS, nodes: int = OUTER_NODES, **engine) -> float:
    """P{max over [u1,1] of w1*B(u)/sqrt(u) + w2*Z2 > cutoff}, Z2 ~ N(0,1) independent.

    For z2 beyond the window where the crossing probability is numerically 0/1
    the normal weight is integrated in closed form.
    """
    if not 0.0 < w1 <= 1.0:
        raise ValueError("w1 must be in (0, 1]")
    w2 = math.sqrt(max(0.0, 1.0 - w1 * w1))
    z_lo, z_hi = _z_window(w1, w2, cutoff)
    if w2 == 0.0:
        return float(1.0 - sqrt_noncross_curve([cutoff], u1, drift, knots, **engine)[0])
    total = float(norm_sf(z_hi))  # c < C_LOW: certain crossing
    if z_hi > z_lo:
        z, wz = gl_nodes(z_lo, z_hi, nodes)
        c = (cutoff - w2 * z) / w1
        cross = 1.0 - sqrt_noncross_curve(c, u1, drift, knots, **engine)
        total += float(np.dot(wz, cross * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)))
    return min(1.0, total)


def worst_case_alpha(w1: float, u1: float, alpha: float, knots: int = DEFAULT_KNOTS, **engine) -> float:
    """Type I error if first-stage follow-up may stop at its most favourable time."""
    if not 0.0 < u1 <= 1.0:
        raise ValueError("u1 must be in (0, 1]")
    return crossing_integral(w1, u1, norm_quantile(1.0 - alpha), 0.0, knots, **engine)


# --- cached curve in c, used for root finding --------------------------------

@lru_cache(maxsize=256)
def _curve_spline(u1: float, drift: float, knots: int, step: float) -> CubicSpline:
    cs = np.arange(C_LOW, C_HIGH + 0.5 * step, step)
    return CubicSpline(cs, 1.0 - sqrt_noncross_curve(cs, u1, drift, knots))


def crossing_integral_fast(w1: float, u1: float, cutoff: float, drift: float = 0.0,
                           knots: int = DEFAULT_KNOTS, nodes: int = 128, step: float = 0.05) -> float:
    """:func:`crossing_integral` via a cached spline of the crossing curve in c."""
    w2 = math.sqrt(max(0.0, 1.0 - w1 * w1))
    spline = _curve_spline(float(u1), float(drift), int(knots), float(step))
    if w2 == 0.0:
        return float(np.clip(spline(min(max(cutoff, C_LOW), C_HIGH)), 0.0, 1.0))
    z_lo, z_hi = _z_window(w1, w2, cutoff)
    total = float(norm_sf(z_hi))
    if z_hi > z_lo:
        z, wz = gl_nodes(z_lo, z_hi, nodes)
        cross = np.clip(spline((cutoff - w2 * z) / w1), 0.0, 1.0)
        total += float(np.dot(wz, cross * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)))
    return min(1.0, total)


def corrected_kstar(w1: float, u1: float, alpha: float, knots: int = DEFAULT_KNOTS,
                    tol: float = 1e-6) -> float:
    """Cutoff for the naive statistic Z* that restores level ``alpha`` under worst-case stopping."""
    base = norm_quantile(1.0 - alpha)
    if u1 >= 1.0:
        return base

    def excess(k):
        return crossing_integral_fast(w1, u1, k, 0.0, knots) - alpha

    if excess(base) <= 0.0:
        return base
    return find_root(excess, base, 6.0, tol)


def kstar_table(w1_grid, u1_grid, alpha: float, knots: int = DEFAULT_KNOTS) -> np.ndarray:
    """k* for every (w1, u1); rows follow ``w1_grid``, columns ``u1_grid``."""
    w1_grid, u1_grid = list(w1_grid), list(u1_grid)
    if not w1_grid or not u1_grid:
        raise ValueError("grids must be nonempty")
    out = np.empty((len(w1_grid), len(u1_grid)))
    for j, u1 in enumerate(u1_grid):
        for i, w1 in enumerate(w1_grid):
            out[i, j] = corrected_kstar(w1, u1, alpha, knots)
    return out


# --- power --------------------------------------------------------------------

def _fixed_time_power(pi: PowerInputs, p2: float, cutoff: float, events: float) -> float:
    w1, w2 = pi.w.w1, pi.w.w2
    z2 = norm_quantile(1.0 - p2)
    mean = pi.theta_r * math.sqrt(events) / 2.0
    return float(norm_sf((cutoff - w2 * z2) / w1 - mean))


def power_A(pi: PowerInputs, p2: float) -> float:
    """Conditional power of the adaptive test with first stage frozen at T1."""
    return _fixed_time_power(pi, p2, norm_quantile(1.0 - pi.alpha), pi.d1_t1)


def power_B(pi: PowerInputs, p2: float) -> float:
    """As A but against k*: the corrected test when the trial ends as planned."""
    return _fixed_time_power(pi, p2, pi.k_star, pi.d1_t1)


def power_C(pi: PowerInputs, p2: float) -> float:
    """Corrected test with all first-stage events observed (t = Tmax)."""
    return _fixed_time_power(pi, p2, pi.k_star, pi.d1_tmax)


def power_D(pi: PowerInputs, p2: float, **engine) -> float:
    """Corrected test evaluated at the maximum of the monitored statistic."""
    bp = BoundaryProblem(pi.w.w1, pi.u1, pi.alpha, pi.drift, pi.knots)
    return sqrt_crossing_given_p2(bp, pi.k_star, p2, **engine)

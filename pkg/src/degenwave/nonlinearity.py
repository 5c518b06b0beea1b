"""Source terms, their potential functional, and the explicit constants.

Two source families act on the displacement y:

    pointwise power   f(y) = |y|^q y,                    q > 0,
    nonlocal L2       f(y) = ||y||_{L2(0,1)}^p y,        p >= 1.

Both satisfy f(0) = 0, a local Lipschitz estimate

    ||f(u) - f(v)||_{L2_{1/a}} <= L(r) ||u'' - v''||_{L2}

on curvature balls of radius r, and a sign/growth bound

    <f(u), u>_{L2_{1/a}} <= h(||u''||) ||u''||^2

with h(x) = c x^m strictly increasing.  The explicit constants combine the
power exponents with the best constant C_HP of the weighted embedding

    int u^2 / a dx <= C_HP ||u''||^2   on {u(0) = u'(0) = 0},

computed here as the top eigenvalue of a generalized eigenproblem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .degeneracy import CoefficientProfile
from .errors import EigSolveFailureError
from .grids import Grid
from .operators import curvature_quadrature, weighted_mass_diagonal

SOURCE_NONE = "none"
SOURCE_POWER = "power"
SOURCE_NONLOCAL = "nonlocal"


@dataclass(frozen=True)
class SourceKind:
    """Disabled source, pointwise power, or nonlocal-L2 source."""

    kind: str
    q: Optional[float] = None
    p: Optional[float] = None

    @classmethod
    def none(cls) -> "SourceKind":
        return cls(kind=SOURCE_NONE)

    @classmethod
    def power(cls, q: float) -> "SourceKind":
        if not q > 0:
            raise ValueError("power source needs q > 0")
        return cls(kind=SOURCE_POWER, q=float(q))

    @classmethod
    def nonlocal_l2(cls, p: float) -> "SourceKind":
        if not p >= 1:
            raise ValueError("nonlocal source needs p >= 1")
        return cls(kind=SOURCE_NONLOCAL, p=float(p))

    @property
    def is_none(self) -> bool:
        return self.kind == SOURCE_NONE

    @property
    def exponent(self) -> float:
        if self.kind == SOURCE_POWER:
            return self.q
        if self.kind == SOURCE_NONLOCAL:
            return self.p
        return 0.0


def cq_factor(q: float) -> float:
    """Convexity constant in (|y|+|z|)^{2q} <= C_q (|y|^{2q} + |z|^{2q})."""
    return 2.0 ** (2.0 * q - 1.0) if q >= 0.5 else 1.0


@dataclass(frozen=True)
class NonlinearityConstants:
    """C_HP, max a, and the source-specific convexity constants."""

    c_hp: float
    a_max: float
    c_q: Optional[float] = None
    d_p: Optional[float] = None


def constants_for(source: SourceKind, profile: CoefficientProfile,
                  c_hp: Optional[float] = None) -> NonlinearityConstants:
    """Assemble the constants bundle; C_HP is computed unless supplied."""
    if c_hp is None:
        c_hp = hardy_poincare_constant(profile.grid, profile)
    a_max = profile.a_max
    if source.kind == SOURCE_POWER:
        return NonlinearityConstants(c_hp=c_hp, a_max=a_max, c_q=cq_factor(source.q))
    if source.kind == SOURCE_NONLOCAL:
        c_half = cq_factor(source.p / 2.0)
        d_p = 2.0 * source.p ** 2 * c_half ** 2 * a_max ** (source.p - 1.0)
        return NonlinearityConstants(c_hp=c_hp, a_max=a_max, d_p=d_p)
    return NonlinearityConstants(c_hp=c_hp, a_max=a_max)


# -- pointwise evaluation ----------------------------------------------------

def eval_f(source: SourceKind, y: np.ndarray, grid: Grid) -> np.ndarray:
    """f(y) as a nodal function; the nonlocal norm uses the trapezoid rule."""
    y = np.asarray(y, dtype=float)
    if source.kind == SOURCE_NONE:
        return np.zeros_like(y)
    if source.kind == SOURCE_POWER:
        return np.abs(y) ** source.q * y
    norm_sq = grid.trapezoid(y * y)
    return norm_sq ** (source.p / 2.0) * y


def weighted_l2_norm(y: np.ndarray, profile: CoefficientProfile) -> float:
    """||y||_{L2_{1/a}} by the composite midpoint rule (x = 0 never touched)."""
    grid = profile.grid
    y = np.asarray(y, dtype=float)
    mid_vals = 0.5 * (y[:-1] + y[1:])
    a_mid = profile.value_at(grid.midpoints)
    return float(np.sqrt(grid.h * np.sum(mid_vals * mid_vals / a_mid)))


def weighted_inner(y: np.ndarray, z: np.ndarray, profile: CoefficientProfile) -> float:
    """<y, z>_{L2_{1/a}} by the composite midpoint rule."""
    grid = profile.grid
    ym = 0.5 * (np.asarray(y, float)[:-1] + np.asarray(y, float)[1:])
    zm = 0.5 * (np.asarray(z, float)[:-1] + np.asarray(z, float)[1:])
    a_mid = profile.value_at(grid.midpoints)
    return float(grid.h * np.sum(ym * zm / a_mid))


def eval_F_functional(source: SourceKind, y: np.ndarray, profile: CoefficientProfile,
                      weighted: bool) -> float:
    """The potential integral: int F(y)/a dx (weighted) or int F(y) dx.

    F(y) = int_0^y f(s) ds pointwise for the power source.  For the nonlocal
    source F is taken along the ray s -> s y, giving the closed form
    (1/(p+2)) ||y||_{L2}^p <y, y> with the pairing in the weighted or plain
    L2 product; this is the quantity the energy functional subtracts.
    """
    y = np.asarray(y, dtype=float)
    grid = profile.grid
    if source.kind == SOURCE_NONE:
        return 0.0
    if source.kind == SOURCE_POWER:
        q = source.q
        if weighted:
            mid_vals = 0.5 * (y[:-1] + y[1:])
            a_mid = profile.value_at(grid.midpoints)
            integrand = np.abs(mid_vals) ** (q + 2.0) / (q + 2.0) / a_mid
            return float(grid.h * np.sum(integrand))
        return grid.trapezoid(np.abs(y) ** (q + 2.0) / (q + 2.0))
    p = source.p
    norm_l2 = math.sqrt(max(grid.trapezoid(y * y), 0.0))
    if weighted:
        pairing = weighted_inner(y, y, profile)
    else:
        pairing = grid.trapezoid(y * y)
    return norm_l2 ** p * pairing / (p + 2.0)


# -- explicit constants --------------------------------------------------------

def lipschitz_bound(source: SourceKind, constants: NonlinearityConstants,
                    r: float) -> float:
    """L(r) for the weighted (non-divergence beam) setting."""
    if not r > 0:
        raise ValueError("radius must be positive")
    if source.kind == SOURCE_NONE:
        return 0.0
    c = 4.0 * constants.c_hp + 1.0
    if source.kind == SOURCE_POWER:
        q = source.q
        return math.sqrt((2.0 / 3.0) * (q + 1.0) ** 2 * constants.c_q * c) * r ** q
    p = source.p
    a_max = constants.a_max
    return math.sqrt(2.0 * a_max * c ** (p + 1.0)
                     * (a_max ** (p - 1.0) + 2.0 * constants.d_p)) * r ** p


def h_coefficients(source: SourceKind, constants: NonlinearityConstants):
    """(c, m) of the growth gauge h(x) = c x^m."""
    if source.kind == SOURCE_NONE:
        return 0.0, 1.0
    c_embed = 4.0 * constants.c_hp + 1.0
    if source.kind == SOURCE_POWER:
        return (2.0 / 3.0) ** source.q * c_embed, source.q
    p = source.p
    return constants.a_max ** (p / 2.0) * c_embed ** (p / 2.0 + 1.0), p


def h_eval(source: SourceKind, constants: NonlinearityConstants, x: float) -> float:
    if x < 0:
        raise ValueError("h is defined on x >= 0")
    c, m = h_coefficients(source, constants)
    return c * x ** m


def h_inverse(source: SourceKind, constants: NonlinearityConstants, y: float) -> float:
    if y < 0:
        raise ValueError("h_inverse is defined on y >= 0")
    c, m = h_coefficients(source, constants)
    if c == 0.0:
        return math.inf
    return (y / c) ** (1.0 / m)


def hardy_poincare_constant(grid: Grid, profile: CoefficientProfile) -> float:
    """Best discrete constant of  int u^2/a <= C_HP ||u''||^2  on the clamped space.

    Largest eigenvalue of the generalized problem  M_w u = lambda K_s u  with
    M_w the 1/a-weighted mass and K_s the curvature seminorm form; both act on
    nodes 1..n-1 of the space {u(0) = u'(0) = 0}.
    """
    rows, wts = curvature_quadrature(grid)
    rows = rows[:, 1:]
    ks = rows.T @ (wts[:, None] * rows)
    mw = np.diag(weighted_mass_diagonal(grid, profile))
    try:
        eigvals = scipy.linalg.eigh(mw, ks, eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:  # pragma: no cover
        raise EigSolveFailureError(str(exc)) from exc
    top = float(eigvals[-1])
    if not np.isfinite(top) or top <= 0:
        raise EigSolveFailureError(f"nonpositive or non-finite top eigenvalue {top}")
    return top


def curvature_seminorm(grid: Grid, u_full: np.ndarray) -> float:
    """||u''|| of a nodal function in the clamped space {u(0)=u'(0)=0}."""
    rows, wts = curvature_quadrature(grid)
    cu = rows @ np.asarray(u_full, dtype=float)
    return float(np.sqrt(wts @ (cu * cu)))


def empirical_growth_constant(source: SourceKind, generator, samples) -> float:
    """Sampled sup of <f(u), u> / ||u||_s^{m+2} in a generator's own pairing.

    The explicit constants above are derived for the weighted clamped-beam
    seminorm; for the other operator kinds the sign/growth hypothesis is
    verified in inequality form by sampling: a finite, grid-stable supremum
    certifies a gauge h(x) = C x^m for that kind's seminorm (||sqrt(a)u''||,
    ||u'|| or ||sqrt(a)u'||).  `samples` are full nodal displacement vectors.
    """
    m = source.exponent
    grid = generator.grid
    profile = generator.profile
    sup = 0.0
    for u_full in samples:
        u_full = np.asarray(u_full, dtype=float)
        fu = eval_f(source, u_full, grid)
        if generator.kind.weighted_velocity:
            pairing = weighted_inner(fu, u_full, profile)
        else:
            pairing = grid.trapezoid(fu * u_full)
        semi = generator.elastic_seminorm(generator.restrict(u_full))
        if semi > 1e-12:
            sup = max(sup, pairing / semi ** (m + 2.0))
    return sup


def sobolev_pointwise_bound_check(u_full: np.ndarray, grid: Grid,
                                  rtol: float = 0.05, atol: float = 1e-12) -> bool:
    """Check |u(x_i)| <= (2/3) x_i^{3/2} ||u''|| at every node (with slack).

    The multiplicative slack absorbs the O(h^{3/2}) defect of the discrete
    double-integration chain near x = 0.
    """
    u = np.asarray(u_full, dtype=float)
    bound = (2.0 / 3.0) * grid.nodes ** 1.5 * curvature_seminorm(grid, u)
    return bool(np.all(np.abs(u) <= bound * (1.0 + rtol) + atol))

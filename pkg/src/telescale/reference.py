"""Synthesis of the limit processes, for distributional comparison with simulated loads.

All generators return values on the requested grid with value 0 at time 0.
Batches of independent paths are produced with ``n_paths``; values then
have shape ``(n_paths, len(grid))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .regime import FBM, LimitLaw, ModerateY, StableLevy, StableSSSI
from .samplers import RateLaw, _check_stable_alpha, sample_stable_skewed
from .tabular import write_table
from .traffic import check_grid, occupancy

CHOLESKY_MAX_POINTS = 2**10


@dataclass(frozen=True)
class ReferencePath:
    grid: np.ndarray
    values: np.ndarray
    law: LimitLaw
    method: str
    error_bound: float = 0.0

    def write(self, fh: TextIO) -> None:
        vals = np.atleast_2d(self.values)
        cols = {"t": self.grid}
        if vals.shape[0] == 1:
            cols["value"] = vals[0]
        else:
            cols.update({f"value_{i}": v for i, v in enumerate(vals)})
        meta = {"kind": "reference_path", "law": self.law.name, "method": self.method, "error_bound": self.error_bound}
        write_table(fh, cols, meta)


def _origin_grid(grid) -> np.ndarray:
    grid = check_grid(grid)
    if grid[0] != 0.0:
        raise ValueError("reference grids must start at t = 0")
    return grid


def _uniform_step(grid: np.ndarray) -> float:
    steps = np.diff(grid)
    if steps.size == 0:
        raise ValueError("grid needs at least two points")
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValueError("fractional Brownian motion synthesis needs an equally spaced grid")
    return float(steps[0])


def fgn_autocovariance(hurst: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


def fbm_path(hurst: float, sigma2: float, grid, rng: np.random.Generator, n_paths=None, method: str = "circulant") -> ReferencePath:
    """Fractional Brownian motion with ``Var X(t) = sigma2 * t**(2H)``.

    Increments come from circulant embedding of the fractional Gaussian
    noise covariance (exact in distribution).  Small grids fall back to a
    dense Cholesky factor of the path covariance if the embedding is not
    nonnegative definite.
    """
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"Hurst exponent must lie in (1/2, 1), got {hurst}")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    grid = _origin_grid(grid)
    dt = _uniform_step(grid)
    m = grid.size - 1
    count = 1 if n_paths is None else int(n_paths)
    law = FBM(hurst=hurst, sigma2=sigma2, rate_second_moment=1.0)

    if method == "circulant":
        gamma = fgn_autocovariance(hurst, m + 1)
        row = np.concatenate((gamma, gamma[-2:0:-1]))
        eig = np.fft.fft(row).real
        if eig.min() >= -1e-10 * eig.max():
            incs = _circulant_draw(np.maximum(eig, 0.0), m, count, rng)
            values = _integrate(incs * math.sqrt(sigma2) * dt**hurst)
            return ReferencePath(grid, values[0] if n_paths is None else values, law, "circulant")
        method = "cholesky-fallback"
    elif method != "cholesky":
        raise ValueError(f"unknown method {method!r}")

    if grid.size > CHOLESKY_MAX_POINTS:
        raise ValueError(f"Cholesky synthesis is limited to {CHOLESKY_MAX_POINTS} grid points")
    t = grid[1:]
    h2 = 2.0 * hurst
    cov = 0.5 * sigma2 * (t[:, None] ** h2 + t[None, :] ** h2 - np.abs(t[:, None] - t[None, :]) ** h2)
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((count, m))
    values = np.concatenate((np.zeros((count, 1)), z @ chol.T), axis=1)
    return ReferencePath(grid, values[0] if n_paths is None else values, law, method)


def _circulant_draw(eig: np.ndarray, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    size = eig.size
    pairs = (count + 1) // 2
    xi = rng.standard_normal((pairs, size)) + 1j * rng.standard_normal((pairs, size))
    y = np.fft.fft(np.sqrt(eig / size) * xi, axis=1)[:, :m]
    # real and imaginary parts are independent draws
    return np.concatenate((y.real, y.imag), axis=0)[:count]


def _integrate(increments: np.ndarray) -> np.ndarray:
    incs = np.atleast_2d(increments)
    return np.concatenate((np.zeros((incs.shape[0], 1)), np.cumsum(incs, axis=1)), axis=1)


def stable_levy_path(alpha: float, scale: float, grid, rng: np.random.Generator, n_paths=None) -> ReferencePath:
    """Totally right-skewed stable Levy motion; ``X(t') - X(t) ~ scale (t'-t)**(1/alpha) * unit``."""
    _check_stable_alpha(alpha)
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    grid = _origin_grid(grid)
    count = 1 if n_paths is None else int(n_paths)
    dt = np.diff(grid)
    unit = sample_stable_skewed(alpha, 1.0, rng, (count, dt.size)) if scale > 0 else np.zeros((count, dt.size))
    values = _integrate(scale * dt ** (1.0 / alpha) * unit)
    law = StableLevy(alpha, scale)
    return ReferencePath(grid, values[0] if n_paths is None else values, law, "independent-increments")


# --- moderate-growth limit ------------------------------------------------------


def moderate_truncation_bound(c: float, alpha: float, rate: RateLaw, t_max: float, eps: float) -> float:
    """Upper bound on the variance carried by the omitted sessions ``u <= eps``.

    Uses ``int L_t(s, u)**2 ds <= t u**2`` for ``u <= t``.
    """
    kappa = c ** (alpha - 1.0)
    return kappa * rate.moment(2.0) * t_max * alpha * eps ** (2.0 - alpha) / (2.0 - alpha)


def _moderate_points(kappa, alpha, rate, t_max, eps, rng, count):
    # points of kappa ds alpha u**(-alpha-1) du F_R(dr) with u > eps and s in (-u, t_max)
    mass_long = alpha * eps ** (1.0 - alpha) / (alpha - 1.0)
    mass_short = t_max * eps**-alpha
    mass = kappa * (mass_long + mass_short)
    n = rng.poisson(mass, count)
    total = int(n.sum())
    path = np.repeat(np.arange(count), n)
    long_branch = rng.random(total) < mass_long / (mass_long + mass_short)
    v = 1.0 - rng.random(total)
    u = np.where(long_branch, eps * v ** (-1.0 / (alpha - 1.0)), eps * v ** (-1.0 / alpha))
    s = -u + (u + t_max) * rng.random(total)
    r = np.asarray(rate.sample(rng, total), dtype=float)
    return path, s, u, r


def _moderate_values(kappa, alpha, rate, grid, eps, points, count, min_u):
    path, s, u, r = points
    keep = u > min_u
    path, s, u, r = path[keep], s[keep], u[keep], r[keep]
    compensator_rate = kappa * rate.mean * alpha * min_u ** (1.0 - alpha) / (alpha - 1.0)
    values = np.zeros((count, grid.size))
    for k, t in enumerate(grid):
        if t == 0:
            continue
        w = r * occupancy(t, s, u)
        values[:, k] = np.bincount(path, weights=w, minlength=count) - compensator_rate * t
    return values


def _check_moderate(c, alpha, grid, eps):
    if not c > 0:
        raise ValueError("c must be positive")
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"duration index must lie in (1, 2), got {alpha}")
    grid = _origin_grid(grid)
    if not eps > 0:
        raise ValueError("truncation level must be positive")
    if eps >= grid[-1]:
        raise ValueError("truncation level must be below the grid horizon")
    return grid


def moderate_y_path(c: float, alpha: float, rate: RateLaw, grid, eps: float, rng: np.random.Generator, n_paths=None) -> ReferencePath:
    """``c * Y(t / c)`` as a compensated Poisson integral truncated to durations above ``eps``.

    Equivalently the integral of ``r * L_t(s, u)`` against the compensated
    random measure with intensity ``c**(alpha-1) ds alpha u**(-alpha-1) du F_R(dr)``.
    ``error_bound`` bounds the variance of the omitted part.
    """
    grid = _check_moderate(c, alpha, grid, eps)
    count = 1 if n_paths is None else int(n_paths)
    kappa = c ** (alpha - 1.0)
    points = _moderate_points(kappa, alpha, rate, grid[-1], eps, rng, count)
    values = _moderate_values(kappa, alpha, rate, grid, eps, points, count, eps)
    bound = moderate_truncation_bound(c, alpha, rate, grid[-1], eps)
    return ReferencePath(grid, values[0] if n_paths is None else values, ModerateY(c, alpha, rate), "truncated-poisson", bound)


def moderate_y_truncation_pair(c, alpha, rate, grid, eps, rng, n_paths):
    """Coupled paths truncated at ``eps`` and ``eps / 2`` built from one point set."""
    grid = _check_moderate(c, alpha, grid, eps)
    kappa = c ** (alpha - 1.0)
    points = _moderate_points(kappa, alpha, rate, grid[-1], eps / 2.0, rng, n_paths)
    law = ModerateY(c, alpha, rate)
    out = []
    for level in (eps, eps / 2.0):
        vals = _moderate_values(kappa, alpha, rate, grid, level, points, n_paths, level)
        out.append(ReferencePath(grid, vals, law, "truncated-poisson", moderate_truncation_bound(c, alpha, rate, grid[-1], level)))
    return tuple(out)


# --- marginals of the stable self-similar limit -----------------------------------


def sssi_jump_mass(alpha_R: float, alpha_D: float) -> float:
    """``K = int int L_1(s, u)**alpha_R ds alpha_D u**(-alpha_D-1) du``.

    The jumps ``r * L_1(s, u)`` of the unit-time integral have Levy measure
    ``K alpha_R x**(-alpha_R-1) dx``.
    """
    p, a = alpha_R, alpha_D
    if not 1.0 < a < p < 2.0:
        raise ValueError("need 1 < alpha_D < alpha_R < 2")
    short = a * (2.0 / ((p + 1.0) * (p + 1.0 - a)) + 1.0 / (p - a) - 1.0 / (p + 1.0 - a))
    long = (2.0 / (p + 1.0) - 1.0) + a / (a - 1.0)
    return short + long


def stable_sssi_marginal(alpha_R: float, hurst: float, t: float, n: int, rng: np.random.Generator, jump_floor: float = 0.05) -> np.ndarray:
    """``n`` draws of ``Z(t) = t**H Z(1)`` for the stable self-similar limit.

    ``Z(1)`` is the compensated sum of jumps above ``jump_floor * K**(1/alpha_R)``
    (Poisson count, Pareto sizes) plus a variance-matched Gaussian for the
    jumps below it.
    """
    _check_stable_alpha(alpha_R)
    if not 1.0 / alpha_R < hurst < 1.0:
        raise ValueError(f"Hurst exponent must lie in (1/alpha_R, 1), got {hurst}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return np.zeros(n)
    alpha_D = alpha_R + 1.0 - hurst * alpha_R
    K = sssi_jump_mass(alpha_R, alpha_D)
    delta = jump_floor * K ** (1.0 / alpha_R)
    counts = rng.poisson(K * delta**-alpha_R, n)
    sizes = delta * (1.0 - rng.random(int(counts.sum()))) ** (-1.0 / alpha_R)
    big = np.bincount(np.repeat(np.arange(n), counts), weights=sizes, minlength=n)
    compensator = K * alpha_R * delta ** (1.0 - alpha_R) / (alpha_R - 1.0)
    small_sd = math.sqrt(K * alpha_R * delta ** (2.0 - alpha_R) / (2.0 - alpha_R))
    z1 = big - compensator + small_sd * rng.standard_normal(n)
    return t**hurst * z1


def sssi_law(alpha_R: float, hurst: float) -> StableSSSI:
    return StableSSSI(alpha_R, hurst, alpha_R + 1.0 - hurst * alpha_R)

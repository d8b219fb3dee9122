"""Two-group mixture fit and local false discovery rate evaluation.

The standardized statistics are modeled as ``pi0 * f0 + (1 - pi0) * f1``
with a known (or empirically adjusted) null ``f0``. The fitted model
exposes three evaluators used by the selection procedures:

* ``lfdr(h)``            -- posterior null probability ``pi0 f0(h) / f(h)``
* ``weight_lfdr(h)``     -- same with the null density taken at
  ``max(h, 0)``, the least favorable placement of a non-positive effect;
  used only for the cost side of the knapsack.
* ``value_statistic(h, sigma)`` -- posterior expected lift
  ``lfdr(h) / lfdr(h + sigma) - 1``, which follows from the moment
  generating function of the posterior log-lift in an exponential-family
  model of the statistic.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import TooFewObservationsError

log = logging.getLogger(__name__)

MIN_OBSERVATIONS = 100
DEFAULT_GRID_POINTS = 1024
EPS_FLOOR = 1e-8
STOREY_LAMBDA = 0.5

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class LfdrModel:
    """Fitted mixture: null proportion, null density, marginal density.

    The marginal is tabulated on an equispaced grid and evaluated by linear
    interpolation; outside the grid the nearest endpoint value is used
    (kernel tails are unreliable and the value statistic probes ``h + sigma``
    beyond the observed support).
    """

    pi0: float
    null_mean: float
    null_sd: float
    grid: np.ndarray
    marginal_values: np.ndarray
    eps_floor: float = EPS_FLOOR
    method: str = "kernel"
    bandwidth: float = field(default=math.nan)

    @property
    def grid_lo(self) -> float:
        return float(self.grid[0])

    @property
    def grid_hi(self) -> float:
        return float(self.grid[-1])

    def marginal(self, h):
        """Marginal density f(h), clamped to the grid endpoints outside."""
        return np.interp(h, self.grid, self.marginal_values)

    def null_density(self, h):
        return norm.pdf(h, loc=self.null_mean, scale=self.null_sd)

    # Unclamped evaluators, used internally and by diagnostics.
    def _raw_lfdr(self, h):
        return self.pi0 * self.null_density(h) / self.marginal(h)

    def _raw_weight_lfdr(self, h):
        return self.pi0 * self.null_density(np.maximum(h, 0.0)) / self.marginal(h)

    @classmethod
    def from_densities(cls, pi0, marginal_pdf, *, null_mean=0.0, null_sd=1.0,
                       grid_lo=-10.0, grid_hi=10.0,
                       grid_points=2 * DEFAULT_GRID_POINTS,
                       eps_floor=EPS_FLOOR) -> "LfdrModel":
        """Build a model directly from known densities (oracle mode)."""
        grid = np.linspace(grid_lo, grid_hi, grid_points)
        values = np.asarray(marginal_pdf(grid), dtype=float)
        return cls(pi0=float(pi0), null_mean=float(null_mean),
                   null_sd=float(null_sd), grid=grid, marginal_values=values,
                   eps_floor=eps_floor, method="oracle")


def _as_array(h, floor: int | None = None) -> np.ndarray:
    arr = np.asarray(h, dtype=float).ravel()
    if floor is not None and arr.size < floor:
        raise TooFewObservationsError(
            f"need at least {floor} statistics, got {arr.size}")
    return arr


def estimate_pi0(h, lam: float = STOREY_LAMBDA) -> float:
    """Null-proportion estimate from the fraction of clearly null tests.

    Storey's estimator at threshold ``lam`` on two-sided p-values
    ``2 * (1 - Phi(|h|))``: under the null these are uniform, so the count
    above ``lam`` scaled by ``1 / (1 - lam)`` estimates the null share.
    Two-sided p-values keep tests with negative effects (whose one-sided
    p-values pile up near 1) from inflating the estimate.
    """
    arr = _as_array(h, floor=MIN_OBSERVATIONS)
    if np.ptp(arr) == 0.0:
        warnings.warn("constant statistic vector: no signal to separate, "
                      "falling back to pi0 = 1.0")
        return 1.0
    pvals = 2.0 * norm.sf(np.abs(arr))
    est = np.count_nonzero(pvals > lam) / ((1.0 - lam) * arr.size)
    return float(min(1.0, max(est, 1.0 / arr.size)))


def _silverman_bandwidth(arr: np.ndarray) -> float:
    sd = float(np.std(arr))
    q75, q25 = np.percentile(arr, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = max(sd, 1e-6)
    return 0.9 * spread * arr.size ** (-0.2)


def _kde_on_grid(arr: np.ndarray, grid: np.ndarray, bw: float) -> np.ndarray:
    """Gaussian kernel density estimate evaluated on the grid."""
    out = np.zeros_like(grid)
    # Chunk the data axis so huge inputs do not allocate a grid x m matrix.
    step = max(1, int(4e6 / grid.size))
    for start in range(0, arr.size, step):
        block = arr[start:start + step]
        u = (grid[:, None] - block[None, :]) / bw
        out += np.exp(-0.5 * u * u).sum(axis=1)
    return out / (arr.size * bw * _SQRT_2PI)


def fit_marginal(h, *, pi0: float | None = None, null_mean: float = 0.0,
                 null_sd: float = 1.0,
                 grid_points: int = DEFAULT_GRID_POINTS) -> LfdrModel:
    """Kernel density fit of the marginal on an equispaced grid.

    The grid spans ``[min(h) - 3, max(h) + 3]``; the bandwidth follows
    Silverman's rule. ``pi0`` defaults to :func:`estimate_pi0` on the same
    data.
    """
    arr = _as_array(h, floor=MIN_OBSERVATIONS)
    if pi0 is None:
        pi0 = estimate_pi0(arr)
    bw = _silverman_bandwidth(arr)
    grid = np.linspace(arr.min() - 3.0, arr.max() + 3.0, grid_points)
    values = _kde_on_grid(arr, grid, bw)
    return LfdrModel(pi0=pi0, null_mean=null_mean, null_sd=null_sd,
                     grid=grid, marginal_values=values, method="kernel",
                     bandwidth=bw)


def _em_two_component(arr: np.ndarray, *, free_null: bool,
                      max_iter: int = 1000, tol: float = 1e-10):
    """Two-component Gaussian EM; component 0 is the null.

    With ``free_null=False`` the null stays pinned at N(0, 1) and only the
    weight and the alternative component are fitted.
    """
    m = arr.size
    pi0, mu0, sd0 = 0.8, 0.0, 1.0
    mu1 = float(np.mean(arr[np.abs(arr) > 1.0])) if np.any(np.abs(arr) > 1.0) \
        else float(np.mean(arr))
    sd1 = max(2.0, float(np.std(arr)))
    prev_ll = -np.inf
    for _ in range(max_iter):
        d0 = pi0 * norm.pdf(arr, mu0, sd0)
        d1 = (1.0 - pi0) * norm.pdf(arr, mu1, sd1)
        total = d0 + d1 + 1e-300
        resp0 = d0 / total
        ll = float(np.sum(np.log(total)))
        pi0 = float(np.clip(np.mean(resp0), 1e-6, 1.0 - 1e-6))
        w1 = 1.0 - resp0
        s1 = max(float(np.sum(w1)), 1e-12)
        mu1 = float(np.sum(w1 * arr) / s1)
        sd1 = max(1e-3, math.sqrt(float(np.sum(w1 * (arr - mu1) ** 2) / s1)))
        if free_null:
            s0 = max(float(np.sum(resp0)), 1e-12)
            mu0 = float(np.sum(resp0 * arr) / s0)
            sd0 = max(1e-3, math.sqrt(float(np.sum(resp0 * (arr - mu0) ** 2) / s0)))
        if abs(ll - prev_ll) < tol * (1.0 + abs(ll)):
            break
        prev_ll = ll
    # Whichever component carries more weight plays the null role.
    if free_null and pi0 < 0.5:
        pi0, mu0, sd0, mu1, sd1 = 1.0 - pi0, mu1, sd1, mu0, sd0
    return pi0, mu0, sd0, mu1, sd1


def fit_mixture_em(h, *, free_null: bool = False,
                   grid_points: int = DEFAULT_GRID_POINTS) -> LfdrModel:
    """Two-component Gaussian mixture fit of pi0 and the marginal."""
    arr = _as_array(h, floor=MIN_OBSERVATIONS)
    pi0, mu0, sd0, mu1, sd1 = _em_two_component(arr, free_null=free_null)
    grid = np.linspace(arr.min() - 3.0, arr.max() + 3.0, grid_points)
    values = (pi0 * norm.pdf(grid, mu0, sd0)
              + (1.0 - pi0) * norm.pdf(grid, mu1, sd1))
    return LfdrModel(pi0=pi0, null_mean=mu0, null_sd=sd0, grid=grid,
                     marginal_values=values, method="mixture-em")


def fit_model(h, mode: str = "kernel", empirical_null: bool = False,
              grid_points: int = DEFAULT_GRID_POINTS) -> LfdrModel:
    """Dispatch on the configured estimation mode.

    ``empirical_null`` replaces the theoretical N(0, 1) null with the
    dominant component of a free two-component EM fit.
    """
    if mode == "mixture-em":
        return fit_mixture_em(h, free_null=empirical_null,
                              grid_points=grid_points)
    if mode != "kernel":
        raise ValueError(f"unknown lfdr mode {mode!r}")
    if empirical_null:
        arr = _as_array(h, floor=MIN_OBSERVATIONS)
        pi0, mu0, sd0, _, _ = _em_two_component(arr, free_null=True)
        log.info("empirical null: mean=%.4f sd=%.4f pi0=%.4f", mu0, sd0, pi0)
        return fit_marginal(arr, pi0=pi0, null_mean=mu0, null_sd=sd0,
                            grid_points=grid_points)
    return fit_marginal(h, grid_points=grid_points)


def _clamp(model: LfdrModel, value):
    return np.clip(value, model.eps_floor, 1.0)


def lfdr(model: LfdrModel, h):
    """Posterior null probability, clamped to [eps_floor, 1]."""
    return _clamp(model, model._raw_lfdr(h))


def weight_lfdr(model: LfdrModel, h):
    """Null-weight variant with the null density taken at max(h, 0).

    Equals :func:`lfdr` for h >= 0 and is never smaller, so negative
    statistics are priced as if their effect were at the null boundary.
    """
    return _clamp(model, model._raw_weight_lfdr(h))


def value_statistic(model: LfdrModel, h, sigma):
    """Posterior expected lift ``lfdr(h) / lfdr(h + sigma) - 1``.

    Uses the unadjusted lfdr on both sides; the clamp floor keeps the
    denominator positive, so the result always exceeds -1. Dispersed tests
    (larger sigma) probe further into the signal-rich tail and earn a
    larger value when the lfdr is decreasing there.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    return lfdr(model, h) / lfdr(model, np.asarray(h) + sigma) - 1.0

"""Synthetic study harness: cohort generation, metrics, replication runs.

A cohort of ``m`` tests draws baseline conversion rates from a (truncated)
beta distribution; a fraction ``pi0`` of tests has no effect and the rest
split evenly between a fixed positive and negative absolute shift. Profit
weights come from a gamma distribution with unit mean, costs are a fixed
fraction of profit. Each replication regenerates the cohort, refits the
mixture model and runs every requested procedure; metrics are averaged
across replications with Monte Carlo standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import norm

from .errors import ConfigError
from .lfdr import LfdrModel, fit_model
from .lifts import ExperimentRecord, GroundTruth, statistics_for
from .selection import DecisionReport, run_procedure

PROCEDURES = ("uncorrected", "bh", "sc", "bcds", "rbl")

# Baseline rates are resampled until both shifted rates clear these bounds,
# which keeps every population lift finite.
RATE_FLOOR = 0.001
RATE_CEIL = 0.999


@dataclass(frozen=True)
class SimConfig:
    """Knobs of the synthetic study; defaults match the reference design."""

    m: int = 2000
    reps: int = 400
    n_per_arm: int = 5000
    pi0: float = 0.8
    effect_size: float = 0.01
    beta_shape2: float = 1.0
    gamma_sd: float = 1.0
    alpha: float = 0.05
    cost_ratio: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.reps < 1 or self.n_per_arm < 1:
            raise ConfigError("m, reps and n_per_arm must be positive")
        if not (0.0 < self.pi0 <= 1.0):
            raise ConfigError(f"pi0 must lie in (0, 1], got {self.pi0}")
        if self.effect_size <= 0:
            raise ConfigError("effect_size must be positive")
        if self.beta_shape2 <= 0:
            raise ConfigError("beta_shape2 must be positive")
        if self.gamma_sd < 0:
            raise ConfigError("gamma_sd must be non-negative")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.cost_ratio <= 0:
            raise ConfigError("cost_ratio must be positive")
        if self.effect_size + RATE_FLOOR >= RATE_CEIL:
            raise ConfigError("effect_size leaves no admissible rate range")


@dataclass(frozen=True)
class MetricsSummary:
    """Cohort-level outcomes (or their means across replications)."""

    fdr: float
    power_pct: float
    profit_pct: float
    net_profit: float
    rejections: float

    def as_dict(self) -> dict[str, float]:
        return {"fdr": self.fdr, "power_pct": self.power_pct,
                "profit_pct": self.profit_pct, "net_profit": self.net_profit,
                "rejections": self.rejections}


@dataclass(frozen=True)
class StudyResult:
    """Replication-averaged metrics per procedure."""

    config: SimConfig
    procedures: tuple[str, ...]
    mean: dict[str, MetricsSummary]
    se: dict[str, MetricsSummary] | None
    reps: int = field(default=0)


def draw_base_rates(rng: np.random.Generator, m: int, beta_shape2: float,
                    effect_size: float) -> np.ndarray:
    """Baseline rates from Beta(1, shape2), resampled until both shifted
    rates stay inside (RATE_FLOOR, RATE_CEIL)."""
    lo = RATE_FLOOR + effect_size
    hi = RATE_CEIL - effect_size
    p0 = rng.beta(1.0, beta_shape2, size=m)
    bad = (p0 <= lo) | (p0 >= hi)
    while np.any(bad):
        p0[bad] = rng.beta(1.0, beta_shape2, size=int(bad.sum()))
        bad = (p0 <= lo) | (p0 >= hi)
    return p0


def generate_cohort(cfg: SimConfig, rng: np.random.Generator
                    ) -> tuple[list[ExperimentRecord], list[GroundTruth]]:
    """One cohort of records plus its hidden truth.

    Draw order (part of the reproducibility contract): baseline rates,
    effect signs, control conversions, treatment conversions, profits.
    """
    p0 = draw_base_rates(rng, cfg.m, cfg.beta_shape2, cfg.effect_size)
    u = rng.random(cfg.m)
    delta = np.where(u < cfg.pi0, 0.0,
                     np.where(u < cfg.pi0 + (1.0 - cfg.pi0) / 2.0,
                              cfg.effect_size, -cfg.effect_size))
    p1 = p0 + delta
    r0 = rng.binomial(cfg.n_per_arm, p0)
    r1 = rng.binomial(cfg.n_per_arm, p1)
    if cfg.gamma_sd > 0:
        shape = 1.0 / cfg.gamma_sd ** 2
        profit = rng.gamma(shape, scale=cfg.gamma_sd ** 2, size=cfg.m)
    else:
        profit = np.ones(cfg.m)
    cost = cfg.cost_ratio * profit

    records, truths = [], []
    for i in range(cfg.m):
        records.append(ExperimentRecord(
            id=f"t{i:05d}", n0=cfg.n_per_arm, R0=int(r0[i]),
            n1=cfg.n_per_arm, R1=int(r1[i]),
            profit=float(profit[i]), cost=float(cost[i])))
        lift = p1[i] / p0[i] - 1.0
        truths.append(GroundTruth(p0=float(p0[i]), p1=float(p1[i]),
                                  lift=float(lift), theta=int(lift > 0)))
    return records, truths


def compute_metrics(report: DecisionReport, truth: list[GroundTruth],
                    recs: list[ExperimentRecord],
                    cfg: SimConfig | None = None) -> MetricsSummary:
    """Realized outcomes of one cohort's decisions.

    FDR is cost-weighted (share of switch investment wasted on tests with
    non-positive lift); power counts recovered positive-lift tests; profit
    is the captured share of the total attainable positive profit, so
    rejecting a negative-lift test subtracts from it.
    """
    del cfg  # metrics depend only on decisions, truth and weights
    rejected = report.rejected.astype(bool)
    theta = np.array([t.theta for t in truth])
    lift = np.array([t.lift for t in truth])
    profit = np.array([r.profit for r in recs])
    cost = np.array([r.cost for r in recs])

    invested = float(cost[rejected].sum())
    wasted = float(cost[rejected & (theta == 0)].sum())
    fdp = wasted / invested if invested > 0 else 0.0

    n_pos = int((theta == 1).sum())
    power = 100.0 * int((rejected & (theta == 1)).sum()) / max(1, n_pos)

    attainable = float((profit * lift)[theta == 1].sum())
    captured = float((profit * lift)[rejected].sum())
    profit_pct = 100.0 * captured / attainable if attainable > 0 else 0.0

    net = float((profit * lift - cost)[rejected].sum())
    return MetricsSummary(fdr=fdp, power_pct=power, profit_pct=profit_pct,
                          net_profit=net, rejections=float(rejected.sum()))


def oracle_model(cfg: SimConfig, *, grid_lo: float = -10.0,
                 grid_hi: float = 10.0, grid_points: int = 2048,
                 quad_nodes: int = 800) -> LfdrModel:
    """Analytic mixture model implied by the generating process.

    Conditional on a baseline rate the standardized statistic of an
    effect-size component is approximately normal with unit variance and
    mean ``ln(p1/p0) / sigma(p0, p1)``; the component densities integrate
    that normal over the truncated beta law of the baseline rate by
    Gauss-Legendre quadrature.
    """
    lo = RATE_FLOOR + cfg.effect_size
    hi = RATE_CEIL - cfg.effect_size
    nodes, wq = np.polynomial.legendre.leggauss(quad_nodes)
    p0 = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    wts = wq * beta_dist.pdf(p0, 1.0, cfg.beta_shape2)
    wts = wts / wts.sum()

    def component_mean(p1: np.ndarray) -> np.ndarray:
        sigma2 = (1.0 - p1) / (cfg.n_per_arm * p1) \
            + (1.0 - p0) / (cfg.n_per_arm * p0)
        return np.log(p1 / p0) / np.sqrt(sigma2)

    mu_pos = component_mean(p0 + cfg.effect_size)
    mu_neg = component_mean(p0 - cfg.effect_size)

    def marginal_pdf(grid: np.ndarray) -> np.ndarray:
        f_pos = norm.pdf(grid[:, None] - mu_pos[None, :]) @ wts
        f_neg = norm.pdf(grid[:, None] - mu_neg[None, :]) @ wts
        signal = (1.0 - cfg.pi0) / 2.0 * (f_pos + f_neg)
        return cfg.pi0 * norm.pdf(grid) + signal

    return LfdrModel.from_densities(cfg.pi0, marginal_pdf, grid_lo=grid_lo,
                                    grid_hi=grid_hi, grid_points=grid_points)


def rep_seeds(seed: int, reps: int) -> list[np.random.SeedSequence]:
    """Per-replication seed streams: SeedSequence(seed).spawn(reps)."""
    return np.random.SeedSequence(seed).spawn(reps)


def run_study(cfg: SimConfig, procedures=PROCEDURES, *,
              lfdr_mode: str = "kernel", empirical_null: bool = False,
              oracle: bool = False) -> StudyResult:
    """Replicate the cohort pipeline and average metrics per procedure.

    ``oracle=True`` swaps the fitted lfdr model for the analytic one (the
    per-test statistics and dispersions stay data-driven).
    """
    procedures = tuple(procedures)
    unknown = set(procedures) - set(PROCEDURES)
    if unknown:
        raise ConfigError(f"unknown procedures: {sorted(unknown)}")
    analytic = oracle_model(cfg) if oracle else None

    per_rep: dict[str, list[MetricsSummary]] = {p: [] for p in procedures}
    for child in rep_seeds(cfg.seed, cfg.reps):
        rng = np.random.default_rng(child)
        recs, truth = generate_cohort(cfg, rng)
        stats = statistics_for(recs)
        if analytic is not None:
            model = analytic
        else:
            model = fit_model([s.h for s in stats], mode=lfdr_mode,
                              empirical_null=empirical_null)
        for name in procedures:
            report = run_procedure(name, stats, recs, model, cfg.alpha)
            per_rep[name].append(compute_metrics(report, truth, recs, cfg))

    mean: dict[str, MetricsSummary] = {}
    se: dict[str, MetricsSummary] = {}
    for name in procedures:
        table = np.array([[s.fdr, s.power_pct, s.profit_pct, s.net_profit,
                           s.rejections] for s in per_rep[name]])
        mean[name] = MetricsSummary(*table.mean(axis=0))
        if cfg.reps > 1:
            se[name] = MetricsSummary(
                *(table.std(axis=0, ddof=1) / math.sqrt(cfg.reps)))
    return StudyResult(config=cfg, procedures=procedures, mean=mean,
                       se=se if cfg.reps > 1 else None, reps=cfg.reps)


def with_overrides(cfg: SimConfig, **kwargs) -> SimConfig:
    """Copy of the config with the given fields replaced."""
    return replace(cfg, **kwargs)

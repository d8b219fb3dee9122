"""Two-sample count data to standardized log-lift statistics.

Each A/B test contributes control/treatment visitor and conversion counts.
The pipeline is: log relative risk ``z``, a variance estimate ``S^2``, a
second-order mean correction that removes the log-transform bias, and the
standardized statistic ``h = z_corrected / S`` which is approximately
standard normal for a no-effect test with large counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import MalformedRecordError

# Asymptotics are considered reliable from roughly this many visitors per
# arm; smaller records are still analyzed but flagged in reports.
MIN_RELIABLE_TRAFFIC = 100


@dataclass(frozen=True)
class ExperimentRecord:
    """Raw counts plus economic weights for one A/B test.

    ``profit`` is the baseline profit weight of the product under test and
    ``cost`` the investment required to switch to the treatment; both
    default to 1.0 when a data source does not carry them.
    """

    id: str
    n0: int
    R0: int
    n1: int
    R1: int
    profit: float = 1.0
    cost: float = 1.0

    def __post_init__(self):
        if self.n0 < 1 or self.n1 < 1:
            raise MalformedRecordError(
                f"record {self.id!r}: each arm needs at least one visitor "
                f"(n0={self.n0}, n1={self.n1})")
        if not (0 <= self.R0 <= self.n0) or not (0 <= self.R1 <= self.n1):
            raise MalformedRecordError(
                f"record {self.id!r}: conversions must lie in [0, visitors] "
                f"(R0={self.R0}/{self.n0}, R1={self.R1}/{self.n1})")
        if self.profit <= 0 or self.cost <= 0:
            raise MalformedRecordError(
                f"record {self.id!r}: profit and cost must be positive")

    @property
    def low_traffic(self) -> bool:
        return min(self.n0, self.n1) < MIN_RELIABLE_TRAFFIC

    def swapped(self) -> "ExperimentRecord":
        """The same record with control and treatment arms exchanged."""
        return ExperimentRecord(self.id, self.n1, self.R1, self.n0, self.R0,
                                self.profit, self.cost)


@dataclass(frozen=True)
class TestStatistic:
    """Derived statistics for one record.

    ``z`` is the raw log relative risk, ``z_corrected`` the de-biased
    version, ``s2`` the variance estimate, ``h`` the standardized statistic
    and ``lift_hat`` the observed lift ``exp(z) - 1``.
    """

    id: str
    z: float
    z_corrected: float
    s2: float
    h: float
    lift_hat: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.s2)


@dataclass(frozen=True)
class GroundTruth:
    """Population parameters of a simulated test (never observable)."""

    p0: float
    p1: float
    lift: float
    theta: int

    def __post_init__(self):
        assert self.theta == int(self.lift > 0)


def _corrected_counts(rec: ExperimentRecord) -> tuple[float, float, float, float]:
    """Counts used by every formula, with a continuity correction.

    If either arm has zero or all conversions the log-ratio or the variance
    estimate would be infinite, so 0.5 is added to every cell of the 2x2
    table (conversions +0.5, visitors +1.0 in both arms).
    """
    degenerate = (rec.R0 == 0 or rec.R0 == rec.n0 or
                  rec.R1 == 0 or rec.R1 == rec.n1)
    if degenerate:
        return rec.R0 + 0.5, rec.n0 + 1.0, rec.R1 + 0.5, rec.n1 + 1.0
    return float(rec.R0), float(rec.n0), float(rec.R1), float(rec.n1)


def compute_log_lift(rec: ExperimentRecord) -> TestStatistic:
    """Log relative risk and observed lift for one record.

    Returns a partially populated :class:`TestStatistic` (``z_corrected``,
    ``s2`` and ``h`` are filled by :func:`standardize`).
    """
    r0, n0, r1, n1 = _corrected_counts(rec)
    z = math.log(r1) - math.log(n1) - math.log(r0) + math.log(n0)
    return TestStatistic(id=rec.id, z=z, z_corrected=math.nan, s2=math.nan,
                         h=math.nan, lift_hat=math.expm1(z))


def estimate_variance(rec: ExperimentRecord) -> float:
    """Variance estimate ``S^2 = (1-p1)/R1 + (1-p0)/R0`` of the log ratio.

    Uses the same continuity-corrected counts as :func:`compute_log_lift`,
    which keeps the estimate strictly positive and finite.
    """
    r0, n0, r1, n1 = _corrected_counts(rec)
    return (1.0 - r1 / n1) / r1 + (1.0 - r0 / n0) / r0


def apply_mean_correction(z: float, rec: ExperimentRecord) -> float:
    """Remove the second-order bias of the log transform.

    ``E[ln(p_hat/p)]`` is approximately ``-Var(p_hat/p)/2`` per arm rather
    than zero, so the corrected statistic adds back half the estimated
    per-arm variances: ``z + (V1 - V0)/2`` with ``V = (1-p_hat)/R``.
    """
    r0, n0, r1, n1 = _corrected_counts(rec)
    v1 = (1.0 - r1 / n1) / r1
    v0 = (1.0 - r0 / n0) / r0
    return z + 0.5 * (v1 - v0)


def standardize(rec: ExperimentRecord) -> TestStatistic:
    """Fully populated statistic with ``h = z_corrected / sqrt(S^2)``."""
    partial = compute_log_lift(rec)
    s2 = estimate_variance(rec)
    z_corrected = apply_mean_correction(partial.z, rec)
    return TestStatistic(id=rec.id, z=partial.z, z_corrected=z_corrected,
                         s2=s2, h=z_corrected / math.sqrt(s2),
                         lift_hat=partial.lift_hat)


def statistics_for(recs: list[ExperimentRecord]) -> list[TestStatistic]:
    """Standardize a batch of records, preserving order."""
    return [standardize(rec) for rec in recs]

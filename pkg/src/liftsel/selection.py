"""Rejection-set procedures: greedy knapsack plus standard baselines.

``rbl_select`` maximizes profit-weighted posterior expected lift subject to
a cost-weighted estimated-FDR budget. Each test becomes an item with

* value  = profit * (lfdr(h) / lfdr(h + sigma) - 1)
* weight = cost * (weight_lfdr(h) - alpha)

The sign pattern of (value, weight) places the item in one of four
quadrants: I (value > 0, weight < 0) is always rejected, III (value <= 0,
weight > 0) never, and the remaining two are pooled and ranked by
value-to-weight ratio. Items with weight < 0 donate capacity
``alpha - weight_lfdr`` times cost; ranked flips consume it.

Baselines: one-sided uncorrected testing, adaptive Benjamini-Hochberg,
Sun-Cai lfdr averaging, and a weighted expected-discovery variant (bcds)
that runs the same knapsack with value = profit * (1 - lfdr) and weights
from the unadjusted lfdr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .lfdr import LfdrModel, lfdr, value_statistic, weight_lfdr
from .lifts import TestStatistic

FDR_SLACK = 1e-9


@dataclass(frozen=True)
class KnapsackItem:
    """One test prepared for knapsack selection.

    ``weight_lfdr`` holds the lfdr variant that multiplies the cost inside
    ``weight`` (the max(h, 0)-null variant for rbl, the plain lfdr for
    bcds). ``baseline_decision`` is 1 exactly when the weight is negative.
    """

    test_id: str
    value: float
    weight: float
    cost: float
    quadrant: str
    ratio: float
    baseline_decision: int
    h: float
    lfdr: float
    weight_lfdr: float


@dataclass(frozen=True)
class DecisionReport:
    """Per-test decisions plus the diagnostics that produced them.

    Arrays are aligned with ``test_ids``; procedures that do not compute a
    quantity leave NaN (or an empty quadrant label / rank -1).
    """

    procedure: str
    alpha: float
    test_ids: tuple[str, ...]
    rejected: np.ndarray
    capacity_total: float
    capacity_used: float
    estimated_fdr: float
    h: np.ndarray
    lfdr: np.ndarray
    weight_lfdr: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    quadrant: np.ndarray
    rank: np.ndarray

    @property
    def decisions(self) -> dict[str, int]:
        return {tid: int(d) for tid, d in zip(self.test_ids, self.rejected)}

    @property
    def n_rejected(self) -> int:
        return int(self.rejected.sum())


def _check_alpha(alpha: float):
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _quadrant(value: float, weight: float) -> str:
    if weight < 0.0:
        return "I" if value > 0.0 else "IV"
    if weight > 0.0:
        return "II" if value > 0.0 else "III"
    # Zero weight contributes no capacity either way; the decision follows
    # the sign of the value alone.
    return "I" if value > 0.0 else "III"


def _make_item(tid, value, weight, cost, h, lfdr_val, wl_val) -> KnapsackItem:
    ratio = value / weight if weight != 0.0 else 0.0
    return KnapsackItem(test_id=tid, value=float(value), weight=float(weight),
                        cost=float(cost), quadrant=_quadrant(value, weight),
                        ratio=float(ratio),
                        baseline_decision=int(weight < 0.0),
                        h=float(h), lfdr=float(lfdr_val),
                        weight_lfdr=float(wl_val))


def _aligned_arrays(stats: list[TestStatistic], recs) -> tuple[np.ndarray, ...]:
    if len(stats) != len(recs):
        raise ValueError(f"{len(stats)} statistics vs {len(recs)} records")
    for s, r in zip(stats, recs):
        if s.id != r.id:
            raise ValueError(f"statistic {s.id!r} does not match record {r.id!r}")
    h = np.array([s.h for s in stats])
    sigma = np.array([s.sigma for s in stats])
    profit = np.array([r.profit for r in recs])
    cost = np.array([r.cost for r in recs])
    return h, sigma, profit, cost


def build_items(stats: list[TestStatistic], recs, model: LfdrModel,
                alpha: float) -> list[KnapsackItem]:
    """Items for :func:`rbl_select`: lift values, weight-lfdr weights."""
    _check_alpha(alpha)
    h, sigma, profit, cost = _aligned_arrays(stats, recs)
    l = lfdr(model, h)
    wl = weight_lfdr(model, h)
    value = profit * value_statistic(model, h, sigma)
    weight = cost * (wl - alpha)
    return [_make_item(s.id, value[i], weight[i], cost[i], h[i], l[i], wl[i])
            for i, s in enumerate(stats)]


def build_bcds_items(stats: list[TestStatistic], recs, model: LfdrModel,
                     alpha: float) -> list[KnapsackItem]:
    """Items for :func:`bcds_select`: expected-discovery values, plain lfdr
    in the weights (no lift term, no null adjustment)."""
    _check_alpha(alpha)
    h, _, profit, cost = _aligned_arrays(stats, recs)
    l = lfdr(model, h)
    value = profit * (1.0 - l)
    weight = cost * (l - alpha)
    return [_make_item(s.id, value[i], weight[i], cost[i], h[i], l[i], l[i])
            for i, s in enumerate(stats)]


def capacity(items: list[KnapsackItem]) -> float:
    """Total budget donated by items below the lfdr threshold."""
    return float(sum(-it.weight for it in items if it.weight < 0.0))


def _report_from_items(procedure, alpha, items, rejected, cap_total,
                       cap_used, ranks) -> DecisionReport:
    rejected = np.asarray(rejected, dtype=np.int8)
    cost = np.array([it.cost for it in items])
    wl = np.array([it.weight_lfdr for it in items])
    if rejected.any():
        est = float(np.sum(rejected * cost * wl) / np.sum(rejected * cost))
    else:
        est = 0.0
    if est > alpha + FDR_SLACK:
        raise AssertionError(
            f"{procedure}: estimated FDR {est:.6g} exceeds alpha {alpha}")
    return DecisionReport(
        procedure=procedure, alpha=alpha,
        test_ids=tuple(it.test_id for it in items),
        rejected=rejected, capacity_total=cap_total, capacity_used=cap_used,
        estimated_fdr=est,
        h=np.array([it.h for it in items]),
        lfdr=np.array([it.lfdr for it in items]),
        weight_lfdr=wl,
        value=np.array([it.value for it in items]),
        weight=np.array([it.weight for it in items]),
        quadrant=np.array([it.quadrant for it in items]),
        rank=np.asarray(ranks, dtype=int))


def _knapsack_select(items: list[KnapsackItem], alpha: float,
                     procedure: str) -> DecisionReport:
    _check_alpha(alpha)
    cap_total = capacity(items)
    index = {it.test_id: i for i, it in enumerate(items)}
    rejected = [1 if it.quadrant in ("I", "IV") else 0 for it in items]
    ranks = [-1] * len(items)

    pool = [it for it in items if it.quadrant in ("II", "IV")]
    # Decreasing ratio; cheaper flips first on ties, then id for determinism.
    pool.sort(key=lambda it: (-it.ratio, abs(it.weight), it.test_id))
    cap_used = 0.0
    consumed = 0.0
    for pos, it in enumerate(pool):
        ranks[index[it.test_id]] = pos + 1
        consumed += abs(it.weight)
        if consumed <= cap_total * (1.0 + 1e-12) + 1e-15:
            rejected[index[it.test_id]] = 1 if it.quadrant == "II" else 0
            cap_used = consumed
        else:
            break
    return _report_from_items(procedure, alpha, items, rejected, cap_total,
                              cap_used, ranks)


def rbl_select(items: list[KnapsackItem], alpha: float) -> DecisionReport:
    """Greedy knapsack over lift-valued items.

    Quadrant I is always rejected and III never; II and IV are pooled,
    ranked by decreasing value-to-weight ratio and flipped (II added, IV
    removed) while the cumulative cost stays within the capacity. The rule
    is purely integral: the first flip that would overshoot the budget ends
    the walk, so the budget is never exceeded.
    """
    return _knapsack_select(items, alpha, "rbl")


def bcds_select(items: list[KnapsackItem], alpha: float) -> DecisionReport:
    """Same knapsack machinery on expected-discovery items."""
    return _knapsack_select(items, alpha, "bcds")


def _basic_report(procedure, alpha, ids, rejected, *, h=None, lfdr_vals=None,
                  estimated_fdr=math.nan) -> DecisionReport:
    m = len(ids)
    nan = np.full(m, np.nan)
    return DecisionReport(
        procedure=procedure, alpha=alpha, test_ids=tuple(ids),
        rejected=np.asarray(rejected, dtype=np.int8),
        capacity_total=0.0, capacity_used=0.0, estimated_fdr=estimated_fdr,
        h=nan if h is None else np.asarray(h, dtype=float),
        lfdr=nan if lfdr_vals is None else np.asarray(lfdr_vals, dtype=float),
        weight_lfdr=nan.copy(), value=nan.copy(), weight=nan.copy(),
        quadrant=np.full(m, "", dtype=object),
        rank=np.full(m, -1, dtype=int))


def uncorrected_select(stats: list[TestStatistic],
                       alpha: float) -> DecisionReport:
    """One-sided testing with no multiplicity correction: p = 1 - Phi(h)."""
    _check_alpha(alpha)
    h = np.array([s.h for s in stats])
    rejected = norm.sf(h) <= alpha
    return _basic_report("uncorrected", alpha, [s.id for s in stats],
                         rejected, h=h)


def bh_select(stats: list[TestStatistic], alpha: float,
              pi0: float) -> DecisionReport:
    """Adaptive Benjamini-Hochberg step-up at working level alpha / pi0."""
    _check_alpha(alpha)
    if not (0.0 < pi0 <= 1.0):
        raise ValueError(f"pi0 must lie in (0, 1], got {pi0}")
    h = np.array([s.h for s in stats])
    pvals = norm.sf(h)
    m = pvals.size
    level = min(1.0, alpha / pi0)
    order = np.sort(pvals)
    passing = np.nonzero(order <= (np.arange(1, m + 1) * level / m))[0]
    if passing.size:
        rejected = pvals <= order[passing[-1]]
    else:
        rejected = np.zeros(m, dtype=bool)
    return _basic_report("bh", alpha, [s.id for s in stats], rejected, h=h)


def run_procedure(name: str, stats: list[TestStatistic], recs,
                  model: LfdrModel, alpha: float) -> DecisionReport:
    """Dispatch one named procedure on prepared inputs."""
    if name == "uncorrected":
        return uncorrected_select(stats, alpha)
    if name == "bh":
        return bh_select(stats, alpha, model.pi0)
    if name == "sc":
        values = lfdr(model, np.array([s.h for s in stats]))
        return sc_select(values, alpha, ids=[s.id for s in stats])
    if name == "bcds":
        return bcds_select(build_bcds_items(stats, recs, model, alpha), alpha)
    if name == "rbl":
        return rbl_select(build_items(stats, recs, model, alpha), alpha)
    raise ValueError(f"unknown procedure {name!r}")


def sc_select(lfdr_values, alpha: float, ids=None) -> DecisionReport:
    """Reject the largest lfdr-ascending prefix whose mean lfdr stays
    within alpha (moving average of the posterior null probability)."""
    _check_alpha(alpha)
    values = np.asarray(lfdr_values, dtype=float)
    m = values.size
    if ids is None:
        ids = [f"t{i:06d}" for i in range(m)]
    order = np.argsort(values, kind="stable")
    running = np.cumsum(values[order]) / np.arange(1, m + 1)
    passing = np.nonzero(running <= alpha)[0]
    rejected = np.zeros(m, dtype=bool)
    est = 0.0
    if passing.size:
        k = passing[-1] + 1
        rejected[order[:k]] = True
        est = float(running[k - 1])
    if est > alpha + FDR_SLACK:
        raise AssertionError(
            f"sc: estimated FDR {est:.6g} exceeds alpha {alpha}")
    return _basic_report("sc", alpha, ids, rejected, lfdr_vals=values,
                         estimated_fdr=est)

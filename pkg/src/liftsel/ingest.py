"""CSV ingestion for experiment exports.

Expected header columns (extras are ignored, order is free):

    experiment_id, variation_id, visitors_control, conversions_control,
    visitors_treatment, conversions_treatment[, profit, cost]

``profit`` and ``cost`` default to 1.0 when the columns are absent. Rows
that fail to parse are skipped with a line-numbered diagnostic; the file is
rejected outright when more than 10% of its data rows are malformed.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .lifts import ExperimentRecord

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("experiment_id", "variation_id", "visitors_control",
                    "conversions_control", "visitors_treatment",
                    "conversions_treatment")
OPTIONAL_COLUMNS = ("profit", "cost")
MAX_MALFORMED_FRACTION = 0.10


@dataclass(frozen=True)
class RawVariationRow:
    """One variation of one experiment, as exported by a testing platform."""

    experiment_id: str
    variation_id: str
    visitors_control: int
    conversions_control: int
    visitors_treatment: int
    conversions_treatment: int
    profit: float = 1.0
    cost: float = 1.0

    def __post_init__(self):
        if min(self.visitors_control, self.conversions_control,
               self.visitors_treatment, self.conversions_treatment) < 0:
            raise DataFormatError("counts must be non-negative")
        if (self.conversions_control > self.visitors_control
                or self.conversions_treatment > self.visitors_treatment):
            raise DataFormatError("conversions exceed visitors")
        if self.profit <= 0 or self.cost <= 0:
            raise DataFormatError("profit and cost must be positive")


def parse_csv(path) -> list[RawVariationRow]:
    """Parse an export file into typed rows.

    Raises :class:`DataFormatError` for a missing header, missing required
    columns, or an excessive malformed-row fraction.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: empty file, expected a header row")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}")
        has_profit = "profit" in reader.fieldnames
        has_cost = "cost" in reader.fieldnames
        if not has_profit:
            log.info("%s: no profit column, defaulting profits to 1.0", path)
        if not has_cost:
            log.info("%s: no cost column, defaulting costs to 1.0", path)

        rows: list[RawVariationRow] = []
        bad = 0
        total = 0
        for lineno, raw in enumerate(reader, start=2):
            total += 1
            try:
                rows.append(RawVariationRow(
                    experiment_id=raw["experiment_id"].strip(),
                    variation_id=raw["variation_id"].strip(),
                    visitors_control=int(raw["visitors_control"]),
                    conversions_control=int(raw["conversions_control"]),
                    visitors_treatment=int(raw["visitors_treatment"]),
                    conversions_treatment=int(raw["conversions_treatment"]),
                    profit=float(raw["profit"]) if has_profit else 1.0,
                    cost=float(raw["cost"]) if has_cost else 1.0))
            except (DataFormatError, KeyError, TypeError, ValueError) as exc:
                bad += 1
                log.warning("%s:%d: skipping malformed row (%s)",
                            path, lineno, exc)
    if total == 0:
        log.warning("%s: header-only file, no data rows", path)
    elif bad / total > MAX_MALFORMED_FRACTION:
        raise DataFormatError(
            f"{path}: {bad} of {total} rows malformed (> "
            f"{MAX_MALFORMED_FRACTION:.0%}), refusing to continue")
    return rows


def write_csv(rows: list[RawVariationRow], path) -> None:
    """Serialize rows with the canonical header (round-trips parse_csv)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)
        for r in rows:
            writer.writerow([r.experiment_id, r.variation_id,
                             r.visitors_control, r.conversions_control,
                             r.visitors_treatment, r.conversions_treatment,
                             repr(r.profit), repr(r.cost)])


def subsample_variations(rows: list[RawVariationRow],
                         seed: int) -> list[RawVariationRow]:
    """Thin multi-variation experiments to at most one row each.

    An experiment with k variations is retained with probability 1/k; a
    retained experiment contributes one uniformly chosen variation. This
    keeps the retained tests nearly independent when variations of one
    experiment share a control group.
    """
    groups: dict[str, list[RawVariationRow]] = {}
    for row in rows:
        groups.setdefault(row.experiment_id, []).append(row)
    rng = np.random.default_rng(seed)
    kept: list[RawVariationRow] = []
    for exp_id, group in groups.items():
        k = len(group)
        if rng.random() < 1.0 / k:
            kept.append(group[int(rng.integers(k))])
    log.info("subsampling kept %d of %d experiments", len(kept), len(groups))
    return kept


def records_from_rows(rows: list[RawVariationRow]) -> list[ExperimentRecord]:
    """Convert rows to analysis records; ids are experiment:variation."""
    return [ExperimentRecord(
        id=f"{r.experiment_id}:{r.variation_id}",
        n0=r.visitors_control, R0=r.conversions_control,
        n1=r.visitors_treatment, R1=r.conversions_treatment,
        profit=r.profit, cost=r.cost) for r in rows]


def synthesize_profits(rows: list[RawVariationRow], gamma_sd: float,
                       cost_ratio: float, seed: int) -> list[RawVariationRow]:
    """Replace profits with unit-mean gamma draws (sd = gamma_sd) and costs
    with cost_ratio times profit; gamma_sd = 0 sets both columns flat."""
    rng = np.random.default_rng(seed)
    if gamma_sd > 0:
        shape = 1.0 / gamma_sd ** 2
        profits = rng.gamma(shape, scale=gamma_sd ** 2, size=len(rows))
    else:
        profits = np.ones(len(rows))
    out = []
    for row, pr in zip(rows, profits):
        out.append(RawVariationRow(
            experiment_id=row.experiment_id, variation_id=row.variation_id,
            visitors_control=row.visitors_control,
            conversions_control=row.conversions_control,
            visitors_treatment=row.visitors_treatment,
            conversions_treatment=row.conversions_treatment,
            profit=float(pr), cost=float(cost_ratio * pr)))
    return out

"""Regression design, poststratified estimates, error metrics and the
vote-threshold robustness sweep."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    POSTSTRAT_DIMENSIONS,
    DimensionRegistry,
    Election,
    FittedModel,
    ReferenceDistribution,
    StratumKey,
    StratumMarginals,
    format_key,
    parse_key,
)
from .errors import (
    AllMissingDimension,
    InsufficientObservations,
    MissingConditional,
    MissingMarginal,
    NoPollsAfterFilter,
    PollstratError,
    RankDeficient,
    ValidationError,
)
from .normalize import NormalizedOutcome
from .stats import (
    BootstrapSummary,
    DesignMatrix,
    bootstrap_replicates,
    lstsq_coef,
    ols_fit,
    percentile_interval,
)

PollRow = tuple[NormalizedOutcome, StratumMarginals]

DEFAULT_MIN_VOTES = 50
DEFAULT_REPLICATES = 1000
DEFAULT_THRESHOLDS = (0, 10, 25, 50, 100, 200, 300, 500, 750, 1000)

# A replicate that hits one of these is redrawn rather than failing the run.
_REDRAW = (RankDeficient, AllMissingDimension, InsufficientObservations)


# ---------------------------------------------------------------------------
# Design assembly


@dataclass(frozen=True)
class RawDesign:
    """Retained polls before imputation; unobserved dimensions are NaN."""

    values: np.ndarray
    response: np.ndarray
    column_keys: tuple[StratumKey, ...]
    poll_ids: tuple[str, ...]
    registry: DimensionRegistry
    dimension_set: tuple[str, ...]
    min_votes: int


def raw_design(
    polls: Iterable[PollRow],
    registry: DimensionRegistry,
    dimension_set: Iterable[str] = POSTSTRAT_DIMENSIONS,
    min_votes: int = DEFAULT_MIN_VOTES,
) -> RawDesign:
    dims = registry.ordered(dimension_set)
    unknown = set(dimension_set) - set(dims)
    if unknown:
        raise ValidationError(f"dimensions not in registry: {sorted(unknown)}")
    keys = tuple(registry.columns(dims))
    rows, ys, ids = [], [], []
    for outcome, marg in polls:
        if outcome.poll_id != marg.poll_id:
            raise ValidationError(f"outcome {outcome.poll_id} paired with marginals {marg.poll_id}")
        if outcome.effective_votes < min_votes:
            continue
        rows.append([marg.get(k) if marg.observed(k[0]) else math.nan for k in keys])
        ys.append(outcome.share_focal)
        ids.append(outcome.poll_id)
    if not rows:
        raise NoPollsAfterFilter(f"no polls with at least {min_votes} votes")
    values = np.asarray(rows, dtype=float).reshape(len(rows), len(keys))
    return RawDesign(values, np.asarray(ys, dtype=float), keys, tuple(ids), registry, dims, min_votes)


def impute_means(values: np.ndarray, column_keys: Sequence[StratumKey]) -> tuple[np.ndarray, np.ndarray]:
    """Replace NaNs by column means over observed rows; returns ``(filled, means)``."""
    observed = ~np.isnan(values)
    counts = observed.sum(axis=0)
    if np.any(counts == 0):
        dims = sorted({column_keys[j][0] for j in np.flatnonzero(counts == 0)})
        raise AllMissingDimension(f"dimensions observed in no retained poll: {dims}")
    means = np.where(observed, values, 0.0).sum(axis=0) / counts
    return np.where(observed, values, means), means


def assemble_design(
    polls: Iterable[PollRow],
    registry: DimensionRegistry,
    dimension_set: Iterable[str] = POSTSTRAT_DIMENSIONS,
    min_votes: int = DEFAULT_MIN_VOTES,
) -> DesignMatrix:
    """Regression design for polls with at least ``min_votes`` focal votes.

    One column per non-reference stratum of each selected dimension; a poll
    missing a dimension gets that dimension's column means.
    """
    raw = raw_design(polls, registry, dimension_set, min_votes)
    return _design_from_raw(raw)


def _design_from_raw(raw: RawDesign) -> DesignMatrix:
    filled, means = impute_means(raw.values, raw.column_keys)
    X = np.column_stack([np.ones(len(raw.response)), filled])
    return DesignMatrix(
        values=X,
        response=raw.response,
        column_keys=raw.column_keys,
        registry=raw.registry,
        dimension_set=raw.dimension_set,
        min_votes=raw.min_votes,
        imputation_means={k: float(m) for k, m in zip(raw.column_keys, means)},
        poll_ids=raw.poll_ids,
    )


def fit(
    polls: Iterable[PollRow],
    registry: DimensionRegistry,
    dimension_set: Iterable[str] = POSTSTRAT_DIMENSIONS,
    min_votes: int = DEFAULT_MIN_VOTES,
) -> FittedModel:
    return ols_fit(assemble_design(polls, registry, dimension_set, min_votes))


# ---------------------------------------------------------------------------
# Poststratification


def overall_weights(
    registry: DimensionRegistry, column_keys: Sequence[StratumKey], ref: ReferenceDistribution
) -> np.ndarray:
    """Vector w with estimate = w @ [intercept, coefficients...]."""
    w = [1.0]
    for key in column_keys:
        if key not in ref.marginals:
            raise MissingMarginal(f"reference lacks marginal {format_key(key)}")
        w.append(ref.marginals[key])
    return np.asarray(w)


def conditional_weights(
    registry: DimensionRegistry,
    column_keys: Sequence[StratumKey],
    ref: ReferenceDistribution,
    condition: StratumKey,
) -> np.ndarray:
    d0, g0 = condition
    if d0 not in registry or g0 not in registry[d0].strata:
        raise ValidationError(f"unknown condition stratum {format_key(condition)}")
    w = [1.0]
    cache: dict[str, dict[str, float] | None] = {}
    for dim, g in column_keys:
        if dim == d0:
            w.append(1.0 if g == g0 else 0.0)
            continue
        if dim not in cache:
            cache[dim] = ref.conditional(condition, dim)
        dist = cache[dim]
        if dist is None or g not in dist:
            raise MissingConditional(f"reference lacks p({format_key((dim, g))} | {format_key(condition)})")
        w.append(dist[g])
    return np.asarray(w)


def _coef_vector(model: FittedModel) -> np.ndarray:
    return np.asarray([model.intercept, *(model.coefficients[k] for k in model.column_keys)])


def poststratify(model: FittedModel, ref: ReferenceDistribution) -> float:
    """Population estimate: intercept plus coefficients weighted by reference marginals."""
    w = overall_weights(model.registry, model.column_keys, ref)
    return float(w @ _coef_vector(model))


def poststratify_conditional(
    model: FittedModel, ref: ReferenceDistribution, condition: StratumKey
) -> float:
    """Estimate for the population stratum ``condition``.

    The condition's own dimension is an indicator on ``condition``; every
    other dimension is weighted by ``p(. | condition)``.
    """
    w = conditional_weights(model.registry, model.column_keys, ref, condition)
    return float(w @ _coef_vector(model))


# ---------------------------------------------------------------------------
# Errors against ground truth


@dataclass(frozen=True)
class ErrorMetrics:
    abs_error: float | None
    mean_stratum_abs_error: float | None
    strata_without_truth: int


def error_metrics(
    overall: float | None,
    per_stratum: Mapping[StratumKey, float],
    outcomes: Mapping[str | StratumKey, float],
) -> ErrorMetrics:
    """Absolute overall error and the nested (dimension, then stratum) mean of
    per-stratum absolute errors. Strata without ground truth are skipped and counted."""
    abs_error = None
    if overall is not None and "overall" in outcomes:
        abs_error = abs(outcomes["overall"] - overall)
    by_dim: dict[str, list[float]] = {}
    missing = 0
    for key, est in per_stratum.items():
        if key in outcomes:
            by_dim.setdefault(key[0], []).append(abs(outcomes[key] - est))
        else:
            missing += 1
    mean_stratum = None
    if by_dim:
        mean_stratum = sum(sum(v) / len(v) for v in by_dim.values()) / len(by_dim)
    return ErrorMetrics(abs_error, mean_stratum, missing)


# ---------------------------------------------------------------------------
# Full estimate with bootstrap intervals


@dataclass(frozen=True)
class EstimateReport:
    election: Election | None
    min_votes: int
    n_polls_used: int
    dimension_set: tuple[str, ...]
    overall: BootstrapSummary
    per_stratum: Mapping[StratumKey, BootstrapSummary] = field(default_factory=dict)
    abs_error: float | None = None
    mean_stratum_abs_error: float | None = None
    strata_without_truth: int = 0
    out_of_range: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "election": None if self.election is None else self.election.value,
            "min_votes": self.min_votes,
            "n_polls_used": self.n_polls_used,
            "dimension_set": list(self.dimension_set),
            "overall": self.overall.to_dict(),
            "per_stratum": {format_key(k): v.to_dict() for k, v in self.per_stratum.items()},
            "abs_error": self.abs_error,
            "mean_stratum_abs_error": self.mean_stratum_abs_error,
            "strata_without_truth": self.strata_without_truth,
            "out_of_range": list(self.out_of_range),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EstimateReport":
        election = data.get("election")
        return cls(
            election=None if election is None else Election(election),
            min_votes=int(data["min_votes"]),
            n_polls_used=int(data["n_polls_used"]),
            dimension_set=tuple(data["dimension_set"]),
            overall=BootstrapSummary.from_dict(data["overall"]),
            per_stratum={parse_key(k): BootstrapSummary.from_dict(v) for k, v in data["per_stratum"].items()},
            abs_error=data.get("abs_error"),
            mean_stratum_abs_error=data.get("mean_stratum_abs_error"),
            strata_without_truth=int(data.get("strata_without_truth", 0)),
            out_of_range=tuple(data.get("out_of_range", ())),
        )


def _conditions(model: FittedModel, ref: ReferenceDistribution) -> list[StratumKey]:
    """Strata of the model's dimensions for which the reference has conditionals."""
    out = []
    for dim in model.dimension_set:
        for g in model.registry[dim].strata:
            try:
                conditional_weights(model.registry, model.column_keys, ref, (dim, g))
            except MissingConditional:
                continue
            out.append((dim, g))
    return out


def estimate(
    polls: Sequence[PollRow],
    registry: DimensionRegistry,
    ref: ReferenceDistribution,
    dimension_set: Iterable[str] = POSTSTRAT_DIMENSIONS,
    min_votes: int = DEFAULT_MIN_VOTES,
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    *,
    alpha: float = 0.05,
    workers: int | None = None,
) -> EstimateReport:
    """Fit, poststratify and bootstrap over polls.

    Each replicate resamples retained poll rows, re-imputes missing dimensions
    and refits. Per-stratum estimates are produced for every stratum whose
    conditionals the reference provides.
    """
    raw = raw_design(polls, registry, dimension_set, min_votes)
    model = ols_fit(_design_from_raw(raw))
    conditions = _conditions(model, ref)
    W = np.vstack(
        [overall_weights(registry, raw.column_keys, ref)]
        + [conditional_weights(registry, raw.column_keys, ref, c) for c in conditions]
    )
    point = W @ _coef_vector(model)

    def statistic(idx):
        filled, _ = impute_means(raw.values[idx], raw.column_keys)
        X = np.column_stack([np.ones(len(idx)), filled])
        return W @ lstsq_coef(X, raw.response[idx])

    reps = bootstrap_replicates(
        statistic, len(raw.response), replicates, seed, retry_on=_REDRAW, workers=workers
    )
    lo, hi = percentile_interval(reps, alpha)
    summaries = [
        BootstrapSummary(float(point[i]), float(lo[i]), float(hi[i]), replicates, seed)
        for i in range(len(point))
    ]
    per_stratum = dict(zip(conditions, summaries[1:]))
    metrics = error_metrics(
        summaries[0].point, {k: s.point for k, s in per_stratum.items()}, ref.outcomes
    )
    out_of_range = tuple(
        label
        for label, s in [("overall", summaries[0])] + [(format_key(k), s) for k, s in per_stratum.items()]
        if not 0.0 <= s.point <= 1.0
    )
    return EstimateReport(
        election=ref.election,
        min_votes=min_votes,
        n_polls_used=len(raw.response),
        dimension_set=raw.dimension_set,
        overall=summaries[0],
        per_stratum=per_stratum,
        abs_error=metrics.abs_error,
        mean_stratum_abs_error=metrics.mean_stratum_abs_error,
        strata_without_truth=metrics.strata_without_truth,
        out_of_range=out_of_range,
    )


# ---------------------------------------------------------------------------
# Threshold sweep


@dataclass(frozen=True)
class SweepRow:
    min_votes: int
    n_polls: int
    report: EstimateReport | None
    error: str | None = None


SWEEP_COLUMNS = (
    "M", "n_polls", "estimate", "ci_low", "ci_high",
    "abs_error", "mean_stratum_abs_error", "status",
)


def threshold_sweep(
    polls: Sequence[PollRow],
    registry: DimensionRegistry,
    ref: ReferenceDistribution,
    dimension_set: Iterable[str] = POSTSTRAT_DIMENSIONS,
    thresholds: Sequence[int] = DEFAULT_THRESHOLDS,
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    *,
    workers: int | None = None,
) -> list[SweepRow]:
    """Re-estimate at every vote threshold; failures are recorded per row."""
    if not thresholds:
        raise ValueError("thresholds must be nonempty")
    if any(m < 0 for m in thresholds):
        raise ValueError("thresholds must be non-negative")
    dimension_set = tuple(dimension_set)
    rows = []
    for m in thresholds:
        n = sum(1 for outcome, _ in polls if outcome.effective_votes >= m)
        try:
            report = estimate(polls, registry, ref, dimension_set, m, replicates, seed, workers=workers)
        except PollstratError as exc:
            rows.append(SweepRow(m, n, None, f"{type(exc).__name__}: {exc}"))
        else:
            rows.append(SweepRow(m, n, report))
    return rows


def _cell(x) -> str:
    return "" if x is None else repr(float(x))


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        r = row.report
        if r is None:
            writer.writerow([row.min_votes, row.n_polls, "", "", "", "", "", row.error])
        else:
            writer.writerow([
                row.min_votes, row.n_polls, _cell(r.overall.point), _cell(r.overall.ci_low),
                _cell(r.overall.ci_high), _cell(r.abs_error), _cell(r.mean_stratum_abs_error), "ok",
            ])
    return buf.getvalue()

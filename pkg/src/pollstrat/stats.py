"""Statistics kernel: OLS with inference, Pearson correlation, kappa
coefficients and a seeded, order-independent bootstrap."""

from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.special import betainc

from .core import INTERCEPT, DimensionRegistry, FittedModel, StratumKey, format_key
from .errors import (
    BootstrapExhausted,
    InsufficientObservations,
    LengthMismatch,
    MissingCell,
    RankDeficient,
    TooFewPairs,
    ValidationError,
    ZeroVariance,
)

RANK_TOL = 1e-10


def t_two_sided_p(t, df):
    """Two-sided p-value of Student's t via the regularized incomplete beta."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = df / (df + t * t)
    p = betainc(df / 2.0, 0.5, x)
    return np.where(np.isinf(t), 0.0, p)


def significance_stars(p: float) -> str:
    if not p < 0.05:
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    return "*"


# ---------------------------------------------------------------------------
# OLS


@dataclass(frozen=True)
class DesignMatrix:
    """Regression design with a leading intercept column of ones.

    ``column_keys`` label the non-intercept columns. The remaining fields carry
    the metadata that a :class:`FittedModel` records about how it was built.
    """

    values: np.ndarray
    response: np.ndarray
    column_keys: tuple[StratumKey, ...]
    registry: DimensionRegistry | None = None
    dimension_set: tuple[str, ...] = ()
    min_votes: int = 0
    imputation_means: Mapping[StratumKey, float] = field(default_factory=dict)
    poll_ids: tuple[str, ...] = ()

    def __post_init__(self):
        X, y = self.values, self.response
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValidationError(f"design shape {X.shape} does not match response {y.shape}")
        if X.shape[1] != len(self.column_keys) + 1:
            raise ValidationError("column_keys must label every non-intercept column")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValidationError("design matrix contains missing or non-finite values")
        if X.shape[0] and not np.all(X[:, 0] == 1.0):
            raise ValidationError("first design column must be the intercept (all ones)")
        if self.registry is not None:
            for dim, g in self.column_keys:
                if g == self.registry[dim].reference:
                    raise ValidationError(f"column {format_key((dim, g))} is a reference stratum")

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    residuals: np.ndarray
    r2: float
    adj_r2: float
    df_resid: int


def _pivoted_qr(X: np.ndarray):
    Q, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = np.max(np.linalg.norm(X, axis=0)) if X.size else 0.0
    rank = int(np.sum(diag > RANK_TOL * scale))
    if rank < X.shape[1]:
        dependent = sorted(int(j) for j in piv[rank:])
        raise RankDeficient(f"design is rank deficient (rank {rank} < {X.shape[1]})", dependent)
    return Q, R, piv


def lstsq_coef(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients via pivoted QR; raises :class:`RankDeficient`."""
    n, p = X.shape
    if n <= p:
        raise InsufficientObservations(f"{n} observations for {p} parameters")
    Q, R, piv = _pivoted_qr(X)
    coef = np.empty(p)
    coef[piv] = solve_triangular(R, Q.T @ y)
    return coef


def ols(X: np.ndarray, y: np.ndarray) -> OLSResult:
    """Ordinary least squares with classical (homoscedastic) inference.

    ``X`` must already contain the intercept column.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise InsufficientObservations(f"{n} observations for {p} parameters")
    Q, R, piv = _pivoted_qr(X)
    coef = np.empty(p)
    coef[piv] = solve_triangular(R, Q.T @ y)

    resid = y - X @ coef
    df = n - p
    ssr = float(resid @ resid)
    sigma2 = ssr / df
    r_inv = solve_triangular(R, np.eye(p))
    cov = np.empty((p, p))
    cov[np.ix_(piv, piv)] = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    pvals = t_two_sided_p(t, df)

    centered = y - y.mean()
    sst = float(centered @ centered)
    k = p - 1
    if sst > 0:
        r2 = 1.0 - ssr / sst
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)
    else:
        r2 = adj = math.nan
    return OLSResult(coef, se, t, pvals, resid, r2, adj, df)


def ols_fit(design: DesignMatrix) -> FittedModel:
    """Fit ``design`` and package the result as a :class:`FittedModel`."""
    if design.registry is None:
        raise ValidationError("design matrix carries no registry")
    res = ols(design.values, design.response)
    keys = [INTERCEPT, *design.column_keys]

    def keyed(arr):
        return {k: float(v) for k, v in zip(keys, arr)}

    return FittedModel(
        registry=design.registry,
        dimension_set=tuple(design.dimension_set),
        intercept=float(res.coef[0]),
        coefficients={k: float(v) for k, v in zip(design.column_keys, res.coef[1:])},
        std_errors=keyed(res.std_errors),
        t_stats=keyed(res.t_stats),
        p_values=keyed(res.p_values),
        r2=res.r2,
        adj_r2=res.adj_r2,
        n_obs=design.n_obs,
        min_votes=design.min_votes,
        imputation_means=dict(design.imputation_means),
    )


# ---------------------------------------------------------------------------
# Correlation and agreement


def pearson(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Sample Pearson r and its two-sided p-value (t-test, n - 2 df)."""
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    n = arr.shape[0]
    if n < 3:
        raise TooFewPairs(f"need at least 3 pairs, got {n}")
    dx = arr[:, 0] - arr[:, 0].mean()
    dy = arr[:, 1] - arr[:, 1].mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("a coordinate has zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = min(1.0, max(-1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt(df / (1.0 - r * r))
    return r, float(t_two_sided_p(t, df))


def cohens_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    """Cohen's kappa for two raters.

    When chance agreement is 1 (both raters always give the same single label)
    kappa is 0/0; we return 1.0 since agreement is perfect.
    """
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"{len(labels_a)} vs {len(labels_b)} labels")
    n = len(labels_a)
    if n == 0:
        raise LengthMismatch("no labels")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def fleiss_kappa(ratings: Sequence[Sequence[Hashable]]) -> float:
    """Fleiss' kappa from an items x raters matrix of category labels.

    ``None`` cells are missing and rejected. A single category used throughout
    gives expected agreement 1; like :func:`cohens_kappa` this returns 1.0.
    """
    rows = [list(r) for r in ratings]
    if len(rows) < 2:
        raise ValidationError("need at least 2 items")
    m = len(rows[0])
    if m < 2:
        raise ValidationError("need at least 2 raters")
    for i, row in enumerate(rows):
        if len(row) != m:
            raise MissingCell(f"item {i} has {len(row)} ratings, expected {m}")
        if any(c is None or (isinstance(c, float) and math.isnan(c)) for c in row):
            raise MissingCell(f"item {i} has a missing rating")
    categories = sorted({c for row in rows for c in row}, key=repr)
    index = {c: j for j, c in enumerate(categories)}
    counts = np.zeros((len(rows), len(categories)))
    for i, row in enumerate(rows):
        for c in row:
            counts[i, index[c]] += 1
    n_items = len(rows)
    p_j = counts.sum(axis=0) / (n_items * m)
    p_i = (np.sum(counts * counts, axis=1) - m) / (m * (m - 1))
    p_bar = p_i.mean()
    p_e = float(p_j @ p_j)
    if p_e == 1.0:
        return 1.0
    return float((p_bar - p_e) / (1.0 - p_e))


# ---------------------------------------------------------------------------
# Bootstrap


@dataclass(frozen=True)
class BootstrapSummary:
    point: float
    ci_low: float
    ci_high: float
    replicates: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "replicates": self.replicates,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BootstrapSummary":
        return cls(
            float(data["point"]),
            float(data["ci_low"]),
            float(data["ci_high"]),
            int(data["replicates"]),
            int(data["seed"]),
        )


def thread_count(default: int = 1) -> int:
    """Worker count from ``POLLSTRAT_THREADS`` (0 means one per CPU)."""
    raw = os.environ.get("POLLSTRAT_THREADS")
    if raw is None or raw.strip() == "":
        return default
    value = int(raw)
    if value < 0:
        raise ValueError("POLLSTRAT_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


def replicate_rng(seed: int, replicate: int, attempt: int = 0) -> np.random.Generator:
    key = [seed, replicate] if attempt == 0 else [seed, replicate, attempt]
    return np.random.default_rng(key)


def bootstrap_replicates(
    statistic: Callable[[np.ndarray], float | np.ndarray],
    n: int,
    replicates: int = 1000,
    seed: int = 0,
    *,
    retry_on: tuple[type[BaseException], ...] = (),
    workers: int | None = None,
) -> np.ndarray:
    """Evaluate ``statistic`` on ``replicates`` index resamples of ``range(n)``.

    Replicate ``b`` draws from a generator seeded with ``(seed, b)``, so the
    result does not depend on evaluation order or ``workers``. A replicate whose
    statistic raises one of ``retry_on`` is redrawn with seed ``(seed, b, k)``;
    more than ``10 * replicates`` redraws in total raise
    :class:`BootstrapExhausted`. Returns an array of shape ``(replicates, ...)``
    in replicate order.
    """
    if n < 1 or replicates < 1:
        raise ValueError("n and replicates must be >= 1")
    cap = 10 * replicates

    def one(b):
        for attempt in range(cap + 1):
            idx = replicate_rng(seed, b, attempt).integers(0, n, size=n)
            try:
                return np.asarray(statistic(idx), dtype=float), attempt
            except retry_on:
                continue
        return None, cap + 1

    workers = thread_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(replicates)))
    else:
        results = [one(b) for b in range(replicates)]

    redraws = sum(r[1] for r in results)
    if redraws > cap or any(r[0] is None for r in results):
        raise BootstrapExhausted(f"{redraws} redraws exceeded the cap of {cap}")
    return np.stack([r[0] for r in results])


def percentile_interval(values: np.ndarray, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = np.percentile(values, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0, method="linear")
    return lo, hi


def bootstrap(
    statistic: Callable[[np.ndarray], float],
    n: int,
    replicates: int = 1000,
    seed: int = 0,
    *,
    alpha: float = 0.05,
    retry_on: tuple[type[BaseException], ...] = (),
    workers: int | None = None,
) -> BootstrapSummary:
    """Percentile bootstrap interval of a scalar statistic.

    ``statistic`` receives an integer index array into the dataset; the point
    estimate is ``statistic(arange(n))``.
    """
    point = float(statistic(np.arange(n)))
    reps = bootstrap_replicates(
        statistic, n, replicates, seed, retry_on=retry_on, workers=workers
    )
    lo, hi = percentile_interval(reps, alpha)
    return BootstrapSummary(point, float(lo), float(hi), replicates, seed)

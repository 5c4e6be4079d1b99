"""Stratum registry and the domain types shared across the pipeline.

A stratum is addressed by a ``(dimension_id, stratum_id)`` tuple, e.g.
``("ideology", "rep")``. In files the same key is written ``"ideology=rep"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timezone
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping

from .errors import DistributionInvalid, RegistryError, ValidationError

StratumKey = tuple[str, str]

#: Key under which intercept statistics are stored in :class:`FittedModel`.
INTERCEPT = ("const", "const")

SUM_TOL = 1e-9
CONSISTENCY_TOL = 1e-6


class Election(str, Enum):
    Y2016 = "2016"
    Y2020 = "2020"

    @property
    def day(self) -> date:
        return ELECTION_DAYS[self]

    @property
    def cutoff(self) -> datetime:
        """Last instant (UTC) at which a poll still counts for this season."""
        return datetime.combine(self.day, time(23, 59, 59, 999999), tzinfo=timezone.utc)

    @property
    def democrat(self) -> str:
        return "clinton" if self is Election.Y2016 else "biden"


ELECTION_DAYS = {
    Election.Y2016: date(2016, 11, 8),
    Election.Y2020: date(2020, 11, 3),
}


def format_key(key: StratumKey) -> str:
    return f"{key[0]}={key[1]}"


def parse_key(text: str) -> StratumKey:
    dim, sep, stratum = text.partition("=")
    if not sep or not dim or not stratum:
        raise ValidationError(f"malformed stratum key {text!r}, expected 'dimension=stratum'")
    return dim, stratum


# ---------------------------------------------------------------------------
# Registry


@dataclass(frozen=True)
class Dimension:
    id: str
    strata: tuple[str, ...]
    reference: str

    @property
    def predictors(self) -> tuple[str, ...]:
        """Strata that get a regression column (all but the reference)."""
        return tuple(s for s in self.strata if s != self.reference)


@dataclass(frozen=True)
class DimensionRegistry:
    dimensions: tuple[Dimension, ...]
    version: int = 1

    def __getitem__(self, dim_id: str) -> Dimension:
        for d in self.dimensions:
            if d.id == dim_id:
                return d
        raise KeyError(dim_id)

    def __contains__(self, dim_id: object) -> bool:
        return any(d.id == dim_id for d in self.dimensions)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.dimensions)

    def columns(self, dimension_set: Iterable[str] | None = None) -> list[StratumKey]:
        """Regression column keys, in registry order, for ``dimension_set``."""
        wanted = set(self.ids if dimension_set is None else dimension_set)
        unknown = wanted - set(self.ids)
        if unknown:
            raise RegistryError(f"unknown dimensions: {sorted(unknown)}")
        return [(d.id, g) for d in self.dimensions if d.id in wanted for g in d.predictors]

    def ordered(self, dimension_set: Iterable[str]) -> tuple[str, ...]:
        """``dimension_set`` in registry order."""
        wanted = set(dimension_set)
        return tuple(i for i in self.ids if i in wanted)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "dimensions": [
                {"id": d.id, "strata": list(d.strata), "reference": d.reference}
                for d in self.dimensions
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping, *, check: bool = True) -> "DimensionRegistry":
        try:
            dims = tuple(
                Dimension(str(d["id"]), tuple(str(s) for s in d["strata"]), str(d["reference"]))
                for d in data["dimensions"]
            )
        except (KeyError, TypeError) as exc:
            raise RegistryError(f"malformed registry: {exc}") from exc
        reg = cls(dims, int(data.get("version", 1)))
        if check:
            problems = validate_registry(reg)
            if problems:
                raise RegistryError("; ".join(problems))
        return reg


def validate_registry(registry: DimensionRegistry) -> list[str]:
    """Return a list of violations; an empty list means the registry is valid."""
    problems = []
    seen = set()
    for d in registry.dimensions:
        if d.id in seen:
            problems.append(f"duplicate dimension id {d.id!r}")
        seen.add(d.id)
        if d.id == INTERCEPT[0]:
            problems.append(f"dimension id {d.id!r} is reserved for the intercept")
        if len(d.strata) < 2:
            problems.append(f"dimension {d.id!r}: dimension with <2 strata")
        if len(set(d.strata)) != len(d.strata):
            problems.append(f"dimension {d.id!r}: duplicate stratum ids")
        if d.reference not in d.strata:
            problems.append(f"dimension {d.id!r}: reference not in dimension ({d.reference!r})")
    return problems


def default_registry() -> DimensionRegistry:
    text = resources.files("pollstrat").joinpath("data/default_registry.json").read_text("utf-8")
    return DimensionRegistry.from_dict(json.loads(text))


#: Dimensions used for poststratification by default; ``bot`` and
#: ``first_option`` stay in the diagnostic regression only.
POSTSTRAT_DIMENSIONS = ("gender", "age", "ideology", "location")
REGRESSION_DIMENSIONS = ("gender", "age", "ideology", "location", "bot", "first_option")


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class PollRecord:
    poll_id: str
    author_id: str
    created_at: datetime
    election: Election
    options: tuple[tuple[str, int], ...]
    retweets: int = 0
    favorites: int = 0

    def __post_init__(self):
        if not 2 <= len(self.options) <= 4:
            raise ValidationError(f"poll {self.poll_id}: option count {len(self.options)} outside 2-4")
        for label, votes in self.options:
            if not isinstance(votes, int) or isinstance(votes, bool) or votes < 0:
                raise ValidationError(f"poll {self.poll_id}: bad vote count {votes!r} for {label!r}")
        if self.created_at.tzinfo is None:
            raise ValidationError(f"poll {self.poll_id}: created_at must be timezone-aware")
        if self.created_at > self.election.cutoff:
            raise ValidationError(f"poll {self.poll_id}: post-election ({self.created_at.isoformat()})")

    @property
    def total_votes(self) -> int:
        return sum(v for _, v in self.options)

    def to_dict(self) -> dict:
        return {
            "poll_id": self.poll_id,
            "author_id": self.author_id,
            "created_at": self.created_at.isoformat(),
            "election": self.election.value,
            "options": [[label, votes] for label, votes in self.options],
            "retweets": self.retweets,
            "favorites": self.favorites,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PollRecord":
        return cls(
            poll_id=data["poll_id"],
            author_id=data["author_id"],
            created_at=datetime.fromisoformat(data["created_at"]),
            election=Election(data["election"]),
            options=tuple((str(label), int(votes)) for label, votes in data["options"]),
            retweets=int(data["retweets"]),
            favorites=int(data["favorites"]),
        )


@dataclass(frozen=True)
class StratumMarginals:
    """Per-poll distribution of proxy voters over each dimension's strata.

    ``coverage[d]`` is False when no proxy user had dimension ``d`` observed;
    such dimensions carry no entries and are imputed at design time.
    """

    poll_id: str
    entries: Mapping[StratumKey, float]
    coverage: Mapping[str, bool]

    def __post_init__(self):
        sums: dict[str, float] = {}
        for (dim, _), value in self.entries.items():
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"poll {self.poll_id}: fraction {value} outside [0,1]")
            if not self.coverage.get(dim, False):
                raise ValidationError(f"poll {self.poll_id}: entry for unobserved dimension {dim!r}")
            sums[dim] = sums.get(dim, 0.0) + value
        for dim, observed in self.coverage.items():
            if observed and abs(sums.get(dim, 0.0) - 1.0) > SUM_TOL:
                raise ValidationError(
                    f"poll {self.poll_id}: fractions of {dim!r} sum to {sums.get(dim, 0.0)}"
                )

    def observed(self, dim: str) -> bool:
        return bool(self.coverage.get(dim, False))

    def get(self, key: StratumKey) -> float:
        return self.entries.get(key, 0.0)

    def to_dict(self) -> dict:
        return {
            "poll_id": self.poll_id,
            "entries": {format_key(k): v for k, v in self.entries.items()},
            "coverage": dict(self.coverage),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "StratumMarginals":
        return cls(
            poll_id=data["poll_id"],
            entries={parse_key(k): float(v) for k, v in data["entries"].items()},
            coverage={str(k): bool(v) for k, v in data["coverage"].items()},
        )


# ---------------------------------------------------------------------------
# Fitted model


@dataclass(frozen=True)
class FittedModel:
    """OLS fit of poll outcomes on stratum marginals.

    Inference maps (``std_errors``, ``t_stats``, ``p_values``) include the
    intercept under :data:`INTERCEPT`.
    """

    registry: DimensionRegistry
    dimension_set: tuple[str, ...]
    intercept: float
    coefficients: Mapping[StratumKey, float]
    std_errors: Mapping[StratumKey, float]
    t_stats: Mapping[StratumKey, float]
    p_values: Mapping[StratumKey, float]
    r2: float
    adj_r2: float
    n_obs: int
    min_votes: int = 0
    imputation_means: Mapping[StratumKey, float] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.registry.columns(self.dimension_set)
        for key in self.coefficients:
            if key[0] not in self.registry:
                raise ValidationError(f"coefficient {format_key(key)} has unknown dimension")
            dim = self.registry[key[0]]
            if key[1] == dim.reference:
                raise ValidationError(f"coefficient {format_key(key)} is keyed by a reference stratum")
            if key[1] not in dim.strata:
                raise ValidationError(f"coefficient {format_key(key)} has unknown stratum")
        if set(self.coefficients) != set(expected):
            raise ValidationError("coefficients do not match the dimension set's predictor columns")
        if self.n_obs < len(expected) + 1:
            raise ValidationError(f"n_obs={self.n_obs} below number of parameters {len(expected) + 1}")

    @property
    def column_keys(self) -> list[StratumKey]:
        return self.registry.columns(self.dimension_set)

    def coefficient(self, key: StratumKey) -> float:
        """Coefficient of ``key``; reference strata contribute 0."""
        return self.coefficients.get(key, 0.0)

    def to_dict(self) -> dict:
        def enc(mapping):
            return {format_key(k): _enc_float(v) for k, v in mapping.items()}

        return {
            "registry": self.registry.to_dict(),
            "dimension_set": list(self.dimension_set),
            "intercept": self.intercept,
            "coefficients": enc(self.coefficients),
            "std_errors": enc(self.std_errors),
            "t_stats": enc(self.t_stats),
            "p_values": enc(self.p_values),
            "r2": _enc_float(self.r2),
            "adj_r2": _enc_float(self.adj_r2),
            "n_obs": self.n_obs,
            "min_votes": self.min_votes,
            "imputation_means": enc(self.imputation_means),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FittedModel":
        def dec(mapping):
            return {parse_key(k): _dec_float(v) for k, v in mapping.items()}

        try:
            return cls(
                registry=DimensionRegistry.from_dict(data["registry"]),
                dimension_set=tuple(data["dimension_set"]),
                intercept=float(data["intercept"]),
                coefficients=dec(data["coefficients"]),
                std_errors=dec(data["std_errors"]),
                t_stats=dec(data["t_stats"]),
                p_values=dec(data["p_values"]),
                r2=_dec_float(data["r2"]),
                adj_r2=_dec_float(data["adj_r2"]),
                n_obs=int(data["n_obs"]),
                min_votes=int(data["min_votes"]),
                imputation_means=dec(data.get("imputation_means", {})),
            )
        except KeyError as exc:
            raise ValidationError(f"model missing field {exc}") from exc


def _enc_float(x: float):
    # JSON has no NaN/inf; store them as strings so files stay strict JSON.
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _dec_float(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# Reference (population) distribution


@dataclass(frozen=True)
class ReferenceDistribution:
    """Population marginals, cross-dimension conditionals and optional outcomes.

    ``conditionals[(condition, target)]`` is p(target | condition) where both are
    stratum keys from different dimensions. ``outcomes`` maps ``"overall"`` or a
    stratum key to the observed focal-candidate share.
    """

    election: Election | None
    marginals: Mapping[StratumKey, float]
    conditionals: Mapping[tuple[StratumKey, StratumKey], float] = field(default_factory=dict)
    outcomes: Mapping[str | StratumKey, float] = field(default_factory=dict)

    def __post_init__(self):
        check_reference(self)

    def marginal_dimensions(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for (dim, g), p in self.marginals.items():
            out.setdefault(dim, {})[g] = p
        return out

    def conditional(self, condition: StratumKey, dim: str) -> dict[str, float] | None:
        """p(. | condition) over the strata of ``dim``, or None if absent."""
        out = {t[1]: p for (c, t), p in self.conditionals.items() if c == condition and t[0] == dim}
        return out or None

    def to_dict(self) -> dict:
        marg: dict[str, dict[str, float]] = {}
        for (dim, g), p in self.marginals.items():
            marg.setdefault(dim, {})[g] = p
        cond: dict[str, dict[str, dict[str, float]]] = {}
        for (c, (dim, g)), p in self.conditionals.items():
            cond.setdefault(format_key(c), {}).setdefault(dim, {})[g] = p
        outcomes = {k if isinstance(k, str) else format_key(k): v for k, v in self.outcomes.items()}
        return {
            "schema_version": 1,
            "election": None if self.election is None else self.election.value,
            "marginals": marg,
            "conditionals": cond,
            "outcomes": outcomes,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ReferenceDistribution":
        marginals = {
            (str(dim), str(g)): float(p)
            for dim, dist in data.get("marginals", {}).items()
            for g, p in dist.items()
        }
        conditionals = {
            (parse_key(c), (str(dim), str(g))): float(p)
            for c, targets in data.get("conditionals", {}).items()
            for dim, dist in targets.items()
            for g, p in dist.items()
        }
        outcomes: dict = {}
        for k, v in data.get("outcomes", {}).items():
            outcomes[k if k == "overall" else parse_key(k)] = float(v)
        election = data.get("election")
        return cls(
            election=None if election is None else Election(str(election)),
            marginals=marginals,
            conditionals=conditionals,
            outcomes=outcomes,
        )


def check_reference(ref: ReferenceDistribution) -> None:
    """Raise :class:`DistributionInvalid` naming the first violated invariant."""
    for key, p in list(ref.marginals.items()) + [(t, p) for (_, t), p in ref.conditionals.items()]:
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise DistributionInvalid(f"probability {p} for {format_key(key)} outside [0,1]")
    margs = ref.marginal_dimensions()
    for dim, dist in margs.items():
        total = math.fsum(dist.values())
        if abs(total - 1.0) > SUM_TOL:
            raise DistributionInvalid(f"marginal of {dim!r} sums to {total!r}")

    conds: dict[tuple[StratumKey, str], dict[str, float]] = {}
    for (c, (dim, g)), p in ref.conditionals.items():
        if c[0] == dim:
            raise DistributionInvalid(f"conditional of {dim!r} on its own stratum {format_key(c)}")
        conds.setdefault((c, dim), {})[g] = p
    for (c, dim), dist in conds.items():
        total = math.fsum(dist.values())
        if abs(total - 1.0) > SUM_TOL:
            raise DistributionInvalid(f"conditional p({dim} | {format_key(c)}) sums to {total!r}")

    # law of total probability, wherever every condition stratum is present
    for d0, cond_marg in margs.items():
        for dim, target_marg in margs.items():
            if dim == d0 or not all(((d0, g), dim) in conds for g in cond_marg):
                continue
            for g2, p2 in target_marg.items():
                mixed = math.fsum(cond_marg[g] * conds[((d0, g), dim)].get(g2, 0.0) for g in cond_marg)
                if abs(mixed - p2) > CONSISTENCY_TOL:
                    raise DistributionInvalid(
                        f"conditionals p({dim} | {d0}) inconsistent with marginal "
                        f"{format_key((dim, g2))}: {mixed!r} vs {p2!r}"
                    )
    for k, v in ref.outcomes.items():
        if k != "overall" and not isinstance(k, tuple):
            raise DistributionInvalid(f"outcome key {k!r} must be 'overall' or a stratum key")
        if math.isnan(v):
            raise DistributionInvalid(f"outcome for {k!r} is NaN")

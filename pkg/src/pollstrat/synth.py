"""Synthetic poll corpora with known ground truth.

Every poll draws its own audience composition, so proxy marginals vary
across polls and differ from the population. Poll outcomes follow the
additive stratum model exactly (plus optional Gaussian noise), which makes
the generated corpus an end-to-end oracle for fitting and poststratification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Mapping, Sequence

import numpy as np

from .attributes import SWING_STATES, US_STATES, Role, UserAttributeRecord
from .core import (
    POSTSTRAT_DIMENSIONS,
    DimensionRegistry,
    Election,
    PollRecord,
    ReferenceDistribution,
    StratumKey,
    default_registry,
    format_key,
    parse_key,
)
from .errors import ValidationError
from .ingest import CorpusBundle

#: Coefficients of a plausible additive model (registry keys), used by default.
DEFAULT_COEFFICIENTS = {
    ("gender", "male"): -0.08,
    ("age", "30to39"): 0.07,
    ("age", "40plus"): 0.15,
    ("ideology", "dem"): -0.15,
    ("ideology", "rep"): 0.38,
    ("location", "blue_state"): -0.04,
    ("location", "red_state"): 0.02,
}
DEFAULT_INTERCEPT = 0.38

_NOISE_ATTEMPTS = 1000
_SUPPORTED = {"gender", "age", "ideology", "location", "bot", "first_option"}


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    n_polls: int
    population: ReferenceDistribution
    true_intercept: float = DEFAULT_INTERCEPT
    true_coefficients: Mapping[StratumKey, float] = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))
    dimension_set: tuple[str, ...] = POSTSTRAT_DIMENSIONS
    sample_marginals: Mapping[StratumKey, float] | None = None
    concentration: float = 20.0
    missingness: Mapping[str, float] = field(default_factory=dict)
    noise_sd: float = 0.0
    votes_low: int = 10
    votes_high: int = 5000
    proxies_mean: float = 30.0
    extra_option_rate: float = 0.3
    trump_first_rate: float = 0.7
    org_rate: float = 0.0
    election: Election = Election.Y2020
    registry: DimensionRegistry = field(default_factory=default_registry)

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if self.n_polls < 1:
            raise ValidationError("n_polls must be >= 1")
        if not 1 <= self.votes_low <= self.votes_high:
            raise ValidationError("need 1 <= votes_low <= votes_high")
        unsupported = set(self.dimension_set) - _SUPPORTED
        if unsupported:
            raise ValidationError(f"synthetic generation does not support dimensions {sorted(unsupported)}")
        allowed = set(self.registry.columns(self.dimension_set))
        extra = set(self.true_coefficients) - allowed
        if extra:
            raise ValidationError(f"coefficients outside the dimension set: {sorted(map(format_key, extra))}")
        for dim in self.dimension_set:
            for g in self.registry[dim].strata:
                if (dim, g) not in self.population.marginals:
                    raise ValidationError(f"population lacks marginal {format_key((dim, g))}")
        for dim, rate in self.missingness.items():
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"missingness rate for {dim!r} outside [0, 1]")

    def coefficient(self, key: StratumKey) -> float:
        return float(self.true_coefficients.get(key, 0.0))

    def to_dict(self) -> dict:
        pop = self.population.to_dict()
        pop.pop("outcomes", None)
        return {
            "schema_version": 1,
            "seed": self.seed,
            "n_polls": self.n_polls,
            "population": pop,
            "true_intercept": self.true_intercept,
            "true_coefficients": {format_key(k): v for k, v in self.true_coefficients.items()},
            "dimension_set": list(self.dimension_set),
            "sample_marginals": None
            if self.sample_marginals is None
            else {format_key(k): v for k, v in self.sample_marginals.items()},
            "concentration": self.concentration,
            "missingness": dict(self.missingness),
            "noise_sd": self.noise_sd,
            "votes_low": self.votes_low,
            "votes_high": self.votes_high,
            "proxies_mean": self.proxies_mean,
            "extra_option_rate": self.extra_option_rate,
            "trump_first_rate": self.trump_first_rate,
            "org_rate": self.org_rate,
            "election": self.election.value,
            "registry": self.registry.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticSpec":
        sample = data.get("sample_marginals")
        kwargs = dict(
            seed=int(data["seed"]),
            n_polls=int(data["n_polls"]),
            population=ReferenceDistribution.from_dict(data["population"]),
        )
        if "registry" in data:
            kwargs["registry"] = DimensionRegistry.from_dict(data["registry"])
        if "true_coefficients" in data:
            kwargs["true_coefficients"] = {parse_key(k): float(v) for k, v in data["true_coefficients"].items()}
        if sample is not None:
            kwargs["sample_marginals"] = {parse_key(k): float(v) for k, v in sample.items()}
        if "dimension_set" in data:
            kwargs["dimension_set"] = tuple(data["dimension_set"])
        if "election" in data:
            kwargs["election"] = Election(str(data["election"]))
        if "missingness" in data:
            kwargs["missingness"] = {str(k): float(v) for k, v in data["missingness"].items()}
        for name in ("true_intercept", "concentration", "noise_sd", "proxies_mean",
                     "extra_option_rate", "trump_first_rate", "org_rate"):
            if name in data:
                kwargs[name] = float(data[name])
        for name in ("votes_low", "votes_high"):
            if name in data:
                kwargs[name] = int(data[name])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Populations


def population_from_joint(
    registry: DimensionRegistry,
    dims: Sequence[str],
    joint: np.ndarray,
    election: Election | None = None,
) -> ReferenceDistribution:
    """Marginals and all pairwise conditionals of a joint table over ``dims``.

    ``joint`` has one axis per dimension (registry stratum order) and sums to 1.
    """
    joint = np.asarray(joint, dtype=float)
    joint = joint / joint.sum()
    marginals: dict[StratumKey, float] = {}
    conditionals: dict[tuple[StratumKey, StratumKey], float] = {}
    axes = range(len(dims))
    for a, da in enumerate(dims):
        pa = joint.sum(axis=tuple(x for x in axes if x != a))
        for i, g in enumerate(registry[da].strata):
            marginals[(da, g)] = float(pa[i])
        for b, db in enumerate(dims):
            if b == a:
                continue
            pab = joint.sum(axis=tuple(x for x in axes if x not in (a, b)))
            if a > b:
                pab = pab.T
            for i, g in enumerate(registry[da].strata):
                if pa[i] <= 0:
                    continue
                row = pab[i] / pab[i].sum()
                for j, h in enumerate(registry[db].strata):
                    conditionals[((da, g), (db, h))] = float(row[j])
    return ReferenceDistribution(election, marginals, conditionals)


def random_population(
    registry: DimensionRegistry,
    dims: Sequence[str],
    rng: np.random.Generator,
    concentration: float = 2.0,
    election: Election | None = None,
) -> ReferenceDistribution:
    """A random, internally consistent population over ``dims``."""
    shape = tuple(len(registry[d].strata) for d in dims)
    joint = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
    return population_from_joint(registry, dims, joint, election)


def eq2_truth(spec: SyntheticSpec) -> float:
    """Population-level outcome under the true additive model."""
    return spec.true_intercept + math.fsum(
        spec.coefficient(key) * spec.population.marginals[key]
        for key in spec.registry.columns(spec.dimension_set)
    )


def ground_truth(spec: SyntheticSpec) -> dict:
    """True overall and per-stratum outcomes (keys ``"overall"`` and stratum keys)."""
    truth: dict = {"overall": eq2_truth(spec)}
    pop = spec.population
    for d0 in spec.dimension_set:
        for g0 in spec.registry[d0].strata:
            total = spec.true_intercept
            ok = True
            for dim, g in spec.registry.columns(spec.dimension_set):
                if dim == d0:
                    total += spec.coefficient((dim, g)) * (g == g0)
                    continue
                p = pop.conditionals.get(((d0, g0), (dim, g)))
                if p is None:
                    ok = False
                    break
                total += spec.coefficient((dim, g)) * p
            if ok:
                truth[(d0, g0)] = total
    return truth


def default_spec(
    seed: int = 0,
    n_polls: int = 500,
    *,
    noise_sd: float = 0.0,
    missingness: float | Mapping[str, float] = 0.0,
    dimension_set: Sequence[str] = POSTSTRAT_DIMENSIONS,
    **overrides,
) -> SyntheticSpec:
    """A spec with a random population and an audience skewed away from it."""
    registry = overrides.pop("registry", None) or default_registry()
    rng = np.random.default_rng([seed, 7919])
    dims = registry.ordered(dimension_set)
    population = random_population(registry, dims, rng, concentration=2.0, election=overrides.get("election"))
    sample = {}
    for d in dims:
        strata = registry[d].strata
        base = np.asarray([population.marginals[(d, g)] for g in strata])
        tilt = rng.dirichlet(np.full(len(strata), 8.0))
        mixed = 0.5 * base + 0.5 * tilt
        sample.update({(d, g): float(p) for g, p in zip(strata, mixed / mixed.sum())})
    if not isinstance(missingness, Mapping):
        missingness = {d: float(missingness) for d in dims if d != "first_option"}
    coefs = overrides.pop("true_coefficients", None)
    if coefs is None:
        allowed = set(registry.columns(dims))
        coefs = {k: v for k, v in DEFAULT_COEFFICIENTS.items() if k in allowed}
    return SyntheticSpec(
        seed=seed,
        n_polls=n_polls,
        population=population,
        true_coefficients=coefs,
        dimension_set=dims,
        sample_marginals=sample,
        noise_sd=noise_sd,
        missingness=missingness,
        registry=registry,
        **overrides,
    )


# ---------------------------------------------------------------------------
# Corpus generation


@dataclass(frozen=True)
class SyntheticCorpus:
    spec: SyntheticSpec
    bundle: CorpusBundle
    ground_truth: dict
    color_map: dict[str, str]
    true_shares: dict[str, float]


def synthetic_color_map(seed: int) -> dict[str, str]:
    rng = np.random.default_rng([seed, 104729])
    cmap = {}
    for state in sorted(US_STATES):
        cmap[state] = "swing" if state in SWING_STATES else ("red" if rng.random() < 0.5 else "blue")
    return cmap


_AGE_RANGES = {"under30": (18, 29), "30to39": (30, 39), "40plus": (40, 85)}
_IDEOLOGY_RANGES = {"dem": (-2.95, -1.05), "moderate": (-0.95, 0.95), "rep": (1.05, 2.95)}
_BOT_RANGES = {"bot": (0.85, 0.99), "not_bot": (0.0, 0.8)}


def _attribute_values(dim: str, strata: Sequence[str], labels: np.ndarray, rng, states) -> list:
    """Raw attribute values that map back to ``strata[labels]`` when binned."""
    names = [strata[k] for k in labels]
    n = len(names)
    if dim == "gender":
        return names
    if dim == "age":
        lo, hi = np.array([_AGE_RANGES[g] for g in names]).reshape(n, 2).T
        return [int(a) for a in rng.integers(lo, hi + 1)]
    if dim in ("ideology", "bot"):
        ranges = _IDEOLOGY_RANGES if dim == "ideology" else _BOT_RANGES
        lo, hi = np.array([ranges[g] for g in names]).reshape(n, 2).T
        return [round(float(v), 4) for v in rng.uniform(lo, hi)]
    if dim == "location":
        picks = rng.random(n)
        return [states[g][int(u * len(states[g]))] for g, u in zip(names, picks)]
    raise ValidationError(f"no attribute generator for dimension {dim!r}")


_FIELD = {"gender": "gender", "age": "age_years", "ideology": "ideology_score",
          "location": "state", "bot": "bot_score"}


def _generate_poll(spec: SyntheticSpec, index: int, states, sample) -> tuple[PollRecord, list, float]:
    rng = np.random.default_rng([spec.seed, index])
    reg = spec.registry
    poll_id = f"p{index:05d}"
    n_users = max(1, int(rng.poisson(spec.proxies_mean)))

    trump_first = bool(rng.random() < spec.trump_first_rate)
    fractions: dict[StratumKey, float] = {}
    user_values: dict[str, list] = {}
    for dim in spec.dimension_set:
        strata = reg[dim].strata
        if dim == "first_option":
            for g in strata:
                fractions[(dim, g)] = float((g == "trump") == trump_first)
            continue
        alpha = spec.concentration * np.asarray([sample[(dim, g)] for g in strata])
        pi = rng.dirichlet(np.maximum(alpha, 1e-3))
        counts = rng.multinomial(n_users, pi)
        labels = np.repeat(np.arange(len(strata)), counts)
        rng.shuffle(labels)
        for i, g in enumerate(strata):
            fractions[(dim, g)] = counts[i] / n_users
        if rng.random() < spec.missingness.get(dim, 0.0):
            user_values[dim] = [None] * n_users
        else:
            user_values[dim] = _attribute_values(dim, strata, labels, rng, states)

    expected = spec.true_intercept + math.fsum(
        spec.coefficient(k) * fractions[k] for k in reg.columns(spec.dimension_set)
    )
    share = expected
    if spec.noise_sd > 0:
        for _ in range(_NOISE_ATTEMPTS):
            share = expected + float(rng.normal(0.0, spec.noise_sd))
            if 0.0 <= share <= 1.0:
                break
        else:
            raise ValidationError(f"poll {index}: could not draw an outcome inside [0, 1]")
    elif not 0.0 <= share <= 1.0:
        raise ValidationError(f"poll {index}: expected outcome {share} outside [0, 1]")

    log_lo, log_hi = math.log(spec.votes_low), math.log(spec.votes_high + 1)
    votes = min(spec.votes_high, int(math.exp(rng.uniform(log_lo, log_hi))))
    v_trump = int(round(share * votes))
    dem = "Hillary Clinton" if spec.election is Election.Y2016 else "Joe Biden"
    focal = [("Donald Trump", v_trump), (dem, votes - v_trump)]
    if not trump_first:
        focal.reverse()
    options = list(focal)
    if rng.random() < spec.extra_option_rate:
        extra = ("Someone else", int(rng.integers(0, votes // 4 + 1)))
        options.insert(int(rng.integers(0, 3)), extra)

    year = int(spec.election.value)
    start = datetime(year, 9, 1, tzinfo=timezone.utc)
    span = (datetime.combine(spec.election.day, datetime.min.time(), timezone.utc) - start).total_seconds()
    created = start + timedelta(seconds=int(rng.integers(0, int(span))))
    total = sum(v for _, v in options)
    poll = PollRecord(
        poll_id=poll_id,
        author_id=f"a{index:05d}",
        created_at=created,
        election=spec.election,
        options=tuple(options),
        retweets=int(rng.poisson(0.02 * total + 1)),
        favorites=int(rng.poisson(0.05 * total + 1)),
    )

    records = []

    def record(user_id, role, fields, org):
        records.append(UserAttributeRecord(user_id=user_id, role=role, poll_id=poll_id, org_score=org, **fields))

    retweeted = rng.random(n_users) < 0.4
    orgs = np.round(rng.uniform(0.0, 0.5, n_users), 4)
    doubled = rng.random(n_users) < 0.1
    for u in range(n_users):
        fields = {_FIELD[d]: vals[u] for d, vals in user_values.items()}
        role = Role.RETWEETER if retweeted[u] else Role.FAVORITER
        org = float(orgs[u])
        record(f"u{index:05d}_{u}", role, fields, org)
        if doubled[u]:
            other = Role.FAVORITER if role is Role.RETWEETER else Role.RETWEETER
            record(f"u{index:05d}_{u}", other, fields, org)
    # distractors the aggregation must ignore: the author and organization accounts
    decoy = {_FIELD[d]: _attribute_values(d, reg[d].strata, np.zeros(1, int), rng, states)[0] for d in user_values}
    record(poll.author_id, Role.AUTHOR, decoy, 0.1)
    if rng.random() < spec.org_rate:
        record(f"o{index:05d}", Role.RETWEETER, decoy, 0.97)
    return poll, records, share


def generate(spec: SyntheticSpec) -> SyntheticCorpus:
    """Draw a corpus from ``spec``; identical specs give identical corpora."""
    color_map = synthetic_color_map(spec.seed)
    states: dict[str, list[str]] = {"swing_state": sorted(SWING_STATES)}
    for color, stratum in (("red", "red_state"), ("blue", "blue_state")):
        states[stratum] = sorted(s for s, c in color_map.items() if c == color)
    sample = spec.sample_marginals or spec.population.marginals
    polls, records, shares = [], [], {}
    for i in range(spec.n_polls):
        poll, recs, share = _generate_poll(spec, i, states, sample)
        polls.append(poll)
        records.extend(recs)
        shares[poll.poll_id] = share
    truth = ground_truth(spec)
    reference = replace(spec.population, outcomes=truth, election=spec.election)
    bundle = CorpusBundle(
        polls=polls,
        attributes=records,
        reference=reference,
        provenance={"synthetic": {"seed": spec.seed, "n_polls": spec.n_polls}},
    )
    return SyntheticCorpus(spec, bundle, truth, color_map, shares)


def brute_force_population_mean(spec: SyntheticSpec, joint: np.ndarray) -> float:
    """Outcome averaged over every cell of ``joint`` (axes in ``spec.dimension_set`` order)."""
    reg = spec.registry
    dims = spec.dimension_set
    total = 0.0
    for cell in itertools.product(*(range(len(reg[d].strata)) for d in dims)):
        y = spec.true_intercept
        for d, i in zip(dims, cell):
            y += spec.coefficient((d, reg[d].strata[i]))
        total += joint[cell] * y
    return total / float(np.sum(joint))

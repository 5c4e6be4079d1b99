"""Turn precomputed user-attribute scores into registry strata and per-poll
marginals of proxy voters (retweeters and favoriters)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import DimensionRegistry, StratumKey, StratumMarginals
from .errors import OutOfRange, UnknownState, ValidationError
from .normalize import NormalizedOutcome

DEFAULT_BOT_THRESHOLD = 0.83
DEFAULT_ORG_CUTOFF = 0.90

SWING_STATES = frozenset(
    {"WI", "PA", "NH", "MN", "AZ", "GA", "VA", "FL", "MI", "NV", "CO", "NC", "ME"}
)
US_STATES = frozenset(
    """AL AK AZ AR CA CO CT DE DC FL GA HI ID IL IN IA KS KY LA ME MD MA MI MN MS MO
    MT NE NV NH NJ NM NY NC ND OH OK OR PA RI SC SD TN TX UT VT VA WA WV WI WY""".split()
)
_COLOR_STRATUM = {"red": "red_state", "blue": "blue_state", "swing": "swing_state"}


class Role(str, Enum):
    AUTHOR = "author"
    RETWEETER = "retweeter"
    FAVORITER = "favoriter"
    FOLLOWER = "follower"


PROXY_ROLES = frozenset({Role.RETWEETER, Role.FAVORITER})


@dataclass(frozen=True)
class UserAttributeRecord:
    user_id: str
    role: Role
    poll_id: str
    ideology_score: float | None = None
    bot_score: float | None = None
    org_score: float | None = None
    age_years: int | None = None
    gender: str | None = None
    state: str | None = None

    def __post_init__(self):
        if self.ideology_score is not None and not -3.0 <= self.ideology_score <= 3.0:
            raise ValidationError(f"ideology_score {self.ideology_score} outside [-3, 3]")
        for name in ("bot_score", "org_score"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} {value} outside [0, 1]")
        if self.age_years is not None and self.age_years < 0:
            raise ValidationError(f"age_years {self.age_years} is negative")
        if self.gender is not None and self.gender not in ("male", "female"):
            raise ValidationError(f"gender {self.gender!r} not in {{male, female}}")


# ---------------------------------------------------------------------------
# Binning


def bin_ideology(score: float) -> str:
    """Three equal-width bins over [-3, 3]; both boundaries belong to ``moderate``."""
    if math.isnan(score) or not -3.0 <= score <= 3.0:
        raise OutOfRange(f"ideology score {score} outside [-3, 3]")
    if score < -1.0:
        return "dem"
    if score > 1.0:
        return "rep"
    return "moderate"


def bin_age(age_years: int) -> str:
    if age_years < 0:
        raise OutOfRange(f"age {age_years} is negative")
    if age_years < 30:
        return "under30"
    if age_years < 40:
        return "30to39"
    return "40plus"


def calibrate_bot_threshold(scores: Sequence[float], annotated_bot_fraction: float) -> float:
    """Smallest cut-off that flags at most ``annotated_bot_fraction`` of users.

    Candidates are the observed scores plus 1.0; a user is a bot iff
    ``score >= threshold``. If even 1.0 flags too many (scores equal to 1.0
    exist), the next float above the maximum score is returned so nobody is
    flagged.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    if s.size == 0:
        raise ValueError("no scores to calibrate on")
    if not 0.0 <= annotated_bot_fraction <= 1.0:
        raise ValueError("annotated_bot_fraction must lie in [0, 1]")
    n = s.size
    for t in np.unique(np.append(s, 1.0)):
        flagged = n - np.searchsorted(s, t, side="left")
        if flagged / n <= annotated_bot_fraction:
            return float(t)
    return math.nextafter(float(s[-1]), math.inf)


def is_bot(score: float, threshold: float = DEFAULT_BOT_THRESHOLD) -> bool:
    return score >= threshold


def filter_organizations(
    records: Iterable[UserAttributeRecord], org_cutoff: float = DEFAULT_ORG_CUTOFF
) -> tuple[list[UserAttributeRecord], list[UserAttributeRecord]]:
    kept, dropped = [], []
    for rec in records:
        (dropped if rec.org_score is not None and rec.org_score > org_cutoff else kept).append(rec)
    return kept, dropped


# ---------------------------------------------------------------------------
# Location


def default_color_map() -> dict[str, str]:
    """The shipped color map: swing states only; red/blue come from results data."""
    text = resources.files("pollstrat").joinpath("data/color_map.json").read_text("utf-8")
    return json.loads(text)


def color_map_from_results(
    results: Mapping[str, tuple[float, float]], base: Mapping[str, str] | None = None
) -> dict[str, str]:
    """Build a full color map from per-state ``(rep, dem)`` vote totals or shares.

    Swing states keep ``"swing"``; any other state is red if the Republican
    candidate won it and blue otherwise.
    """
    cmap = dict(default_color_map() if base is None else base)
    for state, (rep, dem) in results.items():
        state = state.upper()
        if state in SWING_STATES:
            cmap[state] = "swing"
        else:
            cmap[state] = "red" if rep > dem else "blue"
    return cmap


def map_state_color(state: str, color_map: Mapping[str, str]) -> str:
    state = state.strip().upper()
    if state in SWING_STATES:
        return "swing_state"
    try:
        return _COLOR_STRATUM[color_map[state]]
    except KeyError:
        raise UnknownState(f"state {state!r} has no red/blue assignment") from None


# ---------------------------------------------------------------------------
# Per-poll marginals


def _stratum(dim: str, rec: UserAttributeRecord, color_map, bot_threshold) -> str | None:
    if dim == "gender":
        return rec.gender
    if dim == "age":
        return None if rec.age_years is None else bin_age(rec.age_years)
    if dim == "ideology":
        return None if rec.ideology_score is None else bin_ideology(rec.ideology_score)
    if dim == "bot":
        if rec.bot_score is None:
            return None
        return "bot" if is_bot(rec.bot_score, bot_threshold) else "not_bot"
    if dim == "location":
        if rec.state is None or rec.state.strip().upper() not in US_STATES:
            return None  # non-US users do not count toward location
        return map_state_color(rec.state, color_map)
    return None


def aggregate_marginals(
    poll_id: str,
    records: Iterable[UserAttributeRecord],
    registry: DimensionRegistry,
    *,
    outcome: NormalizedOutcome | None = None,
    color_map: Mapping[str, str] | None = None,
    bot_threshold: float = DEFAULT_BOT_THRESHOLD,
    org_cutoff: float = DEFAULT_ORG_CUTOFF,
    proxy_roles: frozenset[Role] = PROXY_ROLES,
) -> StratumMarginals:
    """Fractions of a poll's proxy voters in each stratum.

    Proxies are the poll's retweeters and favoriters, deduplicated by user id
    (first record wins) after dropping organizations. Each dimension's
    denominator counts only users with that attribute observed. The
    ``first_option`` dimension is a point mass taken from ``outcome``.
    """
    color_map = default_color_map() if color_map is None else color_map
    proxies: dict[str, UserAttributeRecord] = {}
    kept, _ = filter_organizations(records, org_cutoff)
    for rec in kept:
        if rec.poll_id != poll_id:
            raise ValidationError(f"record for poll {rec.poll_id} passed with poll {poll_id}")
        if rec.role in proxy_roles:
            proxies.setdefault(rec.user_id, rec)

    entries: dict[StratumKey, float] = {}
    coverage: dict[str, bool] = {}
    for dim in registry.dimensions:
        if dim.id == "first_option":
            coverage[dim.id] = outcome is not None
            if outcome is not None:
                first = "trump" if outcome.trump_listed_first_among_focal else "not_trump"
                for g in dim.strata:
                    entries[(dim.id, g)] = 1.0 if g == first else 0.0
            continue
        counts = dict.fromkeys(dim.strata, 0)
        for rec in proxies.values():
            g = _stratum(dim.id, rec, color_map, bot_threshold)
            if g is None:
                continue
            if g not in counts:
                raise ValidationError(f"stratum {g!r} not in registry dimension {dim.id!r}")
            counts[g] += 1
        total = sum(counts.values())
        coverage[dim.id] = total > 0
        if total:
            for g, c in counts.items():
                entries[(dim.id, g)] = c / total
    return StratumMarginals(poll_id, entries, coverage)

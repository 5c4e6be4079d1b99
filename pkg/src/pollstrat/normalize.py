"""Head-to-head normalization of poll outcomes and option-order features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import Election, PollRecord
from .errors import MissingFocalOption, ZeroFocalVotes

TRUMP = "trump"


@dataclass(frozen=True)
class NormalizedOutcome:
    poll_id: str
    share_focal: float
    effective_votes: int
    trump_listed_first_among_focal: bool
    option_count: int


def canonical_label(label: str) -> str:
    return label.strip().lower().lstrip("@")


def focal_labels(election: Election) -> tuple[str, str]:
    return TRUMP, election.democrat


def _focal_positions(poll: PollRecord, focal: tuple[str, str]) -> tuple[int, int]:
    trump, dem = (canonical_label(f) for f in focal)
    hits: dict[str, list[int]] = {trump: [], dem: []}
    for pos, (label, _) in enumerate(poll.options):
        text = canonical_label(label)
        matched = [name for name in (trump, dem) if name in text]
        if len(matched) == 2:
            raise MissingFocalOption(f"poll {poll.poll_id}: option {label!r} matches both focal candidates")
        if matched:
            hits[matched[0]].append(pos)
    for name, positions in hits.items():
        if len(positions) != 1:
            what = "absent" if not positions else "duplicated"
            raise MissingFocalOption(f"poll {poll.poll_id}: focal option {name!r} {what}")
    return hits[trump][0], hits[dem][0]


def normalize_poll(poll: PollRecord, focal: tuple[str, str] | None = None) -> NormalizedOutcome:
    """Drop non-focal options and renormalize the two focal candidates to sum to one.

    ``focal`` is ``(trump_label, democrat_label)``; by default it is chosen from
    the poll's election season. Labels match case-insensitively on substring.
    """
    if focal is None:
        focal = focal_labels(poll.election)
    i_trump, i_dem = _focal_positions(poll, focal)
    v_trump = poll.options[i_trump][1]
    v_dem = poll.options[i_dem][1]
    total = v_trump + v_dem
    if total == 0:
        raise ZeroFocalVotes(f"poll {poll.poll_id}: no votes for either focal candidate")
    return NormalizedOutcome(
        poll_id=poll.poll_id,
        share_focal=v_trump / total,
        effective_votes=total,
        trump_listed_first_among_focal=i_trump < i_dem,
        option_count=len(poll.options),
    )


def normalize_shares(trump: float, dem: float) -> float:
    """Head-to-head share for already-aggregated results (mainstream or election)."""
    total = trump + dem
    if total <= 0:
        raise ZeroFocalVotes("focal shares sum to zero")
    return trump / total


def position_share_pairs(
    polls: Iterable[PollRecord],
) -> tuple[dict[int, list[tuple[int, float]]], int]:
    """(position, vote share) pairs grouped by option count.

    Position 1 is the top option. Returns ``(groups, n_skipped)`` where skipped
    polls are those with zero total votes.
    """
    groups: dict[int, list[tuple[int, float]]] = {}
    skipped = 0
    for poll in polls:
        total = poll.total_votes
        if total == 0:
            skipped += 1
            continue
        bucket = groups.setdefault(len(poll.options), [])
        for pos, (_, votes) in enumerate(poll.options, start=1):
            bucket.append((pos, votes / total))
    return groups, skipped


def normalize_many(
    polls: Sequence[PollRecord], focal: tuple[str, str] | None = None
) -> tuple[list[NormalizedOutcome], dict[str, str]]:
    """Normalize every poll, collecting per-poll exclusion reasons instead of raising."""
    out, excluded = [], {}
    for poll in polls:
        try:
            out.append(normalize_poll(poll, focal))
        except (MissingFocalOption, ZeroFocalVotes) as exc:
            excluded[poll.poll_id] = f"{type(exc).__name__}: {exc}"
    return out, excluded

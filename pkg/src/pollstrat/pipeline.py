"""Glue from ingested records to ``(NormalizedOutcome, StratumMarginals)`` rows."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .attributes import DEFAULT_BOT_THRESHOLD, UserAttributeRecord, aggregate_marginals
from .core import DimensionRegistry, PollRecord
from .normalize import normalize_many
from .poststrat import PollRow


@dataclass
class PreparedCorpus:
    rows: list[PollRow]
    excluded: dict[str, str] = field(default_factory=dict)


def prepare(
    polls: Sequence[PollRecord],
    attributes: Iterable[UserAttributeRecord],
    registry: DimensionRegistry,
    *,
    color_map: Mapping[str, str] | None = None,
    bot_threshold: float = DEFAULT_BOT_THRESHOLD,
    focal: tuple[str, str] | None = None,
) -> PreparedCorpus:
    """Normalize every poll and aggregate its proxies' attributes.

    Polls that cannot be normalized are listed in ``excluded`` with a reason.
    """
    outcomes, excluded = normalize_many(polls, focal)
    by_poll: dict[str, list[UserAttributeRecord]] = defaultdict(list)
    for rec in attributes:
        by_poll[rec.poll_id].append(rec)
    rows = [
        (
            out,
            aggregate_marginals(
                out.poll_id,
                by_poll.get(out.poll_id, ()),
                registry,
                outcome=out,
                color_map=color_map,
                bot_threshold=bot_threshold,
            ),
        )
        for out in outcomes
    ]
    return PreparedCorpus(rows, excluded)

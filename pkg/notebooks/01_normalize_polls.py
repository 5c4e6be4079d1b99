"""
Head-to-head normalization and the option-order effect
=======================================================

A social poll may list third options; only the two focal candidates count.
"""

from datetime import datetime, timezone

from pollstrat import Election, PollRecord, normalize_poll, pearson
from pollstrat.normalize import position_share_pairs

when = datetime(2020, 10, 12, 18, 0, tzinfo=timezone.utc)
poll = PollRecord("p1", "author", when, Election.Y2020,
                  (("Trump", 60), ("Biden", 30), ("Other", 10)))
out = normalize_poll(poll)
print(f"share_focal={out.share_focal:.4f}  effective_votes={out.effective_votes}  "
      f"trump_first={out.trump_listed_first_among_focal}")

# Scaling every count leaves the share unchanged; so does dropping "Other".
scaled = PollRecord("p2", "author", when, Election.Y2020, (("Trump", 600), ("Biden", 300)))
print("same share after scaling and dropping:", normalize_poll(scaled).share_focal == out.share_focal)

# %%
# Position effect: pair each option's 1-based position with its vote share.
# Top options drawing twice the votes of the bottom one give a negative r.
polls = [
    PollRecord(f"q{i}", "a", when, Election.Y2020, (("A", 2 * k), ("B", k + i % 3), ("C", k)))
    for i, k in enumerate(range(10, 40))
]
groups, skipped = position_share_pairs(polls)
r, p = pearson(groups[3])
print(f"3-option polls: r={r:.3f}, p={p:.2g}, zero-vote polls skipped={skipped}")

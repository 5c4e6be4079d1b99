"""
From inferred user scores to stratum marginals
==============================================

Retweeters and favoriters stand in for the anonymous voters of a poll.
"""

import numpy as np

from pollstrat import default_registry
from pollstrat.attributes import (
    Role, UserAttributeRecord, aggregate_marginals, bin_age, bin_ideology,
    calibrate_bot_threshold, color_map_from_results, map_state_color,
)

# Ideology scores live in [-3, 3] and split into three equal bins.
print([bin_ideology(s) for s in (-3, -1, 0, 1, 3)])
print([bin_age(a) for a in (29, 30, 39, 40)])

# Pick the bot cut-off so the flagged fraction matches an annotated sample.
scores = np.linspace(0, 0.99, 100)
t = calibrate_bot_threshold(scores, 0.10)
print(f"bot threshold {t:.2f} flags {(scores >= t).sum()} of {len(scores)}")

# Red/blue comes from a results table; the 13 swing states always win.
cmap = color_map_from_results({"CA": (0.34, 0.63), "TX": (0.52, 0.46)})
print({s: map_state_color(s, cmap) for s in ("CA", "TX", "WI")})

# %%
# Marginals use only users whose attribute is observed; duplicates count once
# and organizations (org score above 0.90) are dropped.
records = [
    UserAttributeRecord("u1", Role.RETWEETER, "p1", gender="male", ideology_score=2.1, state="TX"),
    UserAttributeRecord("u1", Role.FAVORITER, "p1", gender="male", ideology_score=2.1, state="TX"),
    UserAttributeRecord("u2", Role.FAVORITER, "p1", gender="female", ideology_score=-1.7),
    UserAttributeRecord("u3", Role.RETWEETER, "p1", ideology_score=0.2, state="WI"),
    UserAttributeRecord("news", Role.RETWEETER, "p1", gender="male", org_score=0.97),
    UserAttributeRecord("me", Role.AUTHOR, "p1", gender="male"),
]
marg = aggregate_marginals("p1", records, default_registry(), color_map=cmap)
for key, value in sorted(marg.entries.items()):
    print(f"  {key[0]:>9} {key[1]:<12} {value:.3f}")
print("age observed:", marg.observed("age"))

"""
How many polls are enough?
==========================

Raising the vote threshold M leaves fewer polls and, eventually, larger errors.
"""

from pollstrat import synth
from pollstrat.pipeline import prepare
from pollstrat.poststrat import sweep_csv, threshold_sweep

spec = synth.default_spec(seed=0, n_polls=800, noise_sd=0.05, missingness=0.2)
corpus = synth.generate(spec)
rows = prepare(corpus.bundle.polls, corpus.bundle.attributes, spec.registry,
               color_map=corpus.color_map).rows

grid = [0, 50, 250, 1000, 2000, 3000, 4000, 4500, 4900]
sweep = threshold_sweep(rows, spec.registry, corpus.bundle.reference, thresholds=grid,
                        replicates=200, seed=1)
for row in sweep:
    if row.report is None:
        print(f"M={row.min_votes:>5}  n={row.n_polls:>4}  {row.error}")
    else:
        o = row.report.overall
        print(f"M={row.min_votes:>5}  n={row.n_polls:>4}  abs error {row.report.abs_error:.4f}  "
              f"CI width {o.ci_high - o.ci_low:.4f}")

# %%
# The same table as plot-ready CSV.
print(sweep_csv(sweep))

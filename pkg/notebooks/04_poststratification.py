"""
Debiased overall and per-stratum estimates
==========================================

Fitted coefficients are reweighted by the population's stratum distribution.
"""

from pollstrat import synth
from pollstrat.pipeline import prepare
from pollstrat.poststrat import estimate

spec = synth.default_spec(seed=11, n_polls=500, noise_sd=0.05, missingness=0.2)
corpus = synth.generate(spec)
rows = prepare(corpus.bundle.polls, corpus.bundle.attributes, spec.registry,
               color_map=corpus.color_map).rows

# The raw average over polls reflects the skewed audience, not the population.
raw = sum(o.share_focal for o, _ in rows) / len(rows)
report = estimate(rows, spec.registry, corpus.bundle.reference, replicates=500, seed=0)
o = report.overall
print(f"raw poll mean   {raw:.4f}")
print(f"poststratified  {o.point:.4f}  95% CI [{o.ci_low:.4f}, {o.ci_high:.4f}]")
print(f"truth           {corpus.ground_truth['overall']:.4f}  abs error {report.abs_error:.4f}")

# %%
# Per-stratum estimates pin one dimension and use conditionals for the rest.
for key, s in report.per_stratum.items():
    print(f"{key[0]:>9} {key[1]:<12} {s.point:.3f} [{s.ci_low:.3f}, {s.ci_high:.3f}]  "
          f"truth {corpus.ground_truth[key]:.3f}")
print(f"mean per-stratum abs error {report.mean_stratum_abs_error:.4f}")

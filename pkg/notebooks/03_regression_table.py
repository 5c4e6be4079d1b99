"""
Regressing poll outcomes on audience composition
================================================

A synthetic corpus with known coefficients stands in for rehydrated data.
"""

from pollstrat import REGRESSION_DIMENSIONS, synth
from pollstrat.cli import coefficient_table
from pollstrat.pipeline import prepare
from pollstrat.poststrat import fit

spec = synth.default_spec(seed=3, n_polls=600, noise_sd=0.04, missingness=0.15,
                          dimension_set=REGRESSION_DIMENSIONS)
corpus = synth.generate(spec)
prepared = prepare(corpus.bundle.polls, corpus.bundle.attributes, spec.registry,
                   color_map=corpus.color_map)
print(f"{len(prepared.rows)} polls normalized, {len(prepared.excluded)} excluded")

# Polls under 50 focal votes are dropped; missing dimensions get column means.
model = fit(prepared.rows, spec.registry, REGRESSION_DIMENSIONS, min_votes=50)
print(coefficient_table(model))

# %%
# Compare with the generating values.
for key in model.column_keys:
    name = f"{key[0]}={key[1]}"
    print(f"{name:<22} fitted {model.coefficients[key]:+.3f}  true {spec.coefficient(key):+.3f}")

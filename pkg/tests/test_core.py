import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pollstrat.core import (
    INTERCEPT,
    Dimension,
    DimensionRegistry,
    Election,
    FittedModel,
    PollRecord,
    ReferenceDistribution,
    StratumMarginals,
    validate_registry,
)
from pollstrat.errors import DistributionInvalid, RegistryError, ValidationError

ident = st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=8)


@st.composite
def registries(draw):
    dim_ids = draw(st.lists(ident.filter(lambda s: s != "const"), min_size=1, max_size=4, unique=True))
    dims = []
    for d in dim_ids:
        strata = draw(st.lists(ident, min_size=2, max_size=4, unique=True))
        dims.append(Dimension(d, tuple(strata), draw(st.sampled_from(strata))))
    return DimensionRegistry(tuple(dims))


def test_default_registry_matches_table(registry):
    assert validate_registry(registry) == []
    assert registry.ids == ("gender", "age", "ideology", "location", "bot", "first_option")
    refs = {d.id: d.reference for d in registry.dimensions}
    assert refs == {
        "gender": "female", "age": "under30", "ideology": "moderate",
        "location": "swing_state", "bot": "not_bot", "first_option": "not_trump",
    }
    assert len(registry.columns()) == 9  # non-reference strata of six dimensions


def test_single_stratum_dimension_is_a_violation():
    reg = DimensionRegistry((Dimension("gender", ("male",), "male"),))
    assert any("dimension with <2 strata" in v for v in validate_registry(reg))


def test_reference_must_belong_to_dimension():
    reg = DimensionRegistry((Dimension("gender", ("male", "female"), "unknown"),))
    assert any("reference not in dimension" in v for v in validate_registry(reg))


def test_duplicate_ids_reported():
    d = Dimension("gender", ("male", "male"), "male")
    problems = validate_registry(DimensionRegistry((d, d)))
    assert any("duplicate dimension" in p for p in problems)
    assert any("duplicate stratum" in p for p in problems)


def test_from_dict_raises_on_invalid():
    with pytest.raises(RegistryError):
        DimensionRegistry.from_dict({"dimensions": [{"id": "x", "strata": ["a"], "reference": "a"}]})


@given(registries())
def test_registry_round_trip(reg):
    assert validate_registry(reg) == []
    again = DimensionRegistry.from_dict(json.loads(json.dumps(reg.to_dict())))
    assert again == reg


@settings(max_examples=50)
@given(registries(), st.data())
def test_model_keys_resolve_against_registry(reg, data):
    dims = data.draw(st.lists(st.sampled_from(reg.ids), min_size=1, unique=True))
    keys = reg.columns(dims)
    coefs = {k: data.draw(st.floats(-5, 5)) for k in keys}
    stats = {k: 0.0 for k in [INTERCEPT, *keys]}
    model = FittedModel(reg, tuple(dims), 0.1, coefs, stats, stats, stats, 0.5, 0.4, len(keys) + 5)
    for dim, g in model.coefficients:
        assert g in reg[dim].strata and g != reg[dim].reference
    assert FittedModel.from_dict(json.loads(json.dumps(model.to_dict()))) == model


def _model(registry, **over):
    keys = registry.columns(["gender", "ideology"])
    stats = {k: 0.01 for k in [INTERCEPT, *keys]}
    kw = dict(
        registry=registry, dimension_set=("gender", "ideology"), intercept=0.4,
        coefficients={k: 0.1 for k in keys}, std_errors=stats, t_stats=stats, p_values=stats,
        r2=0.5, adj_r2=0.45, n_obs=20, min_votes=50, imputation_means={k: 0.3 for k in keys},
    )
    kw.update(over)
    return FittedModel(**kw)


def test_model_rejects_reference_keyed_coefficient(registry):
    keys = registry.columns(["gender", "ideology"])
    coefs = {k: 0.1 for k in keys}
    coefs[("ideology", "moderate")] = 0.2
    with pytest.raises(ValidationError, match="reference"):
        _model(registry, coefficients=coefs)


def test_model_requires_enough_observations(registry):
    with pytest.raises(ValidationError):
        _model(registry, n_obs=3)


@given(
    st.text(min_size=1, max_size=6),
    st.lists(st.tuples(st.text(min_size=1, max_size=10), st.integers(0, 10**6)), min_size=2, max_size=4),
    st.integers(0, 10**5),
)
def test_poll_round_trip(poll_id, options, rt):
    from datetime import datetime, timezone

    poll = PollRecord(poll_id, "a", datetime(2016, 11, 8, 23, 59, tzinfo=timezone.utc), Election.Y2016,
                      tuple(options), rt, rt + 1)
    assert PollRecord.from_dict(json.loads(json.dumps(poll.to_dict()))) == poll


def test_poll_after_election_day_rejected():
    from datetime import datetime, timezone

    with pytest.raises(ValidationError, match="post-election"):
        PollRecord("p", "a", datetime(2020, 11, 4, tzinfo=timezone.utc), Election.Y2020, (("a", 1), ("b", 2)))


@given(st.lists(st.integers(0, 50), min_size=2, max_size=4).filter(lambda c: sum(c) > 0))
def test_marginals_round_trip(counts):
    total = sum(counts)
    entries = {("age", f"s{i}"): c / total for i, c in enumerate(counts)}
    m = StratumMarginals("p", entries, {"age": True, "gender": False})
    assert StratumMarginals.from_dict(json.loads(json.dumps(m.to_dict()))) == m


def test_marginals_must_sum_to_one():
    with pytest.raises(ValidationError):
        StratumMarginals("p", {("gender", "male"): 0.6, ("gender", "female"): 0.6}, {"gender": True})


def _ref(**over):
    kw = dict(
        election=Election.Y2020,
        marginals={("gender", "male"): 0.4, ("gender", "female"): 0.6,
                   ("ideology", "rep"): 0.5, ("ideology", "dem"): 0.5},
        conditionals={
            (("gender", "male"), ("ideology", "rep")): 0.75, (("gender", "male"), ("ideology", "dem")): 0.25,
            (("gender", "female"), ("ideology", "rep")): 1 / 3, (("gender", "female"), ("ideology", "dem")): 2 / 3,
        },
        outcomes={"overall": 0.47, ("gender", "male"): 0.53},
    )
    kw.update(over)
    return ReferenceDistribution(**kw)


def test_reference_round_trip():
    ref = _ref()
    assert ReferenceDistribution.from_dict(json.loads(json.dumps(ref.to_dict()))) == ref


def test_reference_inconsistent_conditionals_rejected():
    cond = dict(_ref().conditionals)
    cond[(("gender", "male"), ("ideology", "rep"))] = 0.76
    cond[(("gender", "male"), ("ideology", "dem"))] = 0.24
    with pytest.raises(DistributionInvalid, match="inconsistent"):
        _ref(conditionals=cond)


def test_reference_marginal_not_summing_rejected():
    with pytest.raises(DistributionInvalid, match="gender"):
        _ref(marginals={("gender", "male"): 0.6, ("gender", "female"): 0.6}, conditionals={})

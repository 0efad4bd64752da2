import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from madacc.labels import (
    LABELS,
    ArgLabel,
    LabelDistribution,
    StancePair,
    argmax,
    label_definitions_block,
    normalize,
    top_two,
)

MC, C, P = ArgLabel.MAJOR_CLAIM, ArgLabel.CLAIM, ArgLabel.PREMISE
FIG2 = {MC: 0.05, C: 0.20, P: 0.75}

# subnormal magnitudes are excluded: their ratios are not scale-stable in floating point
raw_values = st.one_of(st.floats(min_value=-5, max_value=0), st.floats(min_value=1e-6, max_value=1e6))
raw_maps = st.fixed_dictionaries({label: raw_values for label in LABELS})
valid_dists = raw_maps.map(normalize)


def approx_probs(dist, expected):
    return all(math.isclose(dist[k], v, abs_tol=1e-12) for k, v in expected.items())


def test_label_set():
    assert [label.value for label in LABELS] == ["MajorClaim", "Claim", "Premise"]
    assert [label.order for label in LABELS] == [0, 1, 2]
    assert all(label.definition for label in LABELS)


@pytest.mark.parametrize("name", ["premise", "PREMISE", "Premise", " premise "])
def test_parse_label_case_insensitive(name):
    assert ArgLabel.parse(name) is P


def test_parse_label_variants():
    assert ArgLabel.parse("Major Claim") is MC
    assert ArgLabel.parse("major_claim") is MC
    with pytest.raises(ValueError):
        ArgLabel.parse("Backing")


def test_normalize_already_normalized():
    assert approx_probs(normalize(FIG2), FIG2)


def test_normalize_all_zero_is_uniform():
    assert normalize({MC: 0, C: 0, P: 0}) == LabelDistribution.uniform()


def test_normalize_proportional():
    assert approx_probs(normalize({MC: 2, C: 1, P: 1}), {MC: 0.5, C: 0.25, P: 0.25})


def test_normalize_missing_negative_and_nan():
    assert approx_probs(normalize({P: 1}), {MC: 0, C: 0, P: 1})
    assert approx_probs(normalize({MC: -3, C: 1, P: 3}), {MC: 0, C: 0.25, P: 0.75})
    assert approx_probs(normalize({MC: math.nan, C: 1, P: 1}), {MC: 0, C: 0.5, P: 0.5})
    assert normalize({MC: -1, C: -1}) == LabelDistribution.uniform()


def test_top_two_examples():
    assert top_two(normalize(FIG2)) == (P, C)
    assert top_two(LabelDistribution.uniform()) == (MC, C)
    assert top_two(normalize({MC: 0.4, C: 0.4, P: 0.2})) == (MC, C)


def test_argmax_examples():
    assert argmax(normalize(FIG2)) is P
    assert argmax(LabelDistribution.uniform()) is MC
    assert argmax(normalize({MC: 1, C: 0, P: 0})) is MC


def test_stance_pair_rejects_same_label():
    with pytest.raises(ValueError):
        StancePair(C, C)
    assert StancePair(P, C).swapped() == StancePair(C, P)


def test_serialized_round_trip_and_renormalize():
    d = normalize(FIG2)
    assert LabelDistribution.from_dict(d.to_dict()) == d
    drifted = LabelDistribution.from_dict({"MajorClaim": 1, "Claim": 1, "Premise": 2})
    assert approx_probs(drifted, {MC: 0.25, C: 0.25, P: 0.5})


def test_definitions_block_names_each_label_once():
    block = label_definitions_block()
    for label in LABELS:
        assert f"- {label.value}: {label.definition}" in block


@given(raw_maps)
def test_normalize_is_a_distribution(raw):
    d = normalize(raw)
    assert all(p >= 0 for p in d.probs)
    assert math.isclose(sum(d.probs), 1.0, abs_tol=1e-9)


@given(raw_maps)
def test_normalize_idempotent(raw):
    once = normalize(raw)
    twice = normalize(dict(once.items()))
    assert all(math.isclose(a, b, abs_tol=1e-12) for a, b in zip(once.probs, twice.probs))


@given(raw_maps, st.floats(min_value=1e-3, max_value=1e3))
def test_normalize_scale_invariant(raw, c):
    a = normalize(raw)
    b = normalize({k: c * v for k, v in raw.items()})
    assert all(math.isclose(x, y, abs_tol=1e-12) for x, y in zip(a.probs, b.probs))


@given(valid_dists)
def test_argmax_is_first_of_top_two(d):
    first, second = top_two(d)
    assert argmax(d) is first
    assert first is not second
    assert d[first] >= d[second] >= min(d.probs)

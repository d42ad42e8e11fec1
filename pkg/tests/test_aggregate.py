import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memaudit.aggregate import (
    AGG_EPSILON,
    aggregate_sample,
    aggregate_scores,
    consensus_count,
)
from memaudit.errors import ValidationError

unit_scores = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def product_form(values, eps=AGG_EPSILON):
    """Independent oracle: the n-th root of the shifted product."""
    prod = 1.0
    for v in values:
        prod *= max(0.0, v) + eps
    return prod ** (1.0 / len(values))


def test_all_ones_saturates():
    s, d = aggregate_scores({3: 1.0, 7: 1.0, 11: 1.0})
    assert abs(s - 1.0) <= 3 * AGG_EPSILON
    assert d == 1.0 - s


def test_spec_triple_against_product_oracle():
    values = {3: 0.5, 7: 0.8, 11: 0.9}
    s, _ = aggregate_scores(values)
    oracle = product_form(values.values())
    assert s == pytest.approx(oracle, rel=1e-12)
    assert s == pytest.approx(0.7114, abs=5e-5)


def test_zero_layer_vetoes():
    s, _ = aggregate_scores({3: 0.0, 7: 1.0, 11: 1.0})
    assert s == pytest.approx(product_form([0.0, 1.0, 1.0]), rel=1e-12)
    assert s == pytest.approx(0.01, abs=2e-4)  # ~ epsilon^(1/3): near-total veto


def test_negative_scores_clamped():
    s_neg, _ = aggregate_scores({3: -0.4, 7: 0.5})
    s_zero, _ = aggregate_scores({3: 0.0, 7: 0.5})
    assert s_neg == s_zero


def test_empty_rejected():
    with pytest.raises(ValidationError):
        aggregate_scores({})


@settings(deadline=None, max_examples=200)
@given(st.lists(unit_scores, min_size=1, max_size=6))
def test_product_and_log_forms_agree(values):
    scores = {i: v for i, v in enumerate(values)}
    s, d = aggregate_scores(scores)
    assert s == pytest.approx(product_form(values), rel=1e-12)
    assert d == 1.0 - s


@settings(deadline=None, max_examples=200)
@given(st.lists(unit_scores, min_size=1, max_size=6))
def test_geometric_at_most_arithmetic(values):
    s, _ = aggregate_scores({i: v for i, v in enumerate(values)})
    arithmetic = sum(v + AGG_EPSILON for v in values) / len(values)
    assert s <= arithmetic + 1e-12
    if len(set(values)) == 1:
        assert s == pytest.approx(arithmetic, rel=1e-9)


@settings(deadline=None, max_examples=100)
@given(
    st.lists(unit_scores, min_size=2, max_size=5),
    st.integers(min_value=0, max_value=4),
    st.floats(min_value=0.0, max_value=0.5, allow_nan=False),
)
def test_raising_one_layer_never_decreases(values, which, bump):
    which = which % len(values)
    base, _ = aggregate_scores({i: v for i, v in enumerate(values)})
    raised = list(values)
    raised[which] = min(1.0, raised[which] + bump)
    higher, _ = aggregate_scores({i: v for i, v in enumerate(raised)})
    assert higher >= base - 1e-15


def test_suppression_limit():
    # with the other layers pinned, sending one layer to zero drives the
    # fused score to (eps * prod_others)^(1/K)
    others = [0.9, 0.8]
    s, _ = aggregate_scores({0: 0.0, 1: others[0], 2: others[1]})
    limit = (AGG_EPSILON * math.prod(v + AGG_EPSILON for v in others)) ** (1 / 3)
    assert s == pytest.approx(limit, rel=1e-9)


def test_bounds_between_min_and_max():
    values = {0: 0.2, 1: 0.7, 2: 0.5}
    s, _ = aggregate_scores(values)
    assert min(values.values()) - AGG_EPSILON <= s <= max(values.values()) + AGG_EPSILON


# --- consensus ---------------------------------------------------------------


def test_consensus_full_agreement():
    assert consensus_count({3: 17, 7: 17, 11: 17}) == (3, 17)


def test_consensus_majority():
    assert consensus_count({3: 17, 7: 42, 11: 17}) == (2, 17)


def test_consensus_all_distinct_tie_breaks_low():
    assert consensus_count({3: 1, 7: 2, 11: 3}) == (1, 1)


def test_consensus_tie_between_groups():
    assert consensus_count({1: 9, 2: 9, 3: 4, 4: 4}) == (2, 4)


def test_consensus_empty_rejected():
    with pytest.raises(ValidationError):
        consensus_count({})


def test_aggregate_sample_fields():
    agg = aggregate_sample({3: (1.0, 5), 7: (0.5, 5), 11: (0.25, 2)})
    assert agg.consensus == 2
    assert agg.modal_neighbor == 5
    assert agg.d == 1.0 - agg.s
    assert 1 <= agg.consensus <= 3
    assert agg.per_layer[11] == (0.25, 2)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memaudit.errors import ValidationError
from memaudit.similarity import LayerSimilarity, layer_max_similarity
from memaudit.whiten import l2_normalize


def _unit_rows(rng, n, dim):
    rows = rng.normal(size=(n, dim))
    return l2_normalize(rows)


def test_identical_row_scores_one_lowest_index(rng):
    train = _unit_rows(rng, 6, 4)
    train[4] = train[1]  # duplicate later in the set
    test = train[1][None, :]
    sim = layer_max_similarity(test, train)
    assert sim.scores[0] == pytest.approx(1.0, abs=1e-9)
    assert sim.neighbors[0] == 1  # tie resolves to the lower index


def test_orthogonal_rows_score_zero():
    train = np.eye(3)[:2]
    test = np.array([[0.0, 0.0, 1.0]])
    sim = layer_max_similarity(test, train)
    assert sim.scores[0] == pytest.approx(0.0, abs=1e-12)


def test_matches_double_loop_oracle(rng):
    test = _unit_rows(rng, 5, 3)
    train = _unit_rows(rng, 7, 3)
    sim = layer_max_similarity(test, train)
    for j in range(5):
        best, best_i = -2.0, -1
        for i in range(7):
            dot = float(sum(test[j, c] * train[i, c] for c in range(3)))
            if dot > best:
                best, best_i = dot, i
        assert abs(sim.scores[j] - best) < 1e-10
        assert sim.neighbors[j] == best_i


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 2**31), extra=st.integers(1, 5))
def test_scores_monotone_in_train_set(seed, extra):
    rng = np.random.default_rng(seed)
    test = _unit_rows(rng, 4, 5)
    train = _unit_rows(rng, 6, 5)
    more = np.vstack([train, _unit_rows(rng, extra, 5)])
    base = layer_max_similarity(test, train).scores
    grown = layer_max_similarity(test, more).scores
    assert (grown >= base - 1e-12).all()


def test_degenerate_zero_row_scores_zero(rng):
    train = _unit_rows(rng, 3, 4)
    test = np.zeros((1, 4))
    sim = layer_max_similarity(test, train)
    assert sim.scores[0] == 0.0


def test_empty_train_rejected():
    with pytest.raises(ValidationError):
        layer_max_similarity(np.zeros((1, 3)), np.zeros((0, 3)))


def test_dim_mismatch_rejected(rng):
    with pytest.raises(ValidationError):
        layer_max_similarity(_unit_rows(rng, 2, 3), _unit_rows(rng, 2, 4))


def test_unnormalized_rows_rejected(rng):
    train = _unit_rows(rng, 3, 4)
    with pytest.raises(ValidationError, match="unit length"):
        layer_max_similarity(train * 2.0, train)


def test_empty_test_allowed(rng):
    sim = layer_max_similarity(np.zeros((0, 4)), _unit_rows(rng, 3, 4))
    assert sim.scores.shape == (0,)
    assert sim.neighbors.shape == (0,)


def test_scores_clamped_to_unit_interval(rng):
    # numerically dot(u, u) can exceed 1 by a few ulp; output must not
    v = l2_normalize(rng.normal(size=17))
    sim = layer_max_similarity(v[None, :], v[None, :])
    assert sim.scores[0] <= 1.0


def test_mismatched_score_neighbor_lengths_rejected():
    with pytest.raises(ValidationError):
        LayerSimilarity(layer_id=0, scores=np.zeros(2), neighbors=np.zeros(3, dtype=np.int64))

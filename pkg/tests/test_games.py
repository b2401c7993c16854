import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from centipede.games import (
    Family,
    Form,
    GameSpec,
    GameValidationError,
    Rescale,
    custom_game,
    full_class_sizes,
    full_index,
    full_labels,
    full_to_reduced_map,
    make_game,
    own_node_index,
    experiment_games,
    reduce_strategy,
    reduced_index,
    reduced_label,
    reduced_labels,
    strategy_count,
    strategy_payoff_matrix,
    terminal_node,
)
from oracles import family_payoffs, outcome


def test_small_linear_rescaled():
    g = make_game(GameSpec("linear", c=0.5, rescale=Rescale(100, 50)))
    assert tuple(g.payoffs[0]) == (150, 50)
    assert tuple(g.payoffs[6]) == (450, 350)


def test_large_exponential_rescaled():
    g = make_game(GameSpec("exponential", c=4, pi=2, rescale=Rescale(4, 0)))
    assert tuple(g.payoffs[0]) == (16, 4)
    assert tuple(g.payoffs[5]) == (128, 512)


def test_linear_identity():
    g = make_game(GameSpec("linear", c=0.5))
    assert tuple(g.payoffs[0]) == (1, 0)
    assert tuple(g.payoffs[1]) == (0.5, 1.5)


def test_large_constant_rescaled():
    g = make_game(GameSpec("constant", c=0.8, rescale=Rescale(250, 0)))
    np.testing.assert_allclose(g.payoffs[1], (200, 300))


@pytest.mark.parametrize("family,c", [("linear", 0.3), ("exponential", 3.0), ("constant", 0.6)])
@pytest.mark.parametrize("D", [2, 3, 5])
def test_closed_forms_match_direct_evaluation(family, c, D):
    g = make_game(GameSpec(family, c=c, stages=2 * D, rescale=Rescale(3.0, 1.0)))
    np.testing.assert_allclose(g.payoffs, family_payoffs(family, c, D, a=3.0, b=1.0), rtol=1e-14)
    assert g.payoffs.shape == (2 * D + 1, 2)


@pytest.mark.parametrize(
    "spec,msg",
    [
        (dict(family="linear", c=1.2), "0 < c < 1"),
        (dict(family="constant", c=0.0), "0 < c < 1"),
        (dict(family="exponential", c=0.9), "c > 1"),
        (dict(family="exponential", c=1.5, pi=2.0), "1 < pi < c"),
        (dict(family="linear", c=0.5, stages=5), "even"),
        (dict(family="linear", c=0.5, stages=2), ">= 4"),
    ],
)
def test_invalid_specs_name_the_bound(spec, msg):
    with pytest.raises(GameValidationError, match=msg):
        GameSpec(**spec)


def test_rescale_must_be_increasing():
    with pytest.raises(GameValidationError):
        Rescale(0.0, 1.0)


@given(
    family=st.sampled_from(["linear", "exponential", "constant"]),
    u=st.floats(0.01, 0.99),
    D=st.integers(2, 6),
)
def test_mover_dominance_holds_in_range(family, u, D):
    c = 2.01 + 10 * u if family == "exponential" else u
    g = make_game(GameSpec(family, c=c, stages=2 * D))
    assert g.mover_dominance_violations() == []
    assert np.all(np.isfinite(g.payoffs))


@given(u=st.floats(0.01, 0.99), D=st.integers(2, 6))
def test_constant_family_sum(u, D):
    g = make_game(GameSpec("constant", c=u, stages=2 * D))
    np.testing.assert_allclose(g.payoffs.sum(axis=1), 2.0, atol=1e-12)


def test_experiment_games_positive():
    for g in experiment_games().values():
        assert np.all(g.payoffs > 0)
        assert g.D == 3


def test_custom_game_round_trip():
    P = family_payoffs("linear", 0.5)
    g = custom_game(P, "mine")
    spec = GameSpec.from_dict(g.spec.to_dict())
    np.testing.assert_array_equal(make_game(spec).payoffs, P)
    with pytest.raises(GameValidationError):
        custom_game(P[:4])


def test_spec_json_round_trip():
    spec = GameSpec("exponential", c=4.0, pi=2.0, rescale=Rescale(4, 0))
    assert GameSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(GameValidationError, match="unknown"):
        GameSpec.from_dict({**spec.to_dict(), "bogus": 1})
    with pytest.raises(GameValidationError, match="missing"):
        GameSpec.from_dict({"family": "linear"})


def test_strategy_counts():
    assert strategy_count(Form.DR, 3) == 3
    assert strategy_count(Form.RS, 3) == 4
    assert strategy_count(Form.FS, 3) == 8
    assert reduced_labels(3) == ["T", "PT", "PPT", "PPP"]
    assert len(full_labels(3)) == 8


@given(D=st.integers(2, 7))
def test_label_round_trips(D):
    for m, lab in enumerate(reduced_labels(D)):
        assert reduced_index(lab, D) == m
        assert reduced_label(m, D) == lab
    for i, lab in enumerate(full_labels(D)):
        assert full_index(lab, D) == i


def test_reduce_strategy_examples():
    assert reduce_strategy("TPT") == "T"
    assert reduce_strategy("PTP") == "PT"
    assert reduce_strategy("PPP") == "PPP"


@given(D=st.integers(2, 8))
def test_reduction_class_sizes(D):
    counts = np.bincount(full_to_reduced_map(D), minlength=D + 1)
    expected = [2 ** (D - 1 - m) for m in range(D)] + [1]
    assert counts.tolist() == expected
    np.testing.assert_array_equal(full_class_sizes(D), expected)


def test_terminal_node_examples():
    for s2 in reduced_labels(3):
        assert terminal_node("T", s2, 3) == 1
    assert terminal_node("PPP", "PPT", 3) == 6
    assert terminal_node("PPP", "PPP", 3) == 7


@given(D=st.integers(2, 6), data=st.data())
def test_terminal_node_matches_play_out(D, data):
    s1 = data.draw(st.sampled_from(reduced_labels(D)))
    s2 = data.draw(st.sampled_from(reduced_labels(D)))
    assert terminal_node(s1, s2, D) == outcome(s1, s2, D)


def test_own_node_index():
    assert own_node_index(1, 3) == (1, 0)
    assert own_node_index(6, 3) == (2, 2)
    with pytest.raises(GameValidationError):
        own_node_index(7, 3)


def test_payoff_matrices():
    g = experiment_games()["linear-0.5"]
    A, B = strategy_payoff_matrix(g, "rs")
    assert np.all(A[0] == g.X[0]) and np.all(B[0] == g.Y[0])
    Af, Bf = strategy_payoff_matrix(g, "fs")
    assert Af.shape == (8, 8)
    r = full_to_reduced_map(3)
    for i, j in itertools.product(range(8), range(8)):
        assert Af[i, j] == A[r[i], r[j]] and Bf[i, j] == B[r[i], r[j]]
    gc = experiment_games()["constant-0.8"]
    A, B = strategy_payoff_matrix(gc, "rs")
    assert (round(A[3, 3]), round(B[3, 3])) == (434, 66)
    with pytest.raises(GameValidationError):
        strategy_payoff_matrix(g, "dr")


def test_scaled_and_table():
    g = experiment_games()["linear-0.5"]
    np.testing.assert_array_equal(g.scaled(10).payoffs, 10 * g.payoffs)
    assert "150" in g.table()


def test_family_enum():
    assert Family("linear") is Family.LINEAR
    assert Form.parse("RS") is Form.RS
    with pytest.raises(ValueError):
        Form.parse("xx")

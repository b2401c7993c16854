import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from centipede import dch_solve, experiment_games
from centipede.levels import (
    LevelPrior,
    degenerate_prior,
    poisson_prior,
    posterior_levels,
    truncated_belief,
)
from centipede.solvers import aggregate_choice_probs
from oracles import dr_levels, poisson


def test_small_tau_is_level_zero():
    p = poisson_prior(1e-9, 10).probs
    assert p[0] > 1 - 1e-8


def test_ratio_is_tau():
    p = poisson_prior(1.25, 10).probs
    assert p[0] / p[1] == pytest.approx(1 / 1.25, rel=1e-14)


def test_level_zero_mass_high_precision():
    p = poisson_prior(1.25, 10).probs
    exact = mpmath.e ** mpmath.mpf("-1.25")
    tail = 1 - sum(mpmath.e ** mpmath.mpf("-1.25") * mpmath.mpf("1.25") ** k / mpmath.factorial(k)
                   for k in range(11))
    assert float(exact) == pytest.approx(0.2865, abs=5e-5)
    assert p[0] == pytest.approx(float(exact / (1 - tail)), rel=1e-13)


def test_matches_direct_poisson():
    np.testing.assert_allclose(poisson_prior(2.6, 50).probs, poisson(2.6, 50), rtol=1e-12)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_nonpositive_tau_rejected(tau):
    with pytest.raises(ValueError):
        poisson_prior(tau, 10)


@given(tau=st.floats(0.01, 20), k_max=st.integers(1, 60))
def test_prior_is_distribution(tau, k_max):
    p = poisson_prior(tau, k_max).probs
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)


def test_truncated_belief_examples():
    prior = poisson_prior(1.25, 10)
    b1 = truncated_belief(prior, 1)
    assert b1[0] == 1 and b1[1:].sum() == 0
    b2 = truncated_belief(prior, 2)
    np.testing.assert_allclose(b2[:2], [1 / 2.25, 1.25 / 2.25], rtol=1e-13)
    for k in (0, 11):
        with pytest.raises(ValueError):
            truncated_belief(prior, k)


@given(tau=st.floats(0.05, 10), k=st.integers(1, 20))
def test_truncated_belief_sums_to_one(tau, k):
    b = truncated_belief(poisson_prior(tau, 20), k)
    assert abs(b.sum() - 1) < 1e-12 and np.all(b[k:] == 0)


def test_posterior_examples():
    prior = LevelPrior(np.array([0.5, 0.5]))
    np.testing.assert_allclose(posterior_levels(prior, [0.5, 1.0]), [1 / 3, 2 / 3])
    p = poisson_prior(1.25, 10)
    np.testing.assert_array_equal(posterior_levels(p, np.ones(11)), p.probs)
    with pytest.raises(ValueError):
        posterior_levels(degenerate_prior(1, 2), np.array([1.0, 0.0, 1.0]))


@given(scale=st.floats(0.01, 1.0))
def test_posterior_scale_invariant(scale):
    p = poisson_prior(2.0, 8)
    reach = np.linspace(0.1, 1.0, 9)
    np.testing.assert_allclose(posterior_levels(p, reach), posterior_levels(p, scale * reach),
                               rtol=1e-12)


def test_posterior_at_node_three_small_linear():
    # Player 1 at node 3 has passed once; weight levels by their node-1 pass probability.
    game = experiment_games()["linear-0.5"]
    prior = poisson_prior(1.25, 10)
    t = dr_levels(game.payoffs, prior.probs)
    post = posterior_levels(prior, 1 - t[0, :, 0])
    expected = post @ t[0, :, 1]
    agg = aggregate_choice_probs(dch_solve(game, "dr", prior))
    assert agg[0, 1] == pytest.approx(expected, abs=1e-13)


def test_prior_json_round_trip():
    p = poisson_prior(1.25, 10)
    q = LevelPrior.from_dict(p.to_dict())
    np.testing.assert_array_equal(p.probs, q.probs)
    assert q.tau == 1.25 and math.isclose(q.probs.sum(), 1)

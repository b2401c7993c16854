import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import softmax

from centipede import (
    ConvergenceError,
    GameSpec,
    Rescale,
    SolverConfig,
    aqre_solve,
    custom_game,
    dch_solve,
    make_game,
    experiment_games,
    poisson_prior,
    qdch_solve,
    solve,
)
from centipede.games import full_labels, reduced_labels, strategy_payoff_matrix
from centipede.levels import LevelPrior, degenerate_prior
from centipede.predict import terminal_distribution
from centipede.solvers import Kind, ModelSpec, aggregate_choice_probs, aggregated_reduced
from oracles import dr_levels, static_levels, terminal_from_levels

GAMES = experiment_games()
FORMS = ["dr", "rs", "fs"]


def random_game(draw_floats, D):
    """Centipede with mover-dominance built in."""
    P = np.asarray(draw_floats, dtype=float).reshape(2 * D + 1, 2)
    return custom_game(P)


@pytest.mark.parametrize("form", FORMS)
def test_level_zero_uniform(backend, form):
    sol = dch_solve(GAMES["linear-0.5"], form, poisson_prior(1.25, 10))
    n = {"dr": 3, "rs": 4, "fs": 8}[form]
    for role in (1, 2):
        p = sol.strategy_probs(role, 0)
        if form == "dr":
            np.testing.assert_array_equal(p, 0.5)
        else:
            np.testing.assert_array_equal(p, 1.0 / n)


def test_level_one_large_constant_matches_plan_enumeration(backend):
    game = GAMES["constant-0.8"]
    sol = dch_solve(game, "dr", poisson_prior(1.25, 10))
    P = game.payoffs
    best, best_v = None, -np.inf
    # every pure plan of Player 1 against an opponent who takes w.p. 1/2 at each node
    for plan in itertools.product([1, 0], repeat=3):
        v, alive = 0.0, 1.0
        for node in range(1, 7):
            q = plan[(node - 1) // 2] if node % 2 else 0.5
            v += alive * q * P[node - 1, 0]
            alive *= 1 - q
        v += alive * P[6, 0]
        if v > best_v + 1e-9:
            best, best_v = plan, v
    # plans that never reach a node are irrelevant there; compare along reached nodes
    t = sol.take[0, 1]
    first = best.index(1) if 1 in best else 3
    assert np.all(t[:first] == 0)
    if first < 3:
        assert t[first] == 1


@pytest.mark.parametrize("gid", sorted(GAMES))
@pytest.mark.parametrize("tau", [0.5, 1.25, 2.6])
@pytest.mark.parametrize("lam", [None, 0.02])
def test_hierarchy_matches_oracles(backend, gid, tau, lam):
    game = GAMES[gid]
    prior = poisson_prior(tau, 12)
    P = game.payoffs
    kind = "dch" if lam is None else "qdch"
    sol = solve(kind, game, "dr", prior=prior, lam=lam)
    t = dr_levels(P, prior.probs, lam)
    np.testing.assert_allclose(sol.take, t, atol=1e-12)
    np.testing.assert_allclose(terminal_distribution(sol),
                               terminal_from_levels("dr", t, prior.probs, 3), atol=1e-12)
    for form, labels in (("rs", reduced_labels(3)), ("fs", full_labels(3))):
        sol = solve(kind, game, form, prior=prior, lam=lam)
        r = static_levels(P, prior.probs, labels, lam)
        got = sol.reduced if form == "rs" else sol.full
        np.testing.assert_allclose(got, r, atol=1e-12)
        np.testing.assert_allclose(terminal_distribution(sol),
                                   terminal_from_levels(form, r, prior.probs, 3, labels), atol=1e-12)


@pytest.mark.parametrize("form", FORMS)
def test_qdch_lambda_zero_uniform(backend, form):
    sol = qdch_solve(GAMES["exponential-4"], form, poisson_prior(3.0, 10), 0.0)
    n = {"dr": 2, "rs": 4, "fs": 8}[form]
    if form == "dr":
        np.testing.assert_allclose(sol.take, 0.5)
    else:
        src = sol.reduced if form == "rs" else sol.full
        np.testing.assert_allclose(src, 1.0 / n) if form == "fs" else np.testing.assert_allclose(src, 0.25)


@pytest.mark.parametrize("gid", ["linear-0.5", "exponential-2.5", "constant-0.4", "constant-0.8"])
@pytest.mark.parametrize("form", FORMS)
def test_qdch_large_lambda_approaches_dch(backend, gid, form):
    game = GAMES[gid]
    prior = poisson_prior(1.7, 10)
    a = dch_solve(game, form, prior)
    b = qdch_solve(game, form, prior, 1e4)
    assert np.nanmax(np.abs(a.reduced - b.reduced)) < 1e-3


def test_level_one_rs_softmax():
    game = GAMES["linear-0.5"]
    sol = qdch_solve(game, "rs", poisson_prior(1.25, 10), 0.05)
    A, B = strategy_payoff_matrix(game, "rs")
    np.testing.assert_allclose(sol.reduced[0, 1], softmax(0.05 * A @ np.full(4, 0.25)), rtol=1e-12)
    np.testing.assert_allclose(sol.reduced[1, 1], softmax(0.05 * B.T @ np.full(4, 0.25)), rtol=1e-12)


def test_qdch_degenerate_level_one_is_best_response_to_uniform():
    game = GAMES["exponential-2.5"]
    prior = LevelPrior(np.array([1e-300, 1.0]))
    a = qdch_solve(game, "rs", prior, 50.0)
    A, _ = strategy_payoff_matrix(game, "rs")
    assert np.argmax(a.reduced[0, 1]) == np.argmax(A @ np.full(4, 0.25))
    assert a.reduced[0, 1].max() > 1 - 1e-6


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        qdch_solve(GAMES["linear-0.5"], "dr", poisson_prior(1, 5), -1.0)
    with pytest.raises(ValueError):
        aqre_solve(GAMES["linear-0.5"], "dr", -0.1)


def test_aqre_lambda_zero():
    g = GAMES["linear-0.5"]
    for form, node1 in (("dr", 0.5), ("fs", 0.5), ("rs", 0.25)):
        sol = aqre_solve(g, form, 0.0)
        assert terminal_distribution(sol)[0] == node1


def test_aqre_rs_independent_iteration():
    g = GAMES["linear-0.5"]
    lam = 0.015
    sol = aqre_solve(g, "rs", lam)
    A, B = strategy_payoff_matrix(g, "rs")
    p1 = np.array([0.7, 0.1, 0.1, 0.1])
    p2 = np.array([0.1, 0.1, 0.1, 0.7])
    for _ in range(20000):
        n1 = softmax(lam * A @ p2)
        n2 = softmax(lam * B.T @ p1)
        p1, p2 = 0.5 * p1 + 0.5 * n1, 0.5 * p2 + 0.5 * n2
    np.testing.assert_allclose(sol.reduced[0, 0], p1, atol=1e-8)
    np.testing.assert_allclose(sol.reduced[1, 0], p2, atol=1e-8)


@pytest.mark.parametrize("form", FORMS)
def test_aqre_residual_along_path(form):
    sol = aqre_solve(GAMES["constant-0.8"], form, 0.2)
    assert sol.residual < 1e-10
    assert all(r < 1e-10 for _, r in sol.path)
    lams = [l for l, _ in sol.path]
    assert lams == sorted(lams) and lams[-1] == 0.2


def test_aqre_dr_is_logit_fixed_point():
    g = GAMES["exponential-2.5"]
    lam = 0.05
    sol = aqre_solve(g, "dr", lam)
    t = np.empty(6)
    t[0::2], t[1::2] = sol.take[0, 0], sol.take[1, 0]
    P = g.payoffs
    E = P[6].copy()
    for j in range(5, -1, -1):
        mover = j % 2
        z = lam * (P[j, mover] - E[mover])
        assert t[j] == pytest.approx(1 / (1 + np.exp(-z)), abs=1e-11)
        E = t[j] * P[j] + (1 - t[j]) * E


def test_aqre_dr_node_one_grows():
    g = GAMES["linear-0.5"]
    # not monotone at small lambda (passing pays while the pie grows), but tends to 1
    vals = [terminal_distribution(aqre_solve(g, "dr", lam))[0] for lam in (0.1, 0.5, 2.0, 10)]
    assert vals == sorted(vals)
    assert vals[-1] > 0.99


def test_aqre_warm_start_agrees():
    g = GAMES["linear-0.8"]
    for form in FORMS:
        s1 = aqre_solve(g, form, 0.01)
        a = aqre_solve(g, form, 0.04, start=s1)
        b = aqre_solve(g, form, 0.04)
        np.testing.assert_allclose(a.reduced, b.reduced, atol=1e-10)
    with pytest.raises(ValueError):
        aqre_solve(g, "rs", 0.001, start=aqre_solve(g, "rs", 0.01))


def test_aqre_budget_exhausted():
    cfg = SolverConfig(max_steps=2)
    with pytest.raises(ConvergenceError) as err:
        aqre_solve(GAMES["linear-0.5"], "rs", 50.0, cfg)
    assert err.value.lam_reached < 50.0


def test_aggregate_examples():
    g = GAMES["linear-0.8"]
    sol = dch_solve(g, "rs", degenerate_prior(0, 5))
    np.testing.assert_allclose(aggregate_choice_probs(sol), 0.25)
    prior = LevelPrior(np.array([0.3, 0.7, 0.0]))
    sol = dch_solve(g, "rs", prior)
    np.testing.assert_allclose(aggregate_choice_probs(sol)[0],
                               0.3 * 0.25 + 0.7 * sol.reduced[0, 1], atol=1e-15)
    sol = aqre_solve(g, "dr", 0.01)
    np.testing.assert_array_equal(aggregate_choice_probs(sol), sol.take[:, 0, :])


positive = st.floats(0.5, 50.0)


@st.composite
def centipedes(draw):
    D = draw(st.integers(2, 4))
    # start from an increasing pie and enforce mover dominance node by node
    rows = []
    for j in range(2 * D + 1):
        big = draw(positive) + 5.0 * j
        small = draw(st.floats(0.0, 0.9)) * big
        rows.append((big, small) if j % 2 == 0 else (small, big))
    P = np.array(rows)
    for j in range(2 * D):
        mover = j % 2
        if P[j, mover] <= P[j + 1, mover]:
            P[j + 1, mover] = P[j, mover] * draw(st.floats(0.1, 0.9))
    return custom_game(P)


@given(game=centipedes(), tau=st.floats(0.1, 6.0), a=st.floats(0.1, 10.0), b=st.floats(-5, 5))
def test_dch_affine_invariance(game, tau, a, b):
    prior = poisson_prior(tau, 8)
    g2 = custom_game(a * game.payoffs + b)
    for form in FORMS:
        s1 = dch_solve(game, form, prior)
        s2 = dch_solve(g2, form, prior)
        np.testing.assert_allclose(s1.reduced, s2.reduced, atol=1e-12)


@given(game=centipedes(), tau=st.floats(0.1, 6.0))
def test_dch_fs_equals_dr(game, tau):
    prior = poisson_prior(tau, 10)
    d1 = terminal_distribution(dch_solve(game, "fs", prior))
    d2 = terminal_distribution(dch_solve(game, "dr", prior))
    assert np.max(np.abs(np.cumsum(d1) - np.cumsum(d2))) < 1e-10


@given(game=centipedes(), tau=st.floats(0.1, 6.0), lam=st.floats(0.0, 2.0), s=st.floats(0.1, 20.0))
def test_qdch_scale_lambda_equivalence(game, tau, lam, s):
    prior = poisson_prior(tau, 8)
    g2 = game.scaled(s)
    for form in FORMS:
        a = qdch_solve(game, form, prior, lam)
        b = qdch_solve(g2, form, prior, lam / s)
        np.testing.assert_allclose(a.reduced, b.reduced, atol=1e-9)


@given(game=centipedes(), tau=st.floats(0.1, 6.0), lam=st.one_of(st.none(), st.floats(0.0, 5.0)))
def test_solution_probabilities_valid(game, tau, lam):
    prior = poisson_prior(tau, 8)
    kind = "dch" if lam is None else "qdch"
    for form in FORMS:
        sol = solve(kind, game, form, prior=prior, lam=lam)
        assert np.all(sol.reduced >= 0) and np.all(sol.reduced <= 1)
        np.testing.assert_allclose(sol.reduced.sum(axis=-1), 1, atol=1e-10)
        if sol.full is not None:
            np.testing.assert_allclose(sol.full.sum(axis=-1), 1, atol=1e-10)
        d = terminal_distribution(sol)
        assert abs(d.sum() - 1) < 1e-12 and np.all(d >= 0)


@given(game=centipedes(), tau=st.floats(0.1, 6.0), lam=st.one_of(st.none(), st.floats(0.0, 5.0)),
       form=st.sampled_from(FORMS))
def test_backends_agree(game, tau, lam, form):
    from centipede import _backend

    if len(_backend.BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    prior = poisson_prior(tau, 10)
    out = []
    for name in ("python", "cython"):
        res = _backend.BACKENDS[name].level_recursion(
            game.X, game.Y, prior.probs, {"dr": 0, "rs": 1, "fs": 2}[form],
            -1.0 if lam is None else lam, 1e-12 * np.ptp(game.payoffs), 0)
        out.append(res)
    for a, b in zip(*out):
        np.testing.assert_allclose(a, b, atol=1e-13, equal_nan=True)


@pytest.mark.parametrize("form", FORMS)
def test_solution_json(form):
    g = GAMES["constant-0.8"]
    d = dch_solve(g, form, poisson_prior(1.25, 10)).to_dict()
    json.dumps(d)
    assert len(d["levels"]) == 11
    a = aqre_solve(g, form, 0.01).to_dict()
    assert set(a) >= {"profile", "lambda", "residual"}
    json.dumps(a)


def test_model_spec():
    with pytest.raises(ValueError):
        ModelSpec("qdch", tau=1.0)
    with pytest.raises(ValueError):
        ModelSpec("dch")
    m = ModelSpec("qdch", tau=2.6, lam=0.05, k_max=10)
    assert m.params() == {"tau": 2.6, "lambda": 0.05}
    assert m.solve(GAMES["linear-0.5"], "rs").kind is Kind.QDCH


def test_general_depth():
    for D in (2, 4, 5):
        g = make_game(GameSpec("linear", c=0.6, stages=2 * D, rescale=Rescale(100, 50)))
        prior = poisson_prior(1.5, 10)
        for form in FORMS:
            assert abs(terminal_distribution(dch_solve(g, form, prior)).sum() - 1) < 1e-12
        d1 = terminal_distribution(dch_solve(g, "fs", prior))
        d2 = terminal_distribution(dch_solve(g, "dr", prior))
        np.testing.assert_allclose(d1, d2, atol=1e-12)
        a = aggregated_reduced(aqre_solve(g, "fs", 0.02))
        assert a.shape == (2, D + 1)

"""Pure-Python level recursion (fallback for the compiled ``_kernels``).

Both implementations share one signature::

    level_recursion(x, y, prior, form, lam, tie_tol, tie_rule)
        -> (r1, r2, t1, t2)

``x``, ``y``  payoffs of Player 1 / Player 2 at nodes 1..2D+1 (0-based)
``prior``     level probabilities 0..K
``form``      0 = direct response, 1 = reduced strategy, 2 = full strategy
``lam``       logit precision; negative means exact best response
``tie_tol``   absolute tolerance for best-response ties
``tie_rule``  0 = pass (latest take), 1 = uniform, 2 = take (earliest take)

``r1``/``r2`` are (K+1, D+1) distributions over reduced strategies (own
passes before taking). ``t1``/``t2`` are (K+1, D) conditional take
probabilities at each own node; for static forms they are derived from
``r`` and are NaN where a node is unreachable under the level's own play.
"""
from __future__ import annotations

import math

import numpy as np

TIE_PASS, TIE_UNIFORM, TIE_TAKE = 0, 1, 2
FORM_DR, FORM_RS, FORM_FS = 0, 1, 2


def _conditional(R):
    surv = np.cumsum(R[::-1])[::-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(surv > 0, R / np.where(surv > 0, surv, 1.0), 1.0)
    return q


def _logistic(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _choose(take, cont, lam, tie_tol, tie_rule):
    """Return (take probability, node value)."""
    if lam < 0:
        d = take - cont
        if abs(d) <= tie_tol:
            t = 0.0 if tie_rule == TIE_PASS else (1.0 if tie_rule == TIE_TAKE else 0.5)
            return t, max(take, cont)
        return (1.0, take) if d > 0 else (0.0, cont)
    t = _logistic(lam * (take - cont))
    return t, t * take + (1.0 - t) * cont


def _dr_response(x, y, Rbar, role, D, lam, tie_tol, tie_rule):
    q = _conditional(Rbar)
    t = np.empty(D)
    if role == 1:
        W = x[2 * D]
        for m in range(D - 1, -1, -1):
            cont = q[m] * x[2 * m + 1] + (1.0 - q[m]) * W
            t[m], W = _choose(x[2 * m], cont, lam, tie_tol, tie_rule)
    else:
        W = y[2 * D]
        for m in range(D - 1, -1, -1):
            if m == D - 1:
                cont = y[2 * D]
            else:
                cont = q[m + 1] * y[2 * m + 2] + (1.0 - q[m + 1]) * W
            t[m], W = _choose(y[2 * m + 1], cont, lam, tie_tol, tie_rule)
    return t


def _take_to_reduced(t):
    D = t.size
    r = np.empty(D + 1)
    s = 1.0
    for m in range(D):
        r[m] = s * t[m]
        s *= 1.0 - t[m]
    r[D] = s
    return r


def _static_response(U, counts, lam, tie_tol, tie_rule):
    umax = U.max()
    if lam < 0:
        arg = np.flatnonzero(U >= umax - tie_tol)
        w = np.zeros_like(U)
        if tie_rule == TIE_PASS:
            w[arg[-1]] = 1.0
        elif tie_rule == TIE_TAKE:
            w[arg[0]] = 1.0
        else:
            w[arg] = counts[arg]
    else:
        w = counts * np.exp(lam * (U - umax))
    return w / w.sum()


def _payoff_index(D):
    idx = np.empty((D + 1, D + 1), dtype=np.intp)
    for m1 in range(D + 1):
        n1 = 2 * m1 if m1 < D else 2 * D
        for m2 in range(D + 1):
            n2 = 2 * m2 + 1 if m2 < D else 2 * D
            idx[m1, m2] = min(n1, n2)
    return idx


def level_recursion(x, y, prior, form, lam, tie_tol, tie_rule):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prior = np.asarray(prior, dtype=float)
    D = (x.size - 1) // 2
    K = prior.size - 1
    r1 = np.empty((K + 1, D + 1))
    r2 = np.empty((K + 1, D + 1))
    t1 = np.empty((K + 1, D))
    t2 = np.empty((K + 1, D))
    if form == FORM_FS:
        counts = np.array([2.0 ** (D - 1 - m) for m in range(D)] + [1.0])
    else:
        counts = np.ones(D + 1)
    if form == FORM_DR:
        t1[0] = t2[0] = 0.5
        r1[0] = r2[0] = _take_to_reduced(t1[0])
    else:
        r1[0] = r2[0] = counts / counts.sum()
    idx = _payoff_index(D)
    A, B = x[idx], y[idx]

    agg1 = np.zeros(D + 1)
    agg2 = np.zeros(D + 1)
    mass = 0.0
    for k in range(1, K + 1):
        agg1 += prior[k - 1] * r1[k - 1]
        agg2 += prior[k - 1] * r2[k - 1]
        mass += prior[k - 1]
        if mass <= 0:
            # no lower level carries mass: behave as level 0
            r1[k], r2[k], t1[k], t2[k] = r1[0], r2[0], t1[0], t2[0]
            continue
        R1, R2 = agg1 / mass, agg2 / mass
        if form == FORM_DR:
            t1[k] = _dr_response(x, y, R2, 1, D, lam, tie_tol, tie_rule)
            t2[k] = _dr_response(x, y, R1, 2, D, lam, tie_tol, tie_rule)
            r1[k] = _take_to_reduced(t1[k])
            r2[k] = _take_to_reduced(t2[k])
        else:
            r1[k] = _static_response(A @ R2, counts, lam, tie_tol, tie_rule)
            r2[k] = _static_response(B.T @ R1, counts, lam, tie_tol, tie_rule)
    if form != FORM_DR:
        for r, t in ((r1, t1), (r2, t2)):
            surv = np.cumsum(r[:, ::-1], axis=1)[:, ::-1]
            with np.errstate(invalid="ignore", divide="ignore"):
                t[:] = np.where(surv[:, :D] > 0, r[:, :D] / surv[:, :D], np.nan)
    return r1, r2, t1, t2

"""DCH, QDCH and logit-AQRE solutions of centipede games.

Every solution stores, per player and level, a distribution over reduced
strategies (``reduced``, shape ``(2, L, D+1)``) and conditional take
probabilities at the player's own nodes (``take``, shape ``(2, L, D)``).
For AQRE ``L == 1``. Full-strategy probabilities are available for the
full strategy form.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from . import _backend
from .games import (
    CentipedeGame,
    Form,
    full_class_sizes,
    full_labels,
    full_to_reduced_map,
    reduced_labels,
    strategy_payoff_matrix,
)
from .levels import LevelPrior

_FORM_CODE = {Form.DR: 0, Form.RS: 1, Form.FS: 2}
_TIE_CODE = {"pass": 0, "uniform": 1, "take": 2}


class Kind(str, enum.Enum):
    DCH = "dch"
    QDCH = "qdch"
    AQRE = "aqre"


class ConvergenceError(RuntimeError):
    """AQRE continuation failed to reach the fixed-point tolerance."""

    def __init__(self, msg: str, residual: float, lam_reached: float):
        super().__init__(f"{msg} (best residual {residual:.3e} at lambda={lam_reached:.6g})")
        self.residual = residual
        self.lam_reached = lam_reached


@dataclass(frozen=True)
class SolverConfig:
    tie_tolerance: float = 1e-12  # relative to the payoff range
    tie_rule: str = "pass"
    fixed_point_tolerance: float = 1e-12
    # homotopy steps are taken in lambda * (payoff range) units
    initial_step: float = 0.05
    max_step: float = 10.0
    min_step: float = 1e-10
    shrink: float = 0.5
    grow: float = 1.5
    max_iterations: int = 60
    max_steps: int = 100_000
    damping: float = 1.0

    def __post_init__(self):
        if self.tie_rule not in _TIE_CODE:
            raise ValueError(f"tie_rule must be one of {sorted(_TIE_CODE)}")
        for name in ("tie_tolerance", "fixed_point_tolerance", "initial_step", "max_step",
                     "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.shrink < 1 or not self.grow >= 1:
            raise ValueError("need 0 < shrink < 1 and grow >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True, eq=False)
class Solution:
    kind: Kind
    form: Form
    reduced: np.ndarray
    take: np.ndarray
    prior: LevelPrior | None = None
    lam: float | None = None
    residual: float = 0.0
    full: np.ndarray | None = None
    path: tuple = field(default=(), repr=False)

    @property
    def D(self) -> int:
        return self.reduced.shape[-1] - 1

    @property
    def n_levels(self) -> int:
        return self.reduced.shape[1]

    @property
    def tau(self) -> float | None:
        return None if self.prior is None else self.prior.tau

    def strategy_probs(self, role: int, level: int = 0) -> np.ndarray:
        """Form-specific choice probabilities of one player type.

        Direct response: take probability at each own node. Reduced and
        full strategy forms: mixture over ``reduced_labels`` / ``full_labels``.
        """
        i = role - 1
        if self.form is Form.DR:
            return self.take[i, level].copy()
        if self.form is Form.RS:
            return self.reduced[i, level].copy()
        return self.full[i, level].copy()

    def labels(self) -> list[str]:
        if self.form is Form.DR:
            return [f"node{2 * m + 1}" for m in range(self.D)]
        return reduced_labels(self.D) if self.form is Form.RS else full_labels(self.D)

    def to_dict(self) -> dict:
        D = self.D
        d: dict = {"kind": self.kind.value, "form": self.form.value, "D": D}
        if self.kind is Kind.AQRE:
            d["lambda"] = self.lam
            d["residual"] = self.residual
            d["profile"] = {f"player{r}": self._table(r, 0) for r in (1, 2)}
            return d
        d["tau"] = self.tau
        d["lambda"] = self.lam
        d["k_max"] = self.n_levels - 1
        d["prior"] = self.prior.probs.tolist()
        d["levels"] = [
            {"level": k, **{f"player{r}": self._table(r, k) for r in (1, 2)}}
            for k in range(self.n_levels)
        ]
        return d

    def _table(self, role: int, level: int) -> dict:
        D = self.D
        probs = self.strategy_probs(role, level)
        if self.form is Form.DR:
            nodes = [2 * m + 1 if role == 1 else 2 * m + 2 for m in range(D)]
            return {str(n): float(p) for n, p in zip(nodes, probs)}
        return {lab: float(p) for lab, p in zip(self.labels(), probs)}


def _full_from_reduced(reduced: np.ndarray, D: int) -> np.ndarray:
    r = full_to_reduced_map(D)
    return reduced[..., r] / full_class_sizes(D)[r]


def _tie_tol(game: CentipedeGame, cfg: SolverConfig) -> float:
    return cfg.tie_tolerance * max(float(np.ptp(game.payoffs)), 1e-300)


def _hierarchy(kind, game, form, prior, lam, cfg):
    form = Form.parse(form)
    r1, r2, t1, t2 = _backend.level_recursion(
        game.X, game.Y, prior.probs, _FORM_CODE[form],
        -1.0 if lam is None else float(lam), _tie_tol(game, cfg), _TIE_CODE[cfg.tie_rule],
    )
    reduced = np.stack([r1, r2])
    full = _full_from_reduced(reduced, game.D) if form is Form.FS else None
    return Solution(kind, form, reduced, np.stack([t1, t2]), prior, lam, 0.0, full)


def dch_solve(game: CentipedeGame, form: Form | str, prior: LevelPrior,
              cfg: SolverConfig = DEFAULT_CONFIG) -> Solution:
    """Dynamic cognitive hierarchy solution, solved level by level.

    Level 0 randomizes uniformly over the form's actions (each node in
    direct response, each strategy otherwise). Level k best responds to
    its truncated belief over levels below k; in direct response it
    updates that belief along the path and best responds sequentially.
    Ties are broken by ``cfg.tie_rule``.
    """
    return _hierarchy(Kind.DCH, game, form, prior, None, cfg)


def qdch_solve(game: CentipedeGame, form: Form | str, prior: LevelPrior, lam: float,
               cfg: SolverConfig = DEFAULT_CONFIG) -> Solution:
    """DCH with logit responses of precision ``lam`` at every decision.

    A level's own future choices enter its continuation values at their
    logit probabilities.
    """
    if not lam >= 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    return _hierarchy(Kind.QDCH, game, form, prior, float(lam), cfg)


# ---------------------------------------------------------------------------
# AQRE


def _dr_best_values(game: CentipedeGame, t: np.ndarray):
    """Take/pass continuation values at every decision node under profile t.

    ``t`` holds conditional take probabilities in node order 1..2D.
    """
    n = 2 * game.D
    P = game.payoffs
    take_v = np.empty(n)
    pass_v = np.empty(n)
    E = P[n].copy()  # expected (X, Y) from node j+1 onward
    for j in range(n - 1, -1, -1):
        mover = j % 2
        take_v[j] = P[j, mover]
        pass_v[j] = E[mover]
        E = t[j] * P[j] + (1.0 - t[j]) * E
    return take_v, pass_v


def _dr_map(game, t, lam):
    take_v, pass_v = _dr_best_values(game, t)
    z = lam * (take_v - pass_v)
    return np.exp(-np.logaddexp(0.0, -z))


def _dr_residual(game, t, lam):
    return float(np.max(np.abs(t - _dr_map(game, t, lam))))


def _dr_correct(game, t, lam, cfg):
    # each sweep fixes one more node from the end, so 2D undamped sweeps
    # land on the exact fixed point; keep sweeping at least that long
    w = cfg.damping
    sweeps = 2 * game.D + 1
    for it in range(max(cfg.max_iterations, sweeps)):
        g = _dr_map(game, t, lam)
        res = float(np.max(np.abs(t - g)))
        if res == 0.0 or (res <= cfg.fixed_point_tolerance and it >= sweeps):
            return t, res, True
        t = (1.0 - w) * t + w * g
    res = _dr_residual(game, t, lam)
    return t, res, res <= cfg.fixed_point_tolerance


class _StaticQRE:
    """Logit QRE of the bimatrix game (A, B) in log-probability coordinates."""

    def __init__(self, A, B):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.n1, self.n2 = self.A.shape

    def split(self, z):
        return z[: self.n1], z[self.n1:]

    def utilities(self, z):
        z1, z2 = self.split(z)
        return self.A @ np.exp(z2), self.B.T @ np.exp(z1)

    def F(self, z, lam):
        u1, u2 = self.utilities(z)
        z1, z2 = self.split(z)
        l1 = lam * u1 - logsumexp(lam * u1)
        l2 = lam * u2 - logsumexp(lam * u2)
        return np.concatenate([z1 - l1, z2 - l2])

    def residual(self, z, lam):
        u1, u2 = self.utilities(z)
        p = np.exp(z)
        g = np.concatenate([softmax(lam * u1), softmax(lam * u2)])
        return float(np.max(np.abs(p - g)))

    def jacobian(self, z, lam):
        n1, n2 = self.n1, self.n2
        u1, u2 = self.utilities(z)
        s1, s2 = softmax(lam * u1), softmax(lam * u2)
        p1, p2 = self.split(np.exp(z))
        J = np.eye(n1 + n2)
        # d logsoftmax(lam u)/du = lam (I - 1 s^T)
        J[:n1, n1:] = -lam * (self.A * p2[None, :] - np.outer(np.ones(n1), s1 @ (self.A * p2[None, :])))
        Bt = self.B.T
        J[n1:, :n1] = -lam * (Bt * p1[None, :] - np.outer(np.ones(n2), s2 @ (Bt * p1[None, :])))
        return J

    def dF_dlam(self, z, lam):
        u1, u2 = self.utilities(z)
        s1, s2 = softmax(lam * u1), softmax(lam * u2)
        return -np.concatenate([u1 - s1 @ u1, u2 - s2 @ u2])

    def correct(self, z, lam, cfg):
        best = (z, self.residual(z, lam))
        for _ in range(cfg.max_iterations):
            res = self.residual(z, lam)
            if res < best[1]:
                best = (z, res)
            if res <= cfg.fixed_point_tolerance:
                return z, res, True
            try:
                dz = np.linalg.solve(self.jacobian(z, lam), -self.F(z, lam))
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(dz)):
                break
            # renormalize in log space so exp(z) stays a pair of distributions
            z = z + dz
            z1, z2 = self.split(z)
            z = np.concatenate([z1 - logsumexp(z1), z2 - logsumexp(z2)])
        z, res = best
        return z, res, res <= cfg.fixed_point_tolerance

    def tangent(self, z, lam):
        try:
            return np.linalg.solve(self.jacobian(z, lam), -self.dF_dlam(z, lam))
        except np.linalg.LinAlgError:
            return np.zeros_like(z)


def _continuation(x0, lam_target, scale, correct, residual, tangent, cfg, lam0=0.0):
    """Trace the principal branch from ``lam0`` (default 0) to ``lam_target``."""
    x, lam = x0, lam0
    x, res, ok = correct(x, lam0)
    path = [(lam0, res)]
    if not ok:
        raise ConvergenceError(f"no fixed point at lambda = {lam0:g}", res, lam0)
    h = cfg.initial_step / scale
    h_min, h_max = cfg.min_step / scale, cfg.max_step / scale
    best = (res, 0.0)
    for _ in range(cfg.max_steps):
        if lam >= lam_target:
            break
        step = min(h, lam_target - lam)
        new_lam = lam_target if step >= lam_target - lam else lam + step
        guess = x + step * tangent(x, lam) if tangent is not None else x
        cand, res, ok = correct(guess, new_lam)
        if not ok and tangent is not None:
            cand, res, ok = correct(x, new_lam)
        if ok:
            x, lam = cand, new_lam
            path.append((lam, res))
            best = (res, lam)
            h = min(h * cfg.grow, h_max)
        else:
            h *= cfg.shrink
            if h < h_min:
                raise ConvergenceError("homotopy step fell below the minimum", res, lam)
    else:
        raise ConvergenceError("homotopy step budget exhausted", best[0], lam)
    return x, residual(x, lam), tuple(path)


def aqre_solve(game: CentipedeGame, form: Form | str, lam: float,
               cfg: SolverConfig = DEFAULT_CONFIG, start: Solution | None = None) -> Solution:
    """Logit agent quantal response equilibrium on the principal branch.

    Direct response uses behavioral strategies with continuation values
    conditional on reaching each node. The strategy forms use the static
    logit QRE of the reduced or full strategy matrices.

    ``start`` may hold an AQRE solution of the same game and form at a
    smaller lambda; the branch is then continued from it.
    """
    if not lam >= 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    form = Form.parse(form)
    D = game.D
    scale = max(float(np.ptp(game.payoffs)), 1e-300)
    lam0 = 0.0
    if start is not None:
        if start.kind is not Kind.AQRE or start.form is not form or start.D != D:
            raise ValueError("start must be an AQRE solution of the same form and size")
        if start.lam > lam:
            raise ValueError("start lambda exceeds the target")
        lam0 = float(start.lam)
    if form is Form.DR:
        t0 = np.full(2 * D, 0.5)
        if start is not None:
            t0 = np.empty(2 * D)
            t0[0::2], t0[1::2] = start.take[0, 0], start.take[1, 0]
        t, res, path = _continuation(
            t0, lam, scale,
            lambda x, l: _dr_correct(game, x, l, cfg),
            lambda x, l: _dr_residual(game, x, l),
            None, cfg, lam0,
        )
        take = np.stack([t[0::2], t[1::2]])[:, None, :]
        reduced = np.stack([_take_to_reduced(take[0, 0]), _take_to_reduced(take[1, 0])])[:, None, :]
        return Solution(Kind.AQRE, form, reduced, take, None, float(lam), res, None, path)

    A, B = strategy_payoff_matrix(game, form)
    q = _StaticQRE(A, B)
    n1, n2 = A.shape
    if start is None:
        z0 = np.concatenate([np.full(n1, -math.log(n1)), np.full(n2, -math.log(n2))])
    else:
        src = start.full if form is Form.FS else start.reduced
        with np.errstate(divide="ignore"):
            z0 = np.log(np.concatenate([src[0, 0], src[1, 0]]))
    z, res, path = _continuation(
        z0, lam, scale, lambda x, l: q.correct(x, l, cfg), q.residual, q.tangent, cfg, lam0
    )
    if lam == 0:  # the exact fixed point, free of log-space rounding
        p1, p2 = np.full(n1, 1.0 / n1), np.full(n2, 1.0 / n2)
    else:
        p1, p2 = (softmax(v) for v in q.split(z))
    if form is Form.FS:
        full = np.stack([p1, p2])[:, None, :]
        rmap = full_to_reduced_map(D)
        reduced = np.zeros((2, 1, D + 1))
        for i in range(2):
            np.add.at(reduced[i, 0], rmap, full[i, 0])
    else:
        full = None
        reduced = np.stack([p1, p2])[:, None, :]
    take = _conditional_take(reduced)
    return Solution(Kind.AQRE, form, reduced, take, None, float(lam), res, full, path)


def _take_to_reduced(t):
    D = t.size
    r = np.empty(D + 1)
    s = 1.0
    for m in range(D):
        r[m] = s * t[m]
        s *= 1.0 - t[m]
    r[D] = s
    return r


def _conditional_take(reduced: np.ndarray) -> np.ndarray:
    D = reduced.shape[-1] - 1
    surv = np.cumsum(reduced[..., ::-1], axis=-1)[..., ::-1][..., :D]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(surv > 0, reduced[..., :D] / np.where(surv > 0, surv, 1.0), np.nan)


def solve(kind: Kind | str, game: CentipedeGame, form: Form | str, *,
          prior: LevelPrior | None = None, lam: float | None = None,
          cfg: SolverConfig = DEFAULT_CONFIG) -> Solution:
    kind = Kind(kind)
    if kind is Kind.DCH:
        return dch_solve(game, form, prior, cfg)
    if kind is Kind.QDCH:
        return qdch_solve(game, form, prior, lam, cfg)
    return aqre_solve(game, form, lam, cfg)


# ---------------------------------------------------------------------------
# aggregation


def aggregated_reduced(solution: Solution) -> np.ndarray:
    """Population mixture over reduced strategies, shape (2, D+1)."""
    if solution.kind is Kind.AQRE:
        return solution.reduced[:, 0, :].copy()
    return np.einsum("k,ikm->im", solution.prior.probs, solution.reduced)


def aggregate_choice_probs(solution: Solution) -> np.ndarray:
    """Population choice probabilities at each history.

    Direct response: shape (2, D) take probabilities at each own node,
    with levels weighted by their posterior given the player's own passes
    so far. Strategy forms: shape (2, n_strategies) prior-weighted
    mixtures. AQRE solutions pass through unchanged.
    """
    if solution.kind is Kind.AQRE:
        if solution.form is Form.DR:
            return solution.take[:, 0, :].copy()
        src = solution.full if solution.form is Form.FS else solution.reduced
        return src[:, 0, :].copy()
    p = solution.prior.probs
    if solution.form is Form.DR:
        return _conditional_take(aggregated_reduced(solution))
    src = solution.full if solution.form is Form.FS else solution.reduced
    return np.einsum("k,iks->is", p, src)


@dataclass(frozen=True)
class ModelSpec:
    """A solution concept together with its parameter values."""

    kind: Kind
    tau: float | None = None
    lam: float | None = None
    k_max: int = 50

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind in (Kind.DCH, Kind.QDCH) and not (self.tau is not None and self.tau > 0):
            raise ValueError(f"{self.kind.value} needs tau > 0")
        if self.kind in (Kind.QDCH, Kind.AQRE) and not (self.lam is not None and self.lam >= 0):
            raise ValueError(f"{self.kind.value} needs lambda >= 0")

    def prior(self) -> LevelPrior | None:
        from .levels import poisson_prior

        return None if self.kind is Kind.AQRE else poisson_prior(self.tau, self.k_max)

    def solve(self, game: CentipedeGame, form: Form | str,
              cfg: SolverConfig = DEFAULT_CONFIG) -> Solution:
        return solve(self.kind, game, form, prior=self.prior(), lam=self.lam, cfg=cfg)

    def params(self) -> dict:
        d = {}
        if self.tau is not None:
            d["tau"] = self.tau
        if self.lam is not None:
            d["lambda"] = self.lam
        return d

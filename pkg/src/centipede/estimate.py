"""Likelihoods, maximum-likelihood fits, bootstrap standard errors and
model-comparison tests for DCH, QDCH and AQRE on choice data.

Data are pooled: every observed choice (a pass/take decision at a node in
direct response, a submitted strategy otherwise) contributes the log of the
model's population choice probability. In direct response the level mix at
a node is the posterior given the player's own earlier passes.
"""
from __future__ import annotations

import functools
import json
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, sparse, stats

from .games import (
    CentipedeGame,
    Form,
    GameValidationError,
    full_index,
    own_node_index,
    reduced_index,
    strategy_count,
)
from .solvers import (
    DEFAULT_CONFIG,
    ConvergenceError,
    Kind,
    ModelSpec,
    Solution,
    SolverConfig,
    aggregate_choice_probs,
    aqre_solve,
)


class DatasetError(ValueError):
    """Observations are inconsistent with the games or with each other."""


class ZeroProbabilityError(ConvergenceError):
    """An observed choice has probability zero under the model."""

    def __init__(self, msg: str):
        super().__init__(msg, float("nan"), float("nan"))


class FitError(RuntimeError):
    """The optimizer did not converge; ``best`` holds the best point found."""

    def __init__(self, msg: str, best: dict, log_likelihood: float):
        super().__init__(f"{msg}; best point {best} with LL={log_likelihood:.6f}")
        self.best = best
        self.log_likelihood = log_likelihood


PARAM_NAMES = {
    Kind.DCH: ("tau",),
    Kind.QDCH: ("tau", "lambda"),
    Kind.AQRE: ("lambda",),
}


def param_names(kind: Kind | str) -> tuple[str, ...]:
    return PARAM_NAMES[Kind(kind)]


@dataclass(frozen=True)
class Observation:
    """One recorded choice.

    Direct response rows carry the decision ``node`` and ``choice`` "T" or
    "P". Strategy-form rows carry the strategy label as ``choice`` and no
    node.
    """

    session_id: str
    subject_id: str
    pair_id: str
    role: int
    game_id: str
    form: Form
    choice: str
    node: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "form", Form.parse(self.form))
        object.__setattr__(self, "choice", str(self.choice).strip().upper())
        if self.role not in (1, 2):
            raise DatasetError(f"role must be 1 or 2, got {self.role!r}")
        if self.form is Form.DR:
            if self.node is None:
                raise DatasetError("direct-response observation needs a node")
            if self.choice not in ("T", "P"):
                raise DatasetError(f"direct-response choice must be T or P, got {self.choice!r}")
        elif self.node is not None:
            raise DatasetError("strategy observations carry no node")

    @property
    def record_type(self) -> str:
        return "node" if self.form is Form.DR else "strategy"


@dataclass(frozen=True, eq=False)
class Dataset:
    observations: tuple[Observation, ...]
    games: Mapping[str, CentipedeGame]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "games", dict(self.games))
        self.validate()

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def n_obs(self) -> int:
        return len(self.observations)

    def validate(self) -> None:
        paths: dict[tuple, list[Observation]] = {}
        for i, ob in enumerate(self.observations):
            game = self.games.get(ob.game_id)
            if game is None:
                raise DatasetError(f"observation {i}: unknown game {ob.game_id!r}")
            D = game.D
            try:
                if ob.form is Form.DR:
                    role, _ = own_node_index(ob.node, D)
                    if role != ob.role:
                        raise DatasetError(
                            f"observation {i}: node {ob.node} belongs to player {role}, "
                            f"row says player {ob.role}"
                        )
                    paths.setdefault((ob.session_id, ob.pair_id, ob.game_id), []).append(ob)
                elif ob.form is Form.RS:
                    reduced_index(ob.choice, D)
                else:
                    full_index(ob.choice, D)
            except GameValidationError as exc:
                raise DatasetError(f"observation {i}: {exc}") from None
        for key, obs in paths.items():
            _check_path(key, obs, self.games[key[2]].D)

    def subset(self, forms: Iterable[Form | str] | None = None,
               games: Iterable[str] | None = None) -> "Dataset":
        fs = None if forms is None else {Form.parse(f) for f in forms}
        gs = None if games is None else set(games)
        obs = [o for o in self.observations
               if (fs is None or o.form in fs) and (gs is None or o.game_id in gs)]
        return Dataset(tuple(obs), self.games)

    def forms(self) -> list[Form]:
        present = {o.form for o in self.observations}
        return [f for f in Form if f in present]

    def game_ids(self) -> list[str]:
        seen = dict.fromkeys(o.game_id for o in self.observations)
        return list(seen)

    def paths(self) -> dict[tuple, tuple[Observation, ...]]:
        """Direct-response paths keyed by (session_id, pair_id, game_id), node-ordered."""
        out: dict[tuple, list[Observation]] = {}
        for o in self.observations:
            if o.form is Form.DR:
                out.setdefault((o.session_id, o.pair_id, o.game_id), []).append(o)
        return {k: tuple(sorted(v, key=lambda o: o.node)) for k, v in out.items()}

    def concat(self, other: "Dataset") -> "Dataset":
        games = dict(self.games)
        for gid, g in other.games.items():
            if gid in games and not np.array_equal(games[gid].payoffs, g.payoffs):
                raise DatasetError(f"game {gid!r} differs between datasets")
            games[gid] = g
        return Dataset(self.observations + other.observations, games)


def _check_path(key, obs: list[Observation], D: int) -> None:
    obs = sorted(obs, key=lambda o: o.node)
    nodes = [o.node for o in obs]
    where = f"path pair={key[1]!r} game={key[2]!r}"
    if nodes != list(range(1, len(nodes) + 1)):
        raise DatasetError(f"{where}: nodes {nodes} are not 1..J without gaps or repeats")
    choices = [o.choice for o in obs]
    if any(c != "P" for c in choices[:-1]):
        raise DatasetError(f"{where}: take before the last recorded node")
    if choices[-1] == "P" and len(nodes) != 2 * D:
        raise DatasetError(f"{where}: path ends in a pass before node {2 * D}")


def path_terminal_node(path: Sequence[Observation]) -> int:
    last = path[-1]
    return last.node if last.choice == "T" else last.node + 1


# ---------------------------------------------------------------------------
# likelihood


class Likelihood:
    """Pooled log-likelihood of a dataset, compiled into count cells.

    Cells are (game, form, role, choice slot). A unit is one resampling /
    Vuong unit: a direct-response path or a single strategy observation.
    """

    def __init__(self, dataset: Dataset, kind: Kind | str, k_max: int = 50,
                 cfg: SolverConfig = DEFAULT_CONFIG, cache_size: int = 4096):
        if dataset.n_obs == 0:
            raise DatasetError("dataset is empty")
        self.dataset = dataset
        self.kind = Kind(kind)
        self.k_max = int(k_max)
        self.cfg = cfg
        self.blocks: list[tuple[str, Form]] = []
        offsets: dict[tuple[str, Form], int] = {}
        n_cells = 0
        for gid in dataset.game_ids():
            for form in Form:
                if any(o.game_id == gid and o.form is form for o in dataset.observations):
                    offsets[(gid, form)] = n_cells
                    self.blocks.append((gid, form))
                    n_cells += self._block_size(dataset.games[gid].D, form)
        self.offsets = offsets
        self.n_cells = n_cells

        unit_of: dict = {}
        rows, cols = [], []
        strata: list[Form] = []
        for i, o in enumerate(dataset.observations):
            key = (o.session_id, o.pair_id, o.game_id) if o.form is Form.DR else i
            u = unit_of.get(key)
            if u is None:
                u = unit_of[key] = len(unit_of)
                strata.append(o.form)
            rows.append(u)
            cols.append(self._cell(o))
        self.n_units = len(unit_of)
        self.units = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n_units, n_cells)
        )
        self.strata = np.array([f.value for f in strata])
        self.counts = np.asarray(self.units.sum(axis=0)).ravel()
        self._aqre_cache: dict[tuple[str, Form], OrderedDict] = {}
        self._lock = threading.Lock()
        self.log_probs = functools.lru_cache(maxsize=cache_size)(self._log_probs)

    @staticmethod
    def _block_size(D: int, form: Form) -> int:
        return 2 * D * 2 if form is Form.DR else 2 * strategy_count(form, D)

    def _cell(self, o: Observation) -> int:
        D = self.dataset.games[o.game_id].D
        base = self.offsets[(o.game_id, o.form)]
        if o.form is Form.DR:
            _, m = own_node_index(o.node, D)
            return base + ((o.role - 1) * D + m) * 2 + (0 if o.choice == "T" else 1)
        n = strategy_count(o.form, D)
        idx = reduced_index(o.choice, D) if o.form is Form.RS else full_index(o.choice, D)
        return base + (o.role - 1) * n + idx

    def model(self, theta: Sequence[float]) -> ModelSpec:
        p = dict(zip(param_names(self.kind), theta))
        return ModelSpec(self.kind, p.get("tau"), p.get("lambda"), self.k_max)

    def _solve(self, model: ModelSpec, gid: str, form: Form) -> Solution:
        game = self.dataset.games[gid]
        if self.kind is not Kind.AQRE:
            return model.solve(game, form, self.cfg)
        # continue the branch from the closest solved lambda below the target
        with self._lock:
            cache = self._aqre_cache.setdefault((gid, form), OrderedDict())
            below = [l for l in cache if l <= model.lam]
            start = cache[max(below)] if below else None
        sol = aqre_solve(game, form, model.lam, self.cfg, start=start)
        with self._lock:
            cache[model.lam] = sol
            while len(cache) > 256:
                cache.popitem(last=False)
        return sol

    def _log_probs(self, theta: tuple[float, ...]) -> np.ndarray:
        model = self.model(theta)
        out = np.empty(self.n_cells)
        for gid, form in self.blocks:
            sol = self._solve(model, gid, form)
            probs = aggregate_choice_probs(sol)
            base = self.offsets[(gid, form)]
            with np.errstate(divide="ignore", invalid="ignore"):
                if form is Form.DR:
                    lp = np.stack([np.log(probs), np.log1p(-probs)], axis=-1)
                else:
                    lp = np.log(probs)
            lp = lp.ravel()
            out[base:base + lp.size] = np.where(np.isnan(lp), -np.inf, lp)
        out.setflags(write=False)
        return out

    def __call__(self, theta: Sequence[float], counts: np.ndarray | None = None) -> float:
        counts = self.counts if counts is None else counts
        lp = self.log_probs(tuple(float(t) for t in theta))
        nz = counts > 0
        if np.any(np.isneginf(lp[nz])):
            raise ZeroProbabilityError(
                f"observed choice has zero probability under {self.model(theta)}"
            )
        return float(counts[nz] @ lp[nz])

    def per_unit(self, theta: Sequence[float]) -> np.ndarray:
        """Log-likelihood contribution of each unit (paths for direct response)."""
        lp = self.log_probs(tuple(float(t) for t in theta))
        with np.errstate(invalid="ignore"):
            out = self.units @ np.where(np.isneginf(lp), -1e300, lp)
        if np.any(out <= -1e299):
            raise ZeroProbabilityError("observed choice has zero probability")
        return out


def loglik(kind: Kind | str, params: Mapping[str, float], dataset: Dataset,
           k_max: int = 50, cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Pooled log-likelihood at ``params`` (keys ``tau`` and/or ``lambda``)."""
    like = Likelihood(dataset, kind, k_max, cfg)
    return like(_theta(like.kind, params))


def per_unit_loglik(kind: Kind | str, params: Mapping[str, float], dataset: Dataset,
                    k_max: int = 50, cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    like = Likelihood(dataset, kind, k_max, cfg)
    return like.per_unit(_theta(like.kind, params))


def _theta(kind: Kind, params: Mapping[str, float]) -> tuple[float, ...]:
    names = param_names(kind)
    missing = [n for n in names if n not in params or params[n] is None]
    if missing:
        raise ValueError(f"{kind.value} needs parameters {names}, missing {missing}")
    theta = tuple(float(params[n]) for n in names)
    for n, v in zip(names, theta):
        if not math.isfinite(v) or (v <= 0 if n == "tau" else v < 0):
            raise ValueError(f"invalid {n}={v}")
    return theta


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class SearchConfig:
    tau_range: tuple[float, float] = (0.05, 12.0)
    lam_range: tuple[float, float] = (1e-4, 1.0)
    grid_points: int = 25
    n_starts: int = 3
    rtol: float = 1e-6
    max_iter: int = 4000
    # hard limits for the local search, in parameter units
    tau_bounds: tuple[float, float] = (1e-3, 50.0)
    lam_bounds: tuple[float, float] = (1e-8, 100.0)

    def grid(self, name: str) -> np.ndarray:
        lo, hi = self.tau_range if name == "tau" else self.lam_range
        return np.geomspace(lo, hi, self.grid_points)

    def bounds(self, name: str) -> tuple[float, float]:
        return self.tau_bounds if name == "tau" else self.lam_bounds


DEFAULT_SEARCH = SearchConfig()


@dataclass
class FitResult:
    kind: Kind
    estimates: dict[str, float]
    log_likelihood: float
    n_obs: int
    n_units: int
    k_max: int
    boundary: bool = False
    se: dict[str, float] | None = None
    bootstrap_replicates: int = 0
    bootstrap_failures: int = 0
    seed: int | None = None
    replicate_estimates: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "model": self.kind.value,
            "estimates": {k: float(v) for k, v in self.estimates.items()},
            "log_likelihood": float(self.log_likelihood),
            "n_obs": self.n_obs,
            "n_units": self.n_units,
            "k_max": self.k_max if self.kind is not Kind.AQRE else None,
            "boundary": self.boundary,
        }
        if self.se is not None:
            d["se"] = {k: float(v) for k, v in self.se.items()}
            d["bootstrap"] = {
                "replicates": self.bootstrap_replicates,
                "failed": self.bootstrap_failures,
                "seed": self.seed,
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _objective(like: Likelihood, counts=None):
    def f(x):
        try:
            return -like(np.exp(x), counts)
        except (ZeroProbabilityError, ConvergenceError):
            return math.inf
    return f


def _golden(f, a: float, b: float, tol: float, max_iter: int):
    """Golden-section minimization of f on [a, b]; returns (x, f(x), converged)."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while abs(b - a) > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
        it += 1
    pts = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fx, x = min(pts)
    return x, fx, abs(b - a) <= tol


def _local(f, x0: np.ndarray, step: np.ndarray, lo: np.ndarray, hi: np.ndarray,
           search: SearchConfig):
    """Local refinement in log-parameter space; returns (x, f(x), converged)."""
    if x0.size == 1:
        a = max(lo[0], x0[0] - step[0])
        b = min(hi[0], x0[0] + step[0])
        x, fx, ok = _golden(lambda t: f(np.array([t])), a, b, search.rtol, search.max_iter)
        f0 = f(x0)
        if f0 < fx:
            x, fx = x0[0], f0
        return np.array([x]), fx, ok
    simplex = np.vstack([x0, x0 + np.diag(step)])
    res = optimize.minimize(
        f, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
        options={"xatol": search.rtol, "fatol": 1e-10, "maxiter": search.max_iter,
                 "maxfev": 4 * search.max_iter, "initial_simplex": simplex},
    )
    return np.asarray(res.x, dtype=float), float(res.fun), bool(res.success)


def fit(kind: Kind | str, dataset: Dataset, search: SearchConfig = DEFAULT_SEARCH,
        k_max: int = 50, cfg: SolverConfig = DEFAULT_CONFIG, *,
        likelihood: Likelihood | None = None) -> FitResult:
    """Maximum-likelihood estimates by a coarse log-spaced grid followed by
    local refinement from the best grid points."""
    kind = Kind(kind)
    like = likelihood or Likelihood(dataset, kind, k_max, cfg)
    names = param_names(kind)
    grids = [np.log(search.grid(n)) for n in names]
    lo = np.log([search.bounds(n)[0] for n in names])
    hi = np.log([search.bounds(n)[1] for n in names])
    step = np.array([g[1] - g[0] for g in grids])
    f = _objective(like)

    mesh = np.array(np.meshgrid(*grids, indexing="ij")).reshape(len(names), -1).T
    values = np.array([f(x) for x in mesh])
    if not np.any(np.isfinite(values)):
        raise FitError("likelihood is zero at every grid point", {}, -math.inf)
    order = np.argsort(values, kind="stable")[: search.n_starts]
    best = None
    all_ok = True
    for i in order:
        if not np.isfinite(values[i]):
            continue
        x, fx, ok = _local(f, mesh[i], step, lo, hi, search)
        if best is None or fx < best[1]:
            best, all_ok = (x, fx), ok
        elif fx == best[1]:
            all_ok = all_ok or ok
    x, fx = best
    if fx > values.min():  # never worse than the best grid point
        x, fx = mesh[int(np.argmin(values))], float(values.min())
    est = {n: float(v) for n, v in zip(names, np.exp(x))}
    if not all_ok:
        raise FitError("local refinement did not converge", est, -fx)
    boundary = any(
        not (search.grid(n)[0] < est[n] < search.grid(n)[-1]) for n in names
    )
    return FitResult(kind, est, -fx, dataset.n_obs, like.n_units, like.k_max, boundary)


def bootstrap_se(kind: Kind | str, dataset: Dataset, estimate: FitResult | Mapping[str, float],
                 B: int = 1000, seed: int = 0, search: SearchConfig = DEFAULT_SEARCH,
                 k_max: int = 50, cfg: SolverConfig = DEFAULT_CONFIG, threads: int = 1,
                 *, likelihood: Likelihood | None = None) -> FitResult:
    """Bootstrap standard errors.

    Units (direct-response paths, single strategies) are resampled with
    replacement within each form. Every replicate is refit locally from
    the original estimate. Replicate ``b`` draws from a generator seeded
    with ``(seed, b)``, so results do not depend on ``threads``.
    """
    kind = Kind(kind)
    if B < 1:
        raise ValueError("bootstrap needs B >= 1 replicates")
    like = likelihood or Likelihood(dataset, kind, k_max, cfg)
    if isinstance(estimate, FitResult):
        base = estimate
    else:
        theta = _theta(kind, estimate)
        base = FitResult(kind, dict(zip(param_names(kind), theta)), like(theta),
                         dataset.n_obs, like.n_units, like.k_max)
    names = param_names(kind)
    x0 = np.log([base.estimates[n] for n in names])
    lo = np.log([search.bounds(n)[0] for n in names])
    hi = np.log([search.bounds(n)[1] for n in names])
    step = np.array([np.log(search.grid(n)[1] / search.grid(n)[0]) for n in names])
    strata = [np.flatnonzero(like.strata == s) for s in np.unique(like.strata)]
    unitsT = like.units.T.tocsr()

    def replicate(b: int):
        rng = np.random.default_rng([seed, b])
        w = np.zeros(like.n_units)
        for idx in strata:
            w += np.bincount(idx[rng.integers(0, idx.size, idx.size)], minlength=like.n_units)
        counts = unitsT @ w
        f = _objective(like, counts)
        try:
            x, fx, ok = _local(f, x0, step, lo, hi, search)
        except (ValueError, FloatingPointError):
            return None
        if not ok or not math.isfinite(fx):
            return None
        return np.exp(x)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            reps = list(ex.map(replicate, range(B)))
    else:
        reps = [replicate(b) for b in range(B)]
    good = np.array([r for r in reps if r is not None]).reshape(-1, len(names))
    failures = B - good.shape[0]
    se = {n: float(np.std(good[:, j], ddof=1)) if good.shape[0] > 1 else float("nan")
          for j, n in enumerate(names)}
    return FitResult(kind, dict(base.estimates), base.log_likelihood, base.n_obs,
                     base.n_units, base.k_max, base.boundary, se, B, failures, seed, good)


# ---------------------------------------------------------------------------
# model comparison


def lrt(ll_restricted: float, ll_full: float, df: int = 1) -> tuple[float, float]:
    """Likelihood-ratio statistic and chi-square upper-tail p-value."""
    if df < 1:
        raise ValueError("df must be >= 1")
    stat = 2.0 * (ll_full - ll_restricted)
    if stat < -2e-9:
        raise ValueError(f"restricted model fits better than the full model (stat {stat:.3g})")
    stat = max(stat, 0.0)
    return stat, float(stats.chi2.sf(stat, df))


def vuong(ll_a: Sequence[float], ll_b: Sequence[float]) -> tuple[float, float]:
    """Vuong non-nested test on pointwise log-likelihoods; positive V favors a.

    Direct-response data should be passed per path, as ``per_unit_loglik``
    returns it.
    """
    a, b = np.asarray(ll_a, dtype=float), np.asarray(ll_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("pointwise log-likelihood vectors must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two observations")
    m = a - b
    sd = float(np.std(m))
    if not sd > 0:
        raise ValueError("pointwise differences have zero variance; test is degenerate")
    V = float(m.sum() / (math.sqrt(n) * sd))
    return V, float(2.0 * stats.norm.sf(abs(V)))

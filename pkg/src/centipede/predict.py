"""Terminal-node distributions, CDF comparisons and sup-norm design scans."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .games import CentipedeGame, Family, Form, GameSpec, GameValidationError, Rescale, make_game
from .solvers import DEFAULT_CONFIG, ModelSpec, Solution, SolverConfig, aggregated_reduced

# default scan ranges per family, mirroring the plotted design figures
FAMILY_RANGES = {
    Family.LINEAR: (0.01, 0.99),
    Family.EXPONENTIAL: (2.01, 8.0),
    Family.CONSTANT: (0.01, 0.99),
}


def terminal_from_mixtures(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Terminal-node distribution when the two players independently draw
    reduced strategies from ``a1`` and ``a2``."""
    D = a1.size - 1
    s1 = np.cumsum(a1[::-1])[::-1]
    s2 = np.cumsum(a2[::-1])[::-1]
    out = np.empty(2 * D + 1)
    out[0:2 * D:2] = a1[:D] * s2[:D]        # Player 1 takes first at own node m
    out[1:2 * D:2] = a2[:D] * s1[1:D + 1]   # Player 2 takes at own node m
    out[2 * D] = a1[D] * a2[D]
    return out


def terminal_distribution(solution: Solution, game: CentipedeGame | None = None) -> np.ndarray:
    """Probabilities of ending at nodes 1..2D+1.

    Levels of the two players are independent, so the level-pair sum
    factors through each player's population mixture over reduced
    strategies.
    """
    if game is not None and game.D != solution.D:
        raise GameValidationError(
            f"solution has D={solution.D} but game has D={game.D}"
        )
    a = aggregated_reduced(solution)
    return terminal_from_mixtures(a[0], a[1])


def cdf(dist: np.ndarray) -> np.ndarray:
    return np.cumsum(dist)


def supnorm(d1: np.ndarray, d2: np.ndarray) -> float:
    """Largest absolute gap between the CDFs of two terminal distributions."""
    d1, d2 = np.asarray(d1, dtype=float), np.asarray(d2, dtype=float)
    if d1.shape != d2.shape:
        raise ValueError(f"distribution lengths differ: {d1.shape} vs {d2.shape}")
    return float(np.max(np.abs(np.cumsum(d1) - np.cumsum(d2))))


def predicted_supnorm(model: ModelSpec, game: CentipedeGame, pair: tuple[Form, Form],
                      cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    f1, f2 = (Form.parse(f) for f in pair)
    d1 = terminal_distribution(model.solve(game, f1, cfg))
    d2 = terminal_distribution(model.solve(game, f2, cfg))
    return supnorm(d1, d2)


def parse_pair(pair: str | tuple) -> tuple[Form, Form]:
    if isinstance(pair, str):
        parts = pair.lower().split("-")
        if len(parts) != 2:
            raise ValueError(f"form pair must look like 'rs-dr', got {pair!r}")
        pair = tuple(parts)
    f1, f2 = (Form.parse(f) for f in pair)
    return f1, f2


def c_grid(c_min: float, c_max: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("step must be positive")
    if c_max < c_min:
        raise ValueError("empty grid: c_max < c_min")
    n = int(math.floor((c_max - c_min) / step + 1e-9))
    return np.round(c_min + step * np.arange(n + 1), 12)


@dataclass(frozen=True)
class DesignScan:
    family: Family
    model: ModelSpec
    pair: tuple[Form, Form]
    c: np.ndarray
    values: np.ndarray  # NaN where a grid point failed
    status: tuple[str, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["c", "supnorm", "status"])
        for c, v, s in zip(self.c, self.values, self.status):
            w.writerow([repr(float(c)), "" if math.isnan(v) else repr(float(v)), s])
        return buf.getvalue()

    def at(self, c: float) -> float:
        i = int(np.argmin(np.abs(self.c - c)))
        if abs(self.c[i] - c) > 1e-9:
            raise KeyError(f"c={c} not on the grid")
        return float(self.values[i])


def design_scan(family: Family | str, model: ModelSpec, pair, grid, *, D: int = 3,
                pi: float = 2.0, rescale: Rescale = Rescale(),
                cfg: SolverConfig = DEFAULT_CONFIG, threads: int = 1) -> DesignScan:
    """Sup-norm between the two forms' terminal CDFs at every grid value of c.

    Out-of-range c values and solver failures are recorded per point.
    """
    family = Family(family)
    pair = parse_pair(pair)
    grid = np.asarray(grid, dtype=float)

    def point(c):
        try:
            game = make_game(GameSpec(family, c=float(c), stages=2 * D, pi=pi, rescale=rescale))
            return predicted_supnorm(model, game, pair, cfg), "ok"
        except (GameValidationError, ValueError, RuntimeError) as exc:
            return float("nan"), f"error: {exc}".replace(",", ";")

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(point, grid))
    else:
        results = [point(c) for c in grid]
    values = np.array([r[0] for r in results])
    return DesignScan(family, model, pair, grid, values, tuple(r[1] for r in results))


def cdf_table_csv(d_a: np.ndarray, d_b: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "cdf_a", "cdf_b"])
    for j, (a, b) in enumerate(zip(cdf(d_a), cdf(d_b)), start=1):
        w.writerow([j, repr(float(a)), repr(float(b))])
    return buf.getvalue()

"""Nonparametric tests on terminal nodes and the matched-pair panel."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as _st
from scipy.stats import rankdata

from .estimate import Dataset, path_terminal_node
from .games import Form, reduce_strategy, terminal_node

# samples no larger than this (per group) get exact null distributions
EXACT_MAX_N = 12


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    p: float
    n: int
    p_adjusted: float | None = None
    degenerate: bool = False
    method: str = "normal"

    def to_dict(self) -> dict:
        d = {"test": self.test, "statistic": self.statistic, "p": self.p, "n": self.n}
        if self.p_adjusted is not None:
            d["p_adjusted"] = self.p_adjusted
        if self.degenerate:
            d["degenerate"] = True
        return d

    def adjusted(self, comparisons: int) -> "TestResult":
        return TestResult(self.test, self.statistic, self.p, self.n,
                          bonferroni(self.p, comparisons), self.degenerate, self.method)


def _clip(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def bonferroni(p: float, comparisons: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if comparisons < 1:
        raise ValueError("comparisons must be >= 1")
    return min(1.0, comparisons * p)


# ---------------------------------------------------------------------------
# exact null distributions on doubled mid-ranks (integers)


def _signed_rank_null(ranks2: np.ndarray) -> np.ndarray:
    """P(sum of positive doubled ranks = s) under random signs."""
    dist = np.zeros(int(ranks2.sum()) + 1)
    dist[0] = 1.0
    for r in ranks2.astype(int):
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: dist.size - r]
        dist = 0.5 * (dist + shifted)
    return dist


def _rank_sum_null(ranks2: np.ndarray, n: int) -> np.ndarray:
    """P(sum of doubled ranks of a random n-subset = s)."""
    total = int(ranks2.sum())
    dp = np.zeros((n + 1, total + 1))
    dp[0, 0] = 1.0
    for r in ranks2.astype(int):
        dp[1:, r:] = dp[1:, r:] + dp[:-1, : total + 1 - r]
    return dp[n] / math.comb(ranks2.size, n)


def _two_sided(dist: np.ndarray, observed: int, mean2: float) -> float:
    s = np.arange(dist.size)
    dev = abs(observed - mean2)
    return _clip(float(dist[np.abs(s - mean2) >= dev - 1e-9].sum()))


# ---------------------------------------------------------------------------


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float], method: str = "auto") -> TestResult:
    """Two-sided signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get mid-ranks. The
    statistic is the sum of positive ranks. ``method`` is "normal"
    (tie-corrected variance with continuity correction), "exact" (the
    permutation distribution of the observed ranks) or "auto", which is
    exact up to ``EXACT_MAX_N`` nonzero differences.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("signed-rank test needs paired samples of equal length")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        return TestResult("signedrank", 0.0, 1.0, 0, degenerate=True)
    ranks = rankdata(np.abs(d))
    W = float(ranks[d > 0].sum())
    if method == "exact" or (method == "auto" and n <= EXACT_MAX_N):
        r2 = np.rint(2 * ranks)
        p = _two_sided(_signed_rank_null(r2), int(round(2 * W)), r2.sum() / 2)
        return TestResult("signedrank", W, p, n, method="exact")
    if method not in ("auto", "normal"):
        raise ValueError(f"unknown method {method!r}")
    mu = n * (n + 1) / 4.0
    _, t = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(t**3 - t)) / 48.0
    if var <= 0:
        return TestResult("signedrank", W, 1.0, n, degenerate=True)
    z = max(abs(W - mu) - 0.5, 0.0) / math.sqrt(var)
    return TestResult("signedrank", W, _clip(2 * _st.norm.sf(z)), n)


def rank_sum(x: Sequence[float], y: Sequence[float], method: str = "auto") -> TestResult:
    """Two-sided Mann-Whitney test; the statistic is U of ``x``.

    Normal approximation with tie-corrected variance and continuity
    correction; "auto" switches to the exact permutation distribution when
    neither sample exceeds ``EXACT_MAX_N``.
    """
    x, y = np.asarray(x, dtype=float).ravel(), np.asarray(y, dtype=float).ravel()
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise ValueError("rank-sum test needs two non-empty samples")
    ranks = rankdata(np.concatenate([x, y]))
    R = float(ranks[:n].sum())
    U = R - n * (n + 1) / 2.0
    N = n + m
    if method == "exact" or (method == "auto" and max(n, m) <= EXACT_MAX_N):
        r2 = np.rint(2 * ranks)
        p = _two_sided(_rank_sum_null(r2, n), int(round(2 * R)), n * (N + 1))
        return TestResult("ranksum", U, p, N, method="exact")
    if method not in ("auto", "normal"):
        raise ValueError(f"unknown method {method!r}")
    _, t = np.unique(ranks, return_counts=True)
    var = n * m / 12.0 * ((N + 1) - float(np.sum(t**3 - t)) / (N * (N - 1)))
    if var <= 0:
        return TestResult("ranksum", U, 1.0, N, degenerate=True)
    z = max(abs(U - n * m / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return TestResult("ranksum", U, _clip(2 * _st.norm.sf(z)), N)


def friedman(panel) -> TestResult:
    """Friedman test on an n x k panel (rows are blocks) with tie correction."""
    X = np.asarray(panel, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise ValueError("Friedman test needs an n x k panel with n >= 2 and k >= 2")
    n, k = X.shape
    R = np.apply_along_axis(rankdata, 1, X)
    Rj = R.sum(axis=0)
    ties = 0.0
    for row in R:
        _, t = np.unique(row, return_counts=True)
        ties += float(np.sum(t**3 - t))
    denom = 1.0 - ties / (n * (k**3 - k))
    if denom <= 1e-15:
        return TestResult("friedman", 0.0, 1.0, n, degenerate=True)
    Q = (12.0 / (n * k * (k + 1)) * float(np.sum(Rj**2)) - 3.0 * n * (k + 1)) / denom
    Q = max(Q, 0.0)
    return TestResult("friedman", Q, _clip(_st.chi2.sf(Q, k - 1)), n)


def ks_two_sample_pvalue(S: float, n: int, m: int) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov p-value for sup-norm ``S``."""
    if not 0.0 <= S <= 1.0:
        raise ValueError(f"S must lie in [0, 1], got {S}")
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    lam = math.sqrt(n * m / (n + m)) * S
    if lam == 0:
        return 1.0
    if lam < 1.18:
        # theta-transformed series, fast where the alternating one is slow
        a = math.pi**2 / (8.0 * lam * lam)
        total = sum(math.exp(-(2 * j - 1) ** 2 * a) for j in range(1, 30))
        return _clip(1.0 - math.sqrt(2.0 * math.pi) / lam * total)
    total = 0.0
    j = 1
    while True:
        term = 2.0 * (-1) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-12 or j > 100_000:
            break
        j += 1
    return _clip(total)


def ks_test(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Two-sample KS on observed terminal nodes with the series p-value."""
    x, y = np.sort(np.asarray(x, dtype=float)), np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    grid = np.union1d(x, y)
    Fx = np.searchsorted(x, grid, side="right") / x.size
    Fy = np.searchsorted(y, grid, side="right") / y.size
    S = float(np.max(np.abs(Fx - Fy)))
    return TestResult("ks", S, ks_two_sample_pvalue(S, x.size, y.size), x.size + y.size)


# ---------------------------------------------------------------------------
# matched panel


@dataclass(frozen=True)
class MatchedPanel:
    rows: tuple[tuple[str, str, str], ...]  # (session_id, pair_id, game_id)
    forms: tuple[Form, ...]
    cells: np.ndarray  # (n_rows, 3) terminal nodes
    skipped: int = 0
    games: tuple[str, ...] = field(default=())

    def column(self, form: Form | str) -> np.ndarray:
        return self.cells[:, self.forms.index(Form.parse(form))]

    def to_csv(self) -> str:
        lines = ["session_id,pair_id,game_id," + ",".join(f.value for f in self.forms)]
        for (s, p, g), row in zip(self.rows, self.cells):
            lines.append(",".join([s, p, g, *(str(int(v)) for v in row)]))
        return "\n".join(lines) + "\n"


def matched_terminal_nodes(dataset: Dataset) -> MatchedPanel:
    """Terminal nodes of each direct-response pair in all three forms.

    The strategy-form cells pair the same two subjects' submitted
    strategies for that game. Pair-games missing any form are skipped and
    counted.
    """
    strategies: dict[tuple, str] = {}
    partners: dict[tuple, set] = {}
    for o in dataset.observations:
        if o.form is not Form.DR:
            strategies[(o.session_id, o.subject_id, o.game_id, o.form)] = o.choice
            if o.role == 2:
                partners.setdefault((o.session_id, o.pair_id, o.game_id), set()).add(o.subject_id)
    rows, cells = [], []
    skipped = 0
    for (sess, pair, gid), path in sorted(dataset.paths().items()):
        D = dataset.games[gid].D
        subj = {o.role: o.subject_id for o in path}
        if 2 not in subj:
            # Player 2 never moved; find the partner through the strategy rows
            found = partners.get((sess, pair, gid), set())
            if len(found) == 1:
                subj[2] = next(iter(found))
        try:
            rs = [strategies[(sess, subj[r], gid, Form.RS)] for r in (1, 2)]
            fs = [strategies[(sess, subj[r], gid, Form.FS)] for r in (1, 2)]
        except KeyError:
            skipped += 1
            continue
        rows.append((sess, pair, gid))
        cells.append((
            path_terminal_node(path),
            terminal_node(rs[0], rs[1], D),
            terminal_node(reduce_strategy(fs[0]), reduce_strategy(fs[1]), D),
        ))
    arr = np.array(cells, dtype=int).reshape(-1, 3)
    return MatchedPanel(tuple(rows), (Form.DR, Form.RS, Form.FS), arr, skipped,
                        tuple(dict.fromkeys(r[2] for r in rows)))


# ---------------------------------------------------------------------------
# batch driver


TESTS = ("friedman", "signedrank", "ranksum", "ks")


def terminal_nodes_by_form(dataset: Dataset) -> dict[tuple[str, Form], np.ndarray]:
    """Observed terminal nodes per (game, form); strategy forms via matched panel pairs."""
    out: dict[tuple[str, Form], list[int]] = {}
    for (sess, pair, gid), path in sorted(dataset.paths().items()):
        out.setdefault((gid, Form.DR), []).append(path_terminal_node(path))
    panel = matched_terminal_nodes(dataset)
    for (sess, pair, gid), row in zip(panel.rows, panel.cells):
        out.setdefault((gid, Form.RS), []).append(int(row[1]))
        out.setdefault((gid, Form.FS), []).append(int(row[2]))
    return {k: np.array(v) for k, v in out.items()}


def run_tests(dataset: Dataset, tests: Sequence[str] = TESTS) -> list[dict]:
    """Per-game tests across forms, one row per game, test and form pair.

    Friedman uses the matched panel; signed-rank compares matched form
    pairs; rank-sum and KS compare the unmatched terminal-node samples.
    Pairwise tests carry Bonferroni-adjusted p-values over the three
    form pairs.
    """
    unknown = set(tests) - set(TESTS)
    if unknown:
        raise ValueError(f"unknown tests {sorted(unknown)}; choose from {TESTS}")
    panel = matched_terminal_nodes(dataset)
    samples = terminal_nodes_by_form(dataset)
    pairs = [(Form.RS, Form.DR), (Form.FS, Form.DR), (Form.RS, Form.FS)]
    out: list[dict] = []
    for gid in dataset.game_ids():
        mask = np.array([r[2] == gid for r in panel.rows], dtype=bool)
        block = panel.cells[mask] if mask.size else np.zeros((0, 3), dtype=int)
        for name in TESTS:
            if name not in tests:
                continue
            if name == "friedman":
                if block.shape[0] >= 2:
                    out.append({"game_id": gid, "forms": "dr,rs,fs", **friedman(block).to_dict()})
                continue
            for a, b in pairs:
                label = f"{a.value}-{b.value}"
                if name == "signedrank":
                    if block.shape[0] == 0:
                        continue
                    ia, ib = panel.forms.index(a), panel.forms.index(b)
                    res = wilcoxon_signed_rank(block[:, ia], block[:, ib])
                else:
                    xa, xb = samples.get((gid, a)), samples.get((gid, b))
                    if xa is None or xb is None or xa.size == 0 or xb.size == 0:
                        continue
                    res = rank_sum(xa, xb) if name == "ranksum" else ks_test(xa, xb)
                out.append({"game_id": gid, "forms": label, **res.adjusted(len(pairs)).to_dict()})
    return out


def results_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"

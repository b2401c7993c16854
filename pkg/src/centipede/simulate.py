"""Monte Carlo datasets drawn from DCH, QDCH or AQRE solutions."""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .estimate import Dataset, Observation
from .games import (
    Form,
    GameSpec,
    full_labels,
    make_game,
    experiment_game_specs,
    reduced_labels,
    take_node,
)
from .solvers import DEFAULT_CONFIG, Kind, ModelSpec, SolverConfig

_FORM_CODE = {Form.DR: 0, Form.RS: 1, Form.FS: 2}


@dataclass(frozen=True)
class SimConfig:
    model: ModelSpec
    games: Mapping[str, GameSpec] = field(default_factory=experiment_game_specs)
    forms: Sequence[Form] = (Form.DR, Form.RS, Form.FS)
    subjects_per_role: int = 96
    session_size: int | None = None  # subjects per role in a matching group; None = all
    no_repeat: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "forms", tuple(Form.parse(f) for f in self.forms))
        object.__setattr__(self, "games", dict(self.games))
        if not self.games:
            raise ValueError("simulation needs at least one game")
        if not self.forms:
            raise ValueError("simulation needs at least one form")
        if self.subjects_per_role < 1:
            raise ValueError("subjects_per_role must be >= 1")
        size = self.session_size or self.subjects_per_role
        if size < 1:
            raise ValueError("session_size must be >= 1")
        if self.no_repeat:
            smallest = min(size, self.subjects_per_role - size * (self.n_sessions - 1))
            if smallest < len(self.games):
                raise ValueError(
                    f"no-repeat matching needs at least {len(self.games)} subjects per role "
                    f"in every session, smallest session has {smallest}"
                )

    @property
    def n_sessions(self) -> int:
        size = self.session_size or self.subjects_per_role
        return -(-self.subjects_per_role // size)

    def sessions(self) -> list[int]:
        """Number of subjects per role in each session."""
        size = self.session_size or self.subjects_per_role
        n = self.subjects_per_role
        return [min(size, n - s * size) for s in range(self.n_sessions)]

    def to_dict(self) -> dict:
        return {
            "model": {"kind": self.model.kind.value, **self.model.params(), "k_max": self.model.k_max},
            "games": {gid: spec.to_dict() for gid, spec in self.games.items()},
            "forms": [f.value for f in self.forms],
            "subjects_per_role": self.subjects_per_role,
            "session_size": self.session_size,
            "no_repeat": self.no_repeat,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        known = {"model", "games", "forms", "subjects_per_role", "session_size", "no_repeat", "seed"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown simulation config keys: {sorted(extra)}")
        if "model" not in d:
            raise ValueError("simulation config needs a 'model' block")
        m = dict(d["model"])
        extra = set(m) - {"kind", "tau", "lambda", "k_max"}
        if extra:
            raise ValueError(f"unknown model keys: {sorted(extra)}")
        model = ModelSpec(m["kind"], m.get("tau"), m.get("lambda"), int(m.get("k_max", 50)))
        kw = {k: d[k] for k in ("subjects_per_role", "session_size", "no_repeat", "seed") if k in d}
        if "games" in d:
            kw["games"] = {gid: GameSpec.from_dict(g) for gid, g in d["games"].items()}
        if "forms" in d:
            kw["forms"] = tuple(d["forms"])
        return cls(model=model, **kw)


def _subject_id(session: int, role: int, i: int) -> str:
    return f"S{session + 1}-P{role}-{i + 1:03d}"


def _draw(p: np.ndarray, u: float) -> int:
    c = np.cumsum(p)
    return min(int(np.searchsorted(c, u * c[-1], side="right")), p.size - 1)


def _stream(seed: int, role: int, index: int, *tail: int) -> np.random.Generator:
    return np.random.default_rng([seed, role, index, *tail])


def simulate_with_levels(cfg: SimConfig, solver_cfg: SolverConfig = DEFAULT_CONFIG,
                         threads: int = 1) -> tuple[Dataset, dict[str, int]]:
    """Simulate and also return each subject's drawn level (empty for AQRE)."""
    model = cfg.model
    games = {gid: make_game(spec, gid) for gid, spec in cfg.games.items()}
    gids = list(games)
    gkey = {gid: zlib.crc32(gid.encode()) for gid in gids}
    sols = {(gid, f): model.solve(games[gid], f, solver_cfg) for gid in gids for f in cfg.forms}
    prior = model.prior()
    D = {gid: games[gid].D for gid in gids}

    # subjects: (session, role, i) with a population index per role
    subjects = []
    idx = {1: 0, 2: 0}
    for s, size in enumerate(cfg.sessions()):
        for role in (1, 2):
            for i in range(size):
                subjects.append((s, role, i, idx[role]))
                idx[role] += 1

    def level_of(role, n):
        if prior is None:
            return 0
        return _draw(prior.probs, _stream(cfg.seed, role, n).random())

    def choices_of(subj):
        """Reduced (and full) strategy draw for every (game, form) of one subject."""
        s, role, i, n = subj
        k = level_of(role, n)
        out = {}
        for gid in gids:
            for f in cfg.forms:
                u = _stream(cfg.seed, role, n, gkey[gid], _FORM_CODE[f]).random(2)
                sol = sols[(gid, f)]
                if f is Form.FS:
                    out[(gid, f)] = _draw(sol.full[role - 1, k], u[0])
                else:
                    out[(gid, f)] = _draw(sol.reduced[role - 1, k], u[0])
        return k, out

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            drawn = list(ex.map(choices_of, subjects))
    else:
        drawn = [choices_of(s) for s in subjects]
    by_subject = {subj[:3]: d for subj, d in zip(subjects, drawn)}

    rows: list[tuple[tuple, Observation]] = []
    sizes = cfg.sessions()
    for s, size in enumerate(sizes):
        sess = f"S{s + 1}"
        for gi, gid in enumerate(gids):
            d = D[gid]
            for fi, f in enumerate(cfg.forms):
                for i in range(size):
                    j = (i + gi) % size if cfg.no_repeat else i
                    sid1, sid2 = _subject_id(s, 1, i), _subject_id(s, 2, j)
                    pair = f"{sess}-{gid}-{i + 1:03d}"
                    c1 = by_subject[(s, 1, i)][1][(gid, f)]
                    c2 = by_subject[(s, 2, j)][1][(gid, f)]
                    if f is Form.DR:
                        end = min(take_node(c1, 1, d), take_node(c2, 2, d))
                        for node in range(1, min(end, 2 * d) + 1):
                            role = 1 if node % 2 else 2
                            who, si = (sid1, (s, 1, i)) if role == 1 else (sid2, (s, 2, j))
                            ob = Observation(sess, who, pair, role, gid, f,
                                             "T" if node == end else "P", node)
                            rows.append(((si, gi, fi, node), ob))
                    else:
                        labels = full_labels(d) if f is Form.FS else reduced_labels(d)
                        rows.append((((s, 1, i), gi, fi, 0),
                                     Observation(sess, sid1, pair, 1, gid, f, labels[c1])))
                        rows.append((((s, 2, j), gi, fi, 0),
                                     Observation(sess, sid2, pair, 2, gid, f, labels[c2])))
    rows.sort(key=lambda r: r[0])
    levels = {}
    if model.kind is not Kind.AQRE:
        levels = {_subject_id(*key): d[0] for key, d in sorted(by_subject.items())}
    return Dataset(tuple(ob for _, ob in rows), games), levels


def simulate(cfg: SimConfig, solver_cfg: SolverConfig = DEFAULT_CONFIG,
             threads: int = 1) -> Dataset:
    """Draw a synthetic dataset.

    Each subject's level is drawn once and kept for all games and forms.
    Within a matching group, the i-th Player 1 meets Player 2 number
    (i + g) mod size in game g, so nobody meets the same opponent twice.
    """
    return simulate_with_levels(cfg, solver_cfg, threads)[0]

"""Parameterized centipede games, elicitation forms and strategy encodings.

Nodes are numbered 1..2D+1 in the public API. Player 1 moves at odd nodes,
Player 2 at even nodes, and node 2D+1 is the all-pass terminal.

Reduced strategies are encoded as the number of own passes before taking:
``m = 0`` takes at the first own node, ``m = D`` always passes. Full
strategies are strings over ``{"T", "P"}`` with one symbol per own node.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GameValidationError(ValueError):
    """Raised when game parameters or strategy labels are invalid."""


class Family(str, enum.Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    CONSTANT = "constant"
    CUSTOM = "custom"


class Form(str, enum.Enum):
    """Choice elicitation method."""

    DR = "dr"  # direct response: sequential play
    RS = "rs"  # reduced strategy method
    FS = "fs"  # full strategy method

    @classmethod
    def parse(cls, value: "str | Form") -> "Form":
        if isinstance(value, Form):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise GameValidationError(
                f"unknown elicitation form {value!r}; expected one of dr, rs, fs"
            ) from None


@dataclass(frozen=True)
class Rescale:
    """Affine payoff map ``x -> a * x + b`` with ``a > 0``."""

    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise GameValidationError(f"rescale needs finite a > 0, got a={self.a}, b={self.b}")

    def __call__(self, x):
        return self.a * x + self.b


@dataclass(frozen=True)
class GameSpec:
    family: Family
    c: float = float("nan")
    stages: int = 6
    pi: float = 2.0
    rescale: Rescale = field(default_factory=Rescale)
    payoffs: tuple | None = None  # custom family only: ((X_1, Y_1), ...)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        self.validate()

    @property
    def D(self) -> int:
        return self.stages // 2

    def validate(self) -> None:
        if self.family is Family.CUSTOM:
            if self.payoffs is None:
                raise GameValidationError("custom family requires an explicit payoff table")
            n = len(self.payoffs)
            if n < 5 or n % 2 == 0:
                raise GameValidationError(
                    f"custom payoff table needs 2D+1 rows with D >= 2, got {n}"
                )
            object.__setattr__(self, "stages", n - 1)
            return
        if self.stages < 4 or self.stages % 2:
            raise GameValidationError(f"stages must be even and >= 4, got {self.stages}")
        c = self.c
        if not math.isfinite(c):
            raise GameValidationError("family parameter c is required")
        if self.family in (Family.LINEAR, Family.CONSTANT):
            if not 0 < c < 1:
                raise GameValidationError(f"{self.family.value} family requires 0 < c < 1, got c={c}")
        elif self.family is Family.EXPONENTIAL:
            if not c > 1:
                raise GameValidationError(f"exponential family requires c > 1, got c={c}")
            if not 1 < self.pi < c:
                raise GameValidationError(
                    f"exponential family requires 1 < pi < c, got pi={self.pi}, c={c}"
                )

    def to_dict(self) -> dict:
        d = {
            "family": self.family.value,
            "stages": self.stages,
            "rescale": {"a": self.rescale.a, "b": self.rescale.b},
        }
        if self.family is Family.CUSTOM:
            d["payoffs"] = [list(p) for p in self.payoffs]
        else:
            d["c"] = self.c
            if self.family is Family.EXPONENTIAL:
                d["pi"] = self.pi
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GameSpec":
        if not isinstance(d, dict):
            raise GameValidationError(f"game spec must be an object, got {d!r}")
        extra = set(d) - {"family", "c", "stages", "pi", "rescale", "payoffs"}
        if extra:
            raise GameValidationError(f"unknown game spec keys: {sorted(extra)}")
        try:
            family = Family(str(d["family"]).lower())
        except (KeyError, ValueError):
            raise GameValidationError(f"invalid or missing family in {d!r}") from None
        try:
            rs = d.get("rescale") or {}
            rescale = Rescale(float(rs.get("a", 1.0)), float(rs.get("b", 0.0)))
            if family is Family.CUSTOM:
                payoffs = tuple(tuple(float(v) for v in row) for row in d["payoffs"])
                return cls(family, payoffs=payoffs, rescale=rescale)
            return cls(
                family,
                c=float(d["c"]),
                stages=int(d.get("stages", 6)),
                pi=float(d.get("pi", 2.0)),
                rescale=rescale,
            )
        except KeyError as exc:
            raise GameValidationError(f"game spec is missing {exc.args[0]!r}") from None
        except (TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, GameValidationError):
                raise
            raise GameValidationError(f"malformed game spec {d!r}: {exc}") from None


@dataclass(frozen=True, eq=False)
class CentipedeGame:
    """Payoff table ``(X_j, Y_j)`` for nodes ``j = 1..2D+1``."""

    payoffs: np.ndarray
    spec: GameSpec | None = None
    name: str = ""

    def __post_init__(self):
        p = np.array(self.payoffs, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 5 or p.shape[0] % 2 == 0:
            raise GameValidationError(f"payoff table must have shape (2D+1, 2), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise GameValidationError("payoffs must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "payoffs", p)

    @property
    def D(self) -> int:
        return (self.payoffs.shape[0] - 1) // 2

    @property
    def n_nodes(self) -> int:
        return self.payoffs.shape[0]

    @property
    def X(self) -> np.ndarray:
        return self.payoffs[:, 0]

    @property
    def Y(self) -> np.ndarray:
        return self.payoffs[:, 1]

    def mover_dominance_violations(self) -> list[int]:
        """Nodes j where the mover does not strictly prefer taking now to
        the opponent taking next."""
        X, Y = self.X, self.Y
        bad = []
        for j in range(1, 2 * self.D + 1):
            if j % 2 == 1 and not X[j - 1] > X[j]:
                bad.append(j)
            elif j % 2 == 0 and not Y[j - 1] > Y[j]:
                bad.append(j)
        return bad

    def scaled(self, s: float) -> "CentipedeGame":
        return CentipedeGame(self.payoffs * s, None, self.name)

    def table(self) -> str:
        lines = [f"{'node':>4}  {'X':>12}  {'Y':>12}"]
        for j, (x, y) in enumerate(self.payoffs, start=1):
            lines.append(f"{j:>4}  {x:>12.6g}  {y:>12.6g}")
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.table()


def _family_payoffs(spec: GameSpec) -> np.ndarray:
    n = 2 * spec.D + 1
    j = np.arange(1, n + 1, dtype=float)
    odd = (np.arange(1, n + 1) % 2) == 1
    c = spec.c
    if spec.family is Family.LINEAR:
        big, small = 1 + (j - 1) * c, (j - 1) * c
    elif spec.family is Family.EXPONENTIAL:
        big, small = c * spec.pi ** (j - 1), spec.pi ** (j - 1)
    elif spec.family is Family.CONSTANT:
        big, small = 2 - c ** (j - 1), c ** (j - 1)
    else:
        return np.array(spec.payoffs, dtype=float)
    X = np.where(odd, big, small)
    Y = np.where(odd, small, big)
    return np.column_stack([X, Y])


def make_game(spec: GameSpec, name: str = "") -> CentipedeGame:
    """Build the payoff table of ``spec`` and apply its rescale map."""
    spec.validate()
    return CentipedeGame(spec.rescale(_family_payoffs(spec)), spec, name)


def custom_game(payoffs: Sequence[Sequence[float]], name: str = "") -> CentipedeGame:
    spec = GameSpec(Family.CUSTOM, payoffs=tuple(tuple(map(float, p)) for p in payoffs))
    return make_game(spec, name)


# The six games of the experiment, with the payoff rescales used in the lab.
EXPERIMENT_GAME_PARAMS = {
    "linear-0.5": (Family.LINEAR, 0.5, Rescale(100.0, 50.0)),
    "linear-0.8": (Family.LINEAR, 0.8, Rescale(100.0, 50.0)),
    "exponential-2.5": (Family.EXPONENTIAL, 2.5, Rescale(4.0, 0.0)),
    "exponential-4": (Family.EXPONENTIAL, 4.0, Rescale(4.0, 0.0)),
    "constant-0.4": (Family.CONSTANT, 0.4, Rescale(250.0, 0.0)),
    "constant-0.8": (Family.CONSTANT, 0.8, Rescale(250.0, 0.0)),
}


def experiment_game_specs(rescaled: bool = True) -> dict[str, GameSpec]:
    return {
        gid: GameSpec(fam, c=c, rescale=rs if rescaled else Rescale())
        for gid, (fam, c, rs) in EXPERIMENT_GAME_PARAMS.items()
    }


def experiment_games(rescaled: bool = True) -> dict[str, CentipedeGame]:
    return {gid: make_game(s, gid) for gid, s in experiment_game_specs(rescaled).items()}


# ---------------------------------------------------------------------------
# strategies


def strategy_count(form: Form | str, D: int) -> int:
    form = Form.parse(form)
    if form is Form.DR:
        return D
    return D + 1 if form is Form.RS else 2**D


def reduced_labels(D: int) -> list[str]:
    return ["P" * m + "T" for m in range(D)] + ["P" * D]


def full_labels(D: int) -> list[str]:
    return ["".join(s) for s in itertools.product("TP", repeat=D)]


def reduced_index(label: str | int, D: int) -> int:
    if isinstance(label, (int, np.integer)):
        if 0 <= label <= D:
            return int(label)
        raise GameValidationError(f"reduced strategy index {label} out of range 0..{D}")
    s = str(label).strip().upper()
    if s == "P" * D:
        return D
    if s.endswith("T") and set(s[:-1]) <= {"P"} and len(s) <= D:
        return len(s) - 1
    raise GameValidationError(f"invalid reduced strategy {label!r} for D={D}")


def reduced_label(m: int, D: int) -> str:
    return reduced_labels(D)[reduced_index(m, D)]


def full_index(label: str, D: int) -> int:
    s = str(label).strip().upper()
    if len(s) != D or not set(s) <= {"T", "P"}:
        raise GameValidationError(f"invalid full strategy {label!r} for D={D}")
    # itertools.product("TP") order: T is bit 0, P is bit 1, first node most significant
    return int(s.replace("T", "0").replace("P", "1"), 2)


def reduce_strategy(full: str) -> str:
    """Collapse a full strategy to its outcome-equivalent reduced strategy."""
    s = str(full).strip().upper()
    if not s or not set(s) <= {"T", "P"}:
        raise GameValidationError(f"invalid full strategy {full!r}")
    k = s.find("T")
    return s if k < 0 else s[: k + 1]


def full_class_sizes(D: int) -> np.ndarray:
    """Number of full strategies reducing to each reduced strategy 0..D."""
    return np.array([2.0 ** (D - 1 - m) for m in range(D)] + [1.0])


def full_to_reduced_map(D: int) -> np.ndarray:
    """Reduced index of every full strategy in ``full_labels`` order."""
    return np.array([reduced_index(reduce_strategy(s), D) for s in full_labels(D)])


def take_node(m: int, role: int, D: int) -> int:
    """Node where reduced strategy ``m`` of ``role`` takes (2D+1 if never)."""
    if m >= D:
        return 2 * D + 1
    return 2 * m + 1 if role == 1 else 2 * m + 2


def terminal_node(s1: str | int, s2: str | int, D: int) -> int:
    """Terminal node reached when both players follow reduced strategies."""
    m1, m2 = reduced_index(s1, D), reduced_index(s2, D)
    return min(take_node(m1, 1, D), take_node(m2, 2, D))


def own_node_index(node: int, D: int) -> tuple[int, int]:
    """Map a decision node 1..2D to ``(role, own index m)``."""
    if not 1 <= node <= 2 * D:
        raise GameValidationError(f"decision node {node} out of range 1..{2 * D}")
    return (1, (node - 1) // 2) if node % 2 == 1 else (2, (node - 2) // 2)


def reduced_payoff_matrices(game: CentipedeGame) -> tuple[np.ndarray, np.ndarray]:
    D = game.D
    idx = np.array(
        [[min(take_node(m1, 1, D), take_node(m2, 2, D)) for m2 in range(D + 1)]
         for m1 in range(D + 1)]
    ) - 1
    return game.X[idx], game.Y[idx]


def strategy_payoff_matrix(game: CentipedeGame, form: Form | str) -> tuple[np.ndarray, np.ndarray]:
    """Payoff matrices (Player 1, Player 2) over strategy pairs of ``form``.

    Rows index Player 1's strategies and columns Player 2's, in
    ``reduced_labels`` or ``full_labels`` order.
    """
    form = Form.parse(form)
    if form is Form.DR:
        raise GameValidationError("direct response has no static strategy matrix")
    A, B = reduced_payoff_matrices(game)
    if form is Form.RS:
        return A, B
    r = full_to_reduced_map(game.D)
    return A[np.ix_(r, r)], B[np.ix_(r, r)]

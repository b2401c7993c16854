"""Dataset CSV and game-table JSON readers and writers."""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Mapping

from .estimate import Dataset, DatasetError, Observation
from .games import CentipedeGame, Form, GameSpec, GameValidationError, make_game, experiment_game_specs

COLUMNS = ("session_id", "subject_id", "pair_id", "role", "game_id", "form",
           "record_type", "node", "choice")


class DataFormatError(ValueError):
    """A data or configuration file does not follow its schema."""


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for o in ds.observations:
        w.writerow([o.session_id, o.subject_id, o.pair_id, o.role, o.game_id, o.form.value,
                    o.record_type, "" if o.node is None else o.node, o.choice])
    return buf.getvalue()


def _parse_row(row: dict, line: int) -> Observation:
    try:
        role = int(row["role"])
    except ValueError:
        raise DataFormatError(f"line {line}: role must be 1 or 2, got {row['role']!r}") from None
    try:
        form = Form.parse(row["form"])
    except ValueError as exc:
        raise DataFormatError(f"line {line}: {exc}") from None
    rtype = row["record_type"].strip().lower()
    expected = "node" if form is Form.DR else "strategy"
    if rtype != expected:
        raise DataFormatError(
            f"line {line}: record_type {rtype!r} does not match form {form.value!r}"
        )
    node = None
    if form is Form.DR:
        try:
            node = int(row["node"])
        except ValueError:
            raise DataFormatError(f"line {line}: node must be an integer, got {row['node']!r}") from None
    elif row["node"].strip():
        raise DataFormatError(f"line {line}: strategy rows must leave node empty")
    for key in ("session_id", "subject_id", "pair_id", "game_id", "choice"):
        if not row[key].strip():
            raise DataFormatError(f"line {line}: empty {key}")
    try:
        return Observation(row["session_id"].strip(), row["subject_id"].strip(),
                           row["pair_id"].strip(), role, row["game_id"].strip(), form,
                           row["choice"], node)
    except DatasetError as exc:
        raise DataFormatError(f"line {line}: {exc}") from None


def dataset_from_csv(text: str, games: Mapping[str, CentipedeGame]) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("line 1: empty file, expected a header") from None
    header = [h.strip() for h in header]
    if tuple(header) != COLUMNS:
        raise DataFormatError(f"line 1: header must be {','.join(COLUMNS)}")
    obs = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(COLUMNS):
            raise DataFormatError(f"line {line}: expected {len(COLUMNS)} fields, got {len(row)}")
        o = _parse_row(dict(zip(COLUMNS, row)), line)
        if o.game_id not in games:
            raise DataFormatError(f"line {line}: unknown game {o.game_id!r}")
        obs.append(o)
    if not obs:
        raise DataFormatError("no observations after the header")
    try:
        return Dataset(tuple(obs), games)
    except DatasetError as exc:
        raise DataFormatError(str(exc)) from None


def games_sidecar(path: str | os.PathLike) -> Path:
    return Path(f"{path}.games.json")


def read_games_json(path: str | os.PathLike) -> dict[str, GameSpec]:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return games_from_dict(raw, str(path))


def games_from_dict(raw, where: str = "games") -> dict[str, GameSpec]:
    if not isinstance(raw, dict) or not raw:
        raise DataFormatError(f"{where}: expected a non-empty object mapping game ids to specs")
    out = {}
    for gid, spec in raw.items():
        try:
            out[str(gid)] = GameSpec.from_dict(spec)
        except GameValidationError as exc:
            raise DataFormatError(f"{where}: game {gid!r}: {exc}") from None
    return out


def games_to_json(specs: Mapping[str, GameSpec]) -> str:
    return json.dumps({gid: s.to_dict() for gid, s in specs.items()}, indent=2) + "\n"


def read_dataset(path: str | os.PathLike, games: Mapping[str, GameSpec] | None = None) -> Dataset:
    """Read a dataset CSV.

    Games come from ``games``, else from the sidecar ``<path>.games.json``
    when present, else from the six built-in experimental games.
    """
    path = Path(path)
    text = path.read_text()
    if games is None:
        side = games_sidecar(path)
        games = read_games_json(side) if side.exists() else experiment_game_specs()
    table = {gid: make_game(spec, gid) for gid, spec in games.items()}
    return dataset_from_csv(text, table)


def write_dataset(ds: Dataset, path: str | os.PathLike, specs: Mapping[str, GameSpec]) -> None:
    path = Path(path)
    path.write_text(dataset_to_csv(ds))
    games_sidecar(path).write_text(games_to_json(specs))

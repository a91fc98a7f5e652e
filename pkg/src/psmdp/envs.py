"""Grid-world generators (corridor, splitter) and their conversion to an :class:`Mdp`.

Coordinates are ``(x, y)`` with ``x`` growing east and ``y`` growing south;
row 0 is the top of the map.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field, fields
from os import PathLike
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .model import Mdp, macro_steps

log = logging.getLogger(__name__)

Cell = tuple[int, int]

NORTH, EAST, SOUTH, WEST, NOOP = range(5)
ACTION_NAMES = ("N", "E", "S", "W", "noop")
DIRECTIONS = {NORTH: (0, -1), EAST: (1, 0), SOUTH: (0, 1), WEST: (-1, 0)}

DEFAULT_GAMMA_EXEC = math.sqrt(0.99)
DEFAULT_GAMMA_CHECKIN = 0.99


def _left(d: Cell) -> Cell:
    return (d[1], -d[0])


def _right(d: Cell) -> Cell:
    return (-d[1], d[0])


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    walls: frozenset[Cell]
    start: tuple[tuple[Cell, float], ...]
    goal_cells: frozenset[Cell]
    move_cost: float = 1.0
    noop_cost: float = 0.0
    collision_cost: float = 300_000.0
    goal_reward: float = 10_000.0
    drift_left: float = 0.05
    drift_right: float = 0.05
    gamma_exec: float = DEFAULT_GAMMA_EXEC
    gamma_checkin: float = DEFAULT_GAMMA_CHECKIN

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(map(int, c)) for c in self.walls))
        object.__setattr__(self, "goal_cells", frozenset(tuple(map(int, c)) for c in self.goal_cells))
        object.__setattr__(self, "start", tuple((tuple(map(int, c)), float(p)) for c, p in self.start))
        if self.width < 1 or self.height < 1:
            raise InputError("grid needs positive width and height")
        if self.drift_left < 0 or self.drift_right < 0 or self.drift_left + self.drift_right > 1:
            raise InputError("drift probabilities must be non-negative and sum to at most 1")
        if self.goal_reward < 0:
            raise InputError("goal_reward must be non-negative")
        for name in ("move_cost", "noop_cost", "collision_cost", "goal_reward"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")
        for c in self.walls | self.goal_cells | {c for c, _ in self.start}:
            if not self.in_bounds(c):
                raise InputError(f"cell {c} lies outside the {self.width}x{self.height} grid")
        if not self.goal_cells:
            raise InputError("grid needs at least one goal cell")
        for c in self.goal_cells:
            if c in self.walls:
                raise InputError(f"goal cell {c} is a wall")
        if not self.start:
            raise InputError("grid needs a start distribution")
        for c, p in self.start:
            if c in self.walls:
                raise InputError(f"start cell {c} is a wall")
            if p < 0:
                raise InputError("start probabilities must be non-negative")
        if abs(sum(p for _, p in self.start) - 1.0) > 1e-9:
            raise InputError("start distribution must sum to 1")

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def is_free(self, c: Cell) -> bool:
        return self.in_bounds(c) and c not in self.walls

    def free_cells(self) -> list[Cell]:
        # row-major, so state indices read like the ASCII map
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.walls]

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("walls", "goal_cells"):
                v = [list(c) for c in sorted(v)]
            elif f.name == "start":
                v = [[c[0], c[1], p] for c, p in v]
            out[f.name] = v
        return out

    @classmethod
    def from_json(cls, data: dict) -> "GridSpec":
        try:
            kw = dict(data)
            kw["walls"] = [tuple(c) for c in kw.get("walls", [])]
            kw["goal_cells"] = [tuple(c) for c in kw["goal_cells"]]
            kw["start"] = [((int(x), int(y)), float(p)) for x, y, p in kw["start"]]
            known = {f.name for f in fields(cls)}
            unknown = set(kw) - known
            if unknown:
                raise InputError(f"unknown grid fields: {sorted(unknown)}")
            return cls(**kw)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed grid JSON: {exc}") from exc

    @classmethod
    def load(cls, path: str | PathLike) -> "GridSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True, eq=False)
class GridWorld:
    spec: GridSpec
    mdp: Mdp
    cells: tuple[Cell, ...]
    index: dict = field(repr=False)

    @property
    def initial(self) -> np.ndarray:
        d = np.zeros(len(self.cells))
        for c, p in self.spec.start:
            d[self.index[c]] += p
        return d

    def state_of(self, cell: Cell) -> int:
        try:
            return self.index[tuple(cell)]
        except KeyError:
            raise InputError(f"cell {cell} is not a free cell") from None

    @property
    def start_state(self) -> int:
        return self.state_of(max(self.spec.start, key=lambda cp: cp[1])[0])


def _move_outcomes(spec: GridSpec, cell: Cell, d: Cell) -> tuple[list[tuple[Cell, float]], bool]:
    target = (cell[0] + d[0], cell[1] + d[1])
    if not spec.is_free(target):
        return [(cell, 1.0)], True
    out = {}
    p_stay = 1.0
    for drift, p in ((_left(d), spec.drift_left), (_right(d), spec.drift_right)):
        if p <= 0:
            continue
        shifted = (target[0] + drift[0], target[1] + drift[1])
        if spec.is_free(shifted):
            out[shifted] = out.get(shifted, 0.0) + p
            p_stay -= p
    out[target] = out.get(target, 0.0) + p_stay
    return sorted(out.items()), False


def grid_to_mdp(spec: GridSpec) -> Mdp:
    return build_world(spec).mdp


def build_world(spec: GridSpec) -> GridWorld:
    cells = spec.free_cells()
    index = {c: i for i, c in enumerate(cells)}
    S, A = len(cells), len(ACTION_NAMES)
    rows, cols, vals = [], [], []
    cost = np.zeros((S, A))
    goal = {index[c] for c in spec.goal_cells}
    for s, cell in enumerate(cells):
        for a in range(A):
            r = a * S + s
            if s in goal:
                rows.append(r), cols.append(s), vals.append(1.0)
                continue
            if a == NOOP:
                rows.append(r), cols.append(s), vals.append(1.0)
                cost[s, a] = spec.noop_cost
                continue
            outcomes, blocked = _move_outcomes(spec, cell, DIRECTIONS[a])
            c = spec.move_cost + (spec.collision_cost if blocked else 0.0)
            for nxt, p in outcomes:
                rows.append(r), cols.append(index[nxt]), vals.append(p)
                if nxt in spec.goal_cells:
                    c -= spec.goal_reward * p
            cost[s, a] = c
    T = sp.csr_matrix((vals, (rows, cols)), shape=(A * S, S))
    mdp = Mdp(S, A, T, cost, frozenset(goal), spec.gamma_exec, spec.gamma_checkin)
    if not _reachable(spec, [c for c, p in spec.start if p > 0]):
        log.warning("no path from the start cells to a goal cell")
    return GridWorld(spec, mdp, tuple(cells), index)


def _reachable(spec: GridSpec, starts: Iterable[Cell]) -> bool:
    seen = set(starts)
    queue = deque(seen)
    while queue:
        c = queue.popleft()
        if c in spec.goal_cells:
            return True
        for d in DIRECTIONS.values():
            n = (c[0] + d[0], c[1] + d[1])
            if spec.is_free(n) and n not in seen:
                seen.add(n)
                queue.append(n)
    return False


def render_ascii(spec: GridSpec) -> str:
    start = {c for c, p in spec.start if p > 0}
    lines = []
    for y in range(spec.height):
        row = []
        for x in range(spec.width):
            c = (x, y)
            if c in spec.walls:
                row.append("#")
            elif c in spec.goal_cells:
                row.append("G")
            elif c in start:
                row.append("S")
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def corridor_world(cadences: Sequence[int] = (2, 2, 3, 3), height: int = 5,
                   gap_row: int | None = None, width: int | None = None,
                   start_cell: Cell | None = None, goal_cell: Cell | None = None,
                   **params) -> GridSpec:
    """Corridor with one wall column after every check-in spot.

    Spots sit at ``x = 0, c0, c0+c1, ...``; a wall column with a single gap at
    ``gap_row`` stands one cell east of every intermediate spot, so consecutive
    wall columns are exactly one cadence apart.  The goal is the last spot.
    """
    cadences = [int(c) for c in cadences]
    if not cadences:
        raise InputError("need at least one cadence")
    if any(c < 2 for c in cadences):
        raise InputError("cadences must be >= 2")
    if height < 2:
        raise InputError("corridor height must be >= 2 so walls can have a gap")
    gap_row = height // 2 if gap_row is None else int(gap_row)
    if not 0 <= gap_row < height:
        raise InputError(f"gap_row {gap_row} outside [0, {height})")
    spots = np.cumsum([0] + cadences).tolist()
    length = spots[-1] + 1
    width = length if width is None else int(width)
    if width < length:
        raise InputError(f"cadences need width >= {length}")
    walls = {(x + 1, y) for x in spots[1:-1] for y in range(height) if y != gap_row}
    start_cell = (0, gap_row) if start_cell is None else tuple(start_cell)
    goal_cell = (spots[-1], gap_row) if goal_cell is None else tuple(goal_cell)
    spec = GridSpec(width, height, frozenset(walls), ((start_cell, 1.0),),
                    frozenset({goal_cell}), **params)
    if not _reachable(spec, [start_cell]):
        raise InputError("corridor geometry leaves no path from start to goal")
    return spec


def splitter_world(width: int = 13, height: int = 20, west_cadence: int = 2,
                   east_cadence: int = 3, west_slots: Sequence[int] | None = (1, 2, 6, 7),
                   east_slots: Sequence[int] | None = None, **params) -> GridSpec:
    """Two vertical lanes split by a full-height centre wall.

    The agent starts in the only opening of the centre wall (bottom row) and
    must commit to one side.  After one lateral step the agent walks north, so
    on a side with cadence ``c`` wall slot ``j`` is the row directly above the
    cell reached after ``c*j`` steps; each wall row has one gap next to the
    centre wall.  ``west_slots``/``east_slots`` pick which slots carry a wall
    (``None`` = every slot that fits).  The default west lane has two bands of
    cadence-2 rows separated by open rows; the east lane is fully cadence-3.
    The whole top row is the goal.
    """
    if width < 5 or width % 2 == 0:
        raise InputError("splitter width must be odd and >= 5")
    if height < 4:
        raise InputError("splitter height must be >= 4")
    if west_cadence < 2 or east_cadence < 2:
        raise InputError("cadences must be >= 2")
    cx = width // 2
    start_row = height - 1
    walls = {(cx, y) for y in range(height) if y != start_row}
    for cadence, slots, xs, gap_x in ((west_cadence, west_slots, range(0, cx), cx - 1),
                                      (east_cadence, east_slots, range(cx + 1, width), cx + 1)):
        fits = [j for j in range(1, height) if height - cadence * j - 1 >= 1]
        if slots is None:
            slots = fits
        for j in slots:
            if j not in fits:
                raise InputError(f"wall slot {j} does not fit a height-{height} splitter")
            walls |= {(x, height - cadence * j - 1) for x in xs if x != gap_x}
    goal = {(x, 0) for x in range(width) if x != cx}
    spec = GridSpec(width, height, frozenset(walls), (((cx, start_row), 1.0),),
                    frozenset(goal), **params)
    if not _reachable(spec, [(cx, start_row)]):
        raise InputError("splitter geometry leaves no path from start to goal")
    return spec


def first_heading(world: GridWorld, layer, stride: int) -> str | None:
    """``"E"`` or ``"W"`` for the first lateral step the layer's macro takes at the start cell."""
    m = int(layer[world.start_state])
    for a in macro_steps(m, stride, world.mdp.n_actions):
        if a in (EAST, WEST):
            return ACTION_NAMES[a]
    return None

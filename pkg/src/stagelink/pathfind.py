"""Grid path planning for procedurally driven avatars.

Four-connected cells with unit step cost keep the planner trivially
checkable against breadth-first search. plan() is A* with a Manhattan
heuristic and a fixed neighbor expansion order (by row, then column), so
repeated calls give byte-identical paths. follow() walks the resulting
polyline at constant speed.

Grid files are plain text: a header line

    cols rows cell_size origin_x origin_y origin_z

followed by `rows` lines of '.' (free) and '#' (blocked). Row 0 is the
first map line; cell (0,0) sits at the origin.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .pose import Vec3


class OutOfBounds(ValueError):
    pass


class BlockedEndpoint(ValueError):
    pass


class NoPath(ValueError):
    pass


class GridParseError(ValueError):
    pass


Cell = tuple[int, int]


@dataclass(frozen=True)
class NavGrid:
    width: int
    height: int
    cell_size: float
    blocked: frozenset[Cell]
    origin: Vec3

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("grid needs at least one cell")
        if self.cell_size <= 0:
            raise ValueError("cell size must be positive")

    def in_bounds(self, cell: Cell) -> bool:
        c, r = cell
        return 0 <= c < self.width and 0 <= r < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def cell_center(self, cell: Cell) -> Vec3:
        c, r = cell
        return Vec3(
            self.origin.x + c * self.cell_size,
            self.origin.y,
            self.origin.z + r * self.cell_size,
        )

    def nearest_cell(self, p: Vec3) -> Cell:
        c = round((p.x - self.origin.x) / self.cell_size)
        r = round((p.z - self.origin.z) / self.cell_size)
        return (min(max(c, 0), self.width - 1), min(max(r, 0), self.height - 1))

    def to_text(self) -> str:
        lines = [
            f"{self.width} {self.height} {self.cell_size!r} "
            f"{self.origin.x!r} {self.origin.y!r} {self.origin.z!r}"
        ]
        for r in range(self.height):
            lines.append("".join("#" if (c, r) in self.blocked else "." for c in range(self.width)))
        return "\n".join(lines) + "\n"


def parse_grid(text: str) -> NavGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise GridParseError("empty grid file")
    head = lines[0].split()
    if len(head) != 6:
        raise GridParseError("header must be: cols rows cell_size origin_x origin_y origin_z")
    try:
        cols, rows = int(head[0]), int(head[1])
        cell_size = float(head[2])
        origin = Vec3(float(head[3]), float(head[4]), float(head[5]))
    except ValueError as exc:
        raise GridParseError(f"bad header: {exc}") from None
    if len(lines) - 1 != rows:
        raise GridParseError(f"expected {rows} map rows, found {len(lines) - 1}")
    blocked = set()
    for r, row in enumerate(lines[1:]):
        if len(row) != cols:
            raise GridParseError(f"row {r} has {len(row)} cells, expected {cols}")
        for c, ch in enumerate(row):
            if ch == "#":
                blocked.add((c, r))
            elif ch != ".":
                raise GridParseError(f"row {r}: unexpected character {ch!r}")
    return NavGrid(cols, rows, cell_size, frozenset(blocked), origin)


def load_grid(path) -> NavGrid:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_grid(fh.read())


@dataclass(frozen=True)
class PlannedPath:
    """Cell-center polyline; consecutive waypoints are 4-neighbors."""

    cells: tuple[Cell, ...]
    waypoints: tuple[Vec3, ...]
    total_length: float


def _neighbors(cell: Cell) -> tuple[Cell, Cell, Cell, Cell]:
    c, r = cell
    # Already in (row, col) order: up, left, right, down.
    return ((c, r - 1), (c - 1, r), (c + 1, r), (c, r + 1))


def plan(grid: NavGrid, start: Cell, goal: Cell) -> PlannedPath:
    """Shortest 4-connected path by cell count (A*, Manhattan heuristic)."""
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.in_bounds(cell):
            raise OutOfBounds(f"{name} cell {cell} outside {grid.width}x{grid.height}")
        if cell in grid.blocked:
            raise BlockedEndpoint(f"{name} cell {cell} is blocked")

    def h(cell: Cell) -> int:
        return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])

    counter = 0
    open_heap: list[tuple[int, int, Cell]] = [(h(start), counter, start)]
    came_from: dict[Cell, Cell] = {}
    g_score: dict[Cell, int] = {start: 0}
    closed: set[Cell] = set()

    while open_heap:
        _, _, current = heapq.heappop(open_heap)
        if current == goal:
            cells = [current]
            while current in came_from:
                current = came_from[current]
                cells.append(current)
            cells.reverse()
            waypoints = tuple(grid.cell_center(c) for c in cells)
            return PlannedPath(tuple(cells), waypoints, (len(cells) - 1) * grid.cell_size)
        if current in closed:
            continue
        closed.add(current)
        g = g_score[current]
        for nb in _neighbors(current):
            if not grid.is_free(nb) or nb in closed:
                continue
            tentative = g + 1
            if tentative < g_score.get(nb, 1 << 60):
                g_score[nb] = tentative
                came_from[nb] = current
                counter += 1
                heapq.heappush(open_heap, (tentative + h(nb), counter, nb))

    raise NoPath(f"no route from {start} to {goal}")


def segment_yaw(a: Vec3, b: Vec3) -> float:
    return math.atan2(b.x - a.x, b.z - a.z)


def follow(path: PlannedPath, speed: float, t: float) -> tuple[Vec3, float, bool]:
    """Position along the path after walking for t seconds at constant
    speed, the yaw of the segment being walked, and whether the end was
    reached. Past the end the final waypoint and last segment yaw hold."""
    if speed <= 0:
        raise ValueError("speed must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    points = path.waypoints
    if len(points) == 1:
        return points[0], 0.0, True
    dist = min(speed * t, path.total_length)
    done = speed * t >= path.total_length
    remaining = dist
    for a, b in zip(points, points[1:]):
        seg = b.sub(a)
        seg_len = seg.norm()
        if remaining <= seg_len:
            if seg_len == 0.0:
                return a, segment_yaw(a, b), done
            f = remaining / seg_len
            return a.add(seg.scale(f)), segment_yaw(a, b), done
        remaining -= seg_len
    return points[-1], segment_yaw(points[-2], points[-1]), True

"""Geometry of the localization world: area bounds, sensing units, transmitter track."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

# Published anchor: SU 0 sits at x = 8.39 m in an 86.3 m corridor.
SU_MARGIN_FRACTION = 8.39 / 86.3
WALL_OFFSET = 0.3


class ScenarioError(ValueError):
    """Invalid scenario/track arguments or a malformed scenario file."""


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, values: Sequence[float], name: str = "point") -> "Point3":
        if len(values) != 3:
            raise ScenarioError(f"{name}: expected 3 coordinates, got {len(values)}")
        try:
            p = cls(*(float(v) for v in values))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{name}: non-numeric coordinate") from exc
        if not all(math.isfinite(c) for c in p):
            raise ScenarioError(f"{name}: coordinates must be finite")
        return p


def _inside(p: Point3, lo: Point3, hi: Point3) -> bool:
    return all(a <= c <= b for a, c, b in zip(lo, p, hi))


@dataclass(frozen=True)
class Scenario:
    area_min: Point3
    area_max: Point3
    sensing_units: tuple[Point3, ...]
    tx_height: float = 0.5
    d0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "area_min", Point3.of(self.area_min, "area_min"))
        object.__setattr__(self, "area_max", Point3.of(self.area_max, "area_max"))
        sus = tuple(
            Point3.of(v, f"sensing_units[{j}]") for j, v in enumerate(self.sensing_units)
        )
        object.__setattr__(self, "sensing_units", sus)
        if not sus:
            raise ScenarioError("sensing_units: at least one sensing unit is required")
        lo, hi = self.area_min, self.area_max
        if not (lo.x < hi.x and lo.y < hi.y):
            raise ScenarioError("area_min/area_max: need area_min < area_max in x and y")
        if lo.z > hi.z:
            raise ScenarioError("area_min/area_max: need area_min.z <= area_max.z")
        for j, v in enumerate(sus):
            if not _inside(v, lo, hi):
                raise ScenarioError(f"sensing_units[{j}]: {tuple(v)} lies outside the area bounds")
        if not (math.isfinite(self.d0) and self.d0 > 0):
            raise ScenarioError("d0: reference distance must be > 0")
        if not math.isfinite(self.tx_height):
            raise ScenarioError("tx_height: must be finite")

    @property
    def n_su(self) -> int:
        return len(self.sensing_units)

    def contains(self, p: Sequence[float]) -> bool:
        return _inside(Point3(*p), self.area_min, self.area_max)

    def to_dict(self) -> dict:
        return {
            "area_min": list(self.area_min),
            "area_max": list(self.area_max),
            "d0": self.d0,
            "tx_height": self.tx_height,
            "sensing_units": [list(v) for v in self.sensing_units],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        for key in ("area_min", "area_max", "sensing_units"):
            if key not in d:
                raise ScenarioError(f"{key}: missing field")
        if not isinstance(d["sensing_units"], list):
            raise ScenarioError("sensing_units: expected a list of [x, y, z]")
        kwargs = {}
        for key in ("d0", "tx_height"):
            if key in d:
                try:
                    kwargs[key] = float(d[key])
                except (TypeError, ValueError) as exc:
                    raise ScenarioError(f"{key}: expected a number") from exc
        return cls(
            area_min=d["area_min"],
            area_max=d["area_max"],
            sensing_units=tuple(d["sensing_units"]),
            **kwargs,
        )


@dataclass(frozen=True)
class Track:
    """Ordered transmitter positions; ``round_ids`` tags each point with its lane/round."""

    points: tuple[Point3, ...]
    round_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        pts = tuple(Point3.of(p, f"points[{k}]") for k, p in enumerate(self.points))
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ScenarioError("track: needs at least one point")
        ids = tuple(int(r) for r in self.round_ids) if self.round_ids else (0,) * len(pts)
        if len(ids) != len(pts):
            raise ScenarioError("track: round_ids length differs from points length")
        object.__setattr__(self, "round_ids", ids)

    def __len__(self):
        return len(self.points)

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points], "round_ids": list(self.round_ids)}


def make_corridor_scenario(
    n_su: int = 6,
    length: float = 86.3,
    width: float = 2.8,
    su_height: float = 2.5,
    tx_height: float = 0.5,
    d0: float = 1.0,
) -> Scenario:
    """Corridor with ``n_su`` wall-mounted sensing units.

    SUs alternate between the walls y = 0.3 and y = width - 0.3 (SU 0 on the
    first). In x they are evenly spaced between a margin of
    ``SU_MARGIN_FRACTION * length`` at either end, so that the 6-SU, 86.3 m
    configuration puts SU 0 at (8.39, 0.3). A single SU sits at the margin.
    """
    if n_su < 1:
        raise ScenarioError("n_su must be >= 1")
    if not (length > 0 and width > 0):
        raise ScenarioError("length and width must be > 0")
    if su_height < 0 or tx_height < 0:
        raise ScenarioError("heights must be >= 0")
    offset = min(WALL_OFFSET, width / 2)
    margin = SU_MARGIN_FRACTION * length
    spacing = (length - 2 * margin) / (n_su - 1) if n_su > 1 else 0.0
    sus = []
    for j in range(n_su):
        y = offset if j % 2 == 0 else width - offset
        sus.append(Point3(margin + j * spacing, y, su_height))
    return Scenario(
        area_min=Point3(0.0, 0.0, 0.0),
        area_max=Point3(length, width, max(su_height, tx_height)),
        sensing_units=tuple(sus),
        tx_height=tx_height,
        d0=d0,
    )


def make_track(
    scenario: Scenario,
    x_start: float,
    x_end: float,
    step: float,
    y_lanes: Sequence[float],
    dedup_turnaround: bool = True,
) -> Track:
    """Out-and-back transmitter track, one round per lane.

    Forward points are ``x_start + k*step`` for every k with the point not
    beyond ``x_end``; the return leg walks them in reverse. With
    ``dedup_turnaround`` the point at the far end is visited once per round
    (2n - 1 points), otherwise twice (2n points).
    """
    if not y_lanes:
        raise ScenarioError("y_lanes: at least one lane is required")
    if not step > 0:
        raise ScenarioError("step must be > 0")
    if x_end < x_start:
        raise ScenarioError("x_end must be >= x_start")
    lo, hi = scenario.area_min, scenario.area_max
    if not (lo.x <= x_start <= hi.x and lo.x <= x_end <= hi.x):
        raise ScenarioError("x_start/x_end must lie within the area")
    z = scenario.tx_height
    if not lo.z <= z <= hi.z:
        raise ScenarioError("tx_height lies outside the area's z range")
    n = int(math.floor((x_end - x_start) / step + 1e-9)) + 1
    forward = [min(x_start + k * step, x_end) for k in range(n)]
    back = forward[-2::-1] if dedup_turnaround else forward[::-1]
    xs = forward + back

    points, ids = [], []
    for r, y in enumerate(y_lanes):
        if not lo.y <= y <= hi.y:
            raise ScenarioError(f"y_lanes[{r}] = {y} lies outside the area")
        points.extend(Point3(x, float(y), z) for x in xs)
        ids.extend([r] * len(xs))
    return Track(points=tuple(points), round_ids=tuple(ids))


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ScenarioError(f"{path}: expected a JSON object")
    return Scenario.from_dict(d)


def load_track(path, scenario: Scenario) -> Track:
    """Read a track file: explicit ``points`` or generator arguments for :func:`make_track`."""
    d = json.loads(Path(path).read_text())
    if "points" in d:
        track = Track(points=tuple(d["points"]), round_ids=tuple(d.get("round_ids", ())))
        for k, p in enumerate(track.points):
            if not scenario.contains(p):
                raise ScenarioError(f"points[{k}]: {tuple(p)} lies outside the area")
        return track
    try:
        return make_track(
            scenario,
            float(d["x_start"]),
            float(d["x_end"]),
            float(d["step"]),
            [float(y) for y in d["y_lanes"]],
            dedup_turnaround=bool(d.get("dedup_turnaround", True)),
        )
    except KeyError as exc:
        raise ScenarioError(f"{path}: missing field {exc.args[0]}") from exc


def save_track(track: Track, path) -> None:
    Path(path).write_text(json.dumps(track.to_dict()) + "\n")

"""Taxi with fuel and traffic on the classic 5x5 map.

State ids pack ``(row, col, fuel, passenger_in_taxi)`` as
``((row * 5 + col) * 21 + fuel) * 2 + passenger_in_taxi``.  Fuel 0 states
are absorbing: fuel only reaches 0 on a failed final move.

Every transition falls in exactly one event class, checked in the order
failure, dropoff, pickup, refuel, traffic, move.  Transitions out of a
terminal state are labelled ``terminated``.
"""

from __future__ import annotations

import functools
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from tpd.errors import ClassificationError, ConfigError
from tpd.mdp import EVENT_INDICATOR, OutcomeSpec, TabularMdp

CLASSIC_MAP = (
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
)
CORNERS = {"R": (0, 0), "G": (0, 4), "Y": (4, 0), "B": (4, 3)}

SOUTH, NORTH, EAST, WEST, PICKUP, DROPOFF, REFUEL = range(7)
ACTION_NAMES = ("south", "north", "east", "west", "pickup", "dropoff", "refuel")
MOVES = {SOUTH: (1, 0), NORTH: (-1, 0), EAST: (0, 1), WEST: (0, -1)}

EVENTS = ("failure", "dropoff", "pickup", "refuel", "traffic", "move")
TERMINATED = "terminated"
EVENT_REWARDS = {
    "failure": -100.0,
    "dropoff": 20.0,
    "pickup": 10.0,
    "refuel": -1.0,
    "traffic": -1.0,
    "move": -1.0,
    TERMINATED: 0.0,
}


class TaxiState(NamedTuple):
    row: int
    col: int
    fuel: int
    passenger_in_taxi: bool


@dataclass(frozen=True)
class TaxiConfig:
    passenger_corner: tuple[int, int] = CORNERS["Y"]
    destination_corner: tuple[int, int] = CORNERS["R"]
    gas_station_corner: tuple[int, int] = CORNERS["B"]
    traffic_probability: float = 0.1
    fuel_capacity: int = 20
    refuel_increment: int = 2
    move_fuel_cost: int = 1
    # None means uniform over fuel 1..capacity / over all cells
    initial_fuel_weights: tuple[float, ...] | None = None
    initial_cell_weights: tuple[tuple[float, ...], ...] | None = None
    walls: tuple[str, ...] = CLASSIC_MAP
    max_episode_steps: int = 200
    discount: float = 0.99

    def __post_init__(self):
        for name in ("passenger_corner", "destination_corner", "gas_station_corner"):
            object.__setattr__(self, name, tuple(int(x) for x in getattr(self, name)))
        object.__setattr__(self, "walls", tuple(self.walls))
        if self.initial_fuel_weights is not None:
            object.__setattr__(self, "initial_fuel_weights",
                               tuple(float(w) for w in self.initial_fuel_weights))
        if self.initial_cell_weights is not None:
            object.__setattr__(self, "initial_cell_weights",
                               tuple(tuple(float(w) for w in row) for row in self.initial_cell_weights))
        self.validate()

    @property
    def rows(self) -> int:
        return len(self.walls) - 2

    @property
    def cols(self) -> int:
        return (len(self.walls[0]) - 1) // 2

    @property
    def num_states(self) -> int:
        return self.rows * self.cols * (self.fuel_capacity + 1) * 2

    def validate(self) -> None:
        corners = {self.passenger_corner, self.destination_corner, self.gas_station_corner}
        if len(corners) != 3:
            raise ConfigError("passenger, destination and gas station cells must be distinct")
        if len(self.walls) < 3 or any(len(line) != len(self.walls[0]) for line in self.walls):
            raise ConfigError("wall map must be a rectangle of equal-length lines")
        for cell in corners:
            if not (0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols):
                raise ConfigError(f"cell {cell} is outside the {self.rows}x{self.cols} grid")
        if not 0.0 <= self.traffic_probability < 1.0:
            raise ConfigError("traffic_probability must lie in [0, 1)")
        if self.fuel_capacity < 1 or self.refuel_increment < 1 or self.move_fuel_cost < 1:
            raise ConfigError("fuel capacity, refuel increment and move cost must be positive")
        if self.initial_fuel_weights is not None:
            w = np.asarray(self.initial_fuel_weights)
            if w.shape != (self.fuel_capacity,) or np.any(w < 0) or w.sum() <= 0:
                raise ConfigError("initial_fuel_weights needs one nonnegative weight per fuel 1..capacity")
        if self.initial_cell_weights is not None:
            w = np.asarray(self.initial_cell_weights)
            if w.shape != (self.rows, self.cols) or np.any(w < 0) or w.sum() <= 0:
                raise ConfigError("initial_cell_weights must be a nonnegative rows x cols grid")
        if self.max_episode_steps < 1:
            raise ConfigError("max_episode_steps must be positive")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("discount must lie in (0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "TaxiConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown taxi config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "TaxiConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = json.loads(json.dumps(value))
        return data


DEFAULT_CONFIG = TaxiConfig()


def encode_state(ts: TaxiState | Sequence, config: TaxiConfig = DEFAULT_CONFIG) -> int:
    row, col, fuel, passenger = ts
    if not (0 <= row < config.rows and 0 <= col < config.cols
            and 0 <= fuel <= config.fuel_capacity and passenger in (0, 1, True, False)):
        raise ConfigError(f"taxi state {tuple(ts)} is out of range")
    return ((int(row) * config.cols + int(col)) * (config.fuel_capacity + 1) + int(fuel)) * 2 + int(passenger)


def decode_state(state: int, config: TaxiConfig = DEFAULT_CONFIG) -> TaxiState:
    if not 0 <= state < config.num_states:
        raise ConfigError(f"state id {state} is out of range [0, {config.num_states})")
    state, passenger = divmod(int(state), 2)
    cell, fuel = divmod(state, config.fuel_capacity + 1)
    row, col = divmod(cell, config.cols)
    return TaxiState(row, col, fuel, bool(passenger))


def move_target(row: int, col: int, action: int, config: TaxiConfig = DEFAULT_CONFIG):
    """Cell reached by a successful move, or None if a wall or the border is in the way."""
    dr, dc = MOVES[action]
    r, c = row + dr, col + dc
    if not (0 <= r < config.rows and 0 <= c < config.cols):
        return None
    if dc:
        # the character between two horizontally adjacent cells
        sep = config.walls[1 + row][2 * min(col, c) + 2]
        if sep == "|":
            return None
    return r, c


def action_mask(ts: TaxiState, config: TaxiConfig = DEFAULT_CONFIG) -> np.ndarray:
    mask = np.zeros(len(ACTION_NAMES), dtype=bool)
    if ts.fuel == 0:
        mask[:] = True
        return mask
    cell = (ts.row, ts.col)
    for a in MOVES:
        mask[a] = move_target(ts.row, ts.col, a, config) is not None
    mask[PICKUP] = cell == config.passenger_corner and not ts.passenger_in_taxi
    mask[DROPOFF] = cell == config.destination_corner and ts.passenger_in_taxi
    mask[REFUEL] = cell == config.gas_station_corner and ts.fuel < config.fuel_capacity
    return mask


def build_taxi_mdp(config: TaxiConfig = DEFAULT_CONFIG, *, register_events: bool = True) -> TabularMdp:
    """Tabular model of the fuel-and-traffic taxi.

    With ``register_events`` the six event indicators are registered as
    outcomes, in the order of ``EVENTS``.
    """
    S, A = config.num_states, len(ACTION_NAMES)
    ns = np.zeros((S, A, 2), dtype=np.int64)
    p = np.zeros((S, A, 2))
    r = np.zeros((S, A, 2))
    done = np.zeros((S, A, 2), dtype=bool)
    valid = np.zeros((S, A), dtype=bool)
    terminal = np.zeros(S, dtype=bool)
    pt = config.traffic_probability

    for s in range(S):
        ts = decode_state(s, config)
        if ts.fuel == 0:
            terminal[s] = True
            continue
        valid[s] = action_mask(ts, config)
        for a in np.flatnonzero(valid[s]):
            if a in MOVES:
                fuel = max(ts.fuel - config.move_fuel_cost, 0)
                target = move_target(ts.row, ts.col, a, config)
                moved = encode_state((*target, fuel, ts.passenger_in_taxi), config)
                stuck = encode_state((ts.row, ts.col, fuel, ts.passenger_in_taxi), config)
                reward = EVENT_REWARDS["failure"] if fuel == 0 else -1.0
                ns[s, a] = moved, stuck
                p[s, a] = 1.0 - pt, pt
                r[s, a] = reward
                done[s, a] = fuel == 0
            elif a == PICKUP:
                ns[s, a, 0] = encode_state(ts._replace(passenger_in_taxi=True), config)
                p[s, a, 0] = 1.0
                r[s, a, 0] = 10.0
            elif a == DROPOFF:
                # the episode ends; the landing state is ordinary but never bootstrapped
                ns[s, a, 0] = encode_state(ts._replace(passenger_in_taxi=False), config)
                p[s, a, 0] = 1.0
                r[s, a, 0] = 20.0
                done[s, a, 0] = True
            elif a == REFUEL:
                fuel = min(ts.fuel + config.refuel_increment, config.fuel_capacity)
                ns[s, a, 0] = encode_state(ts._replace(fuel=fuel), config)
                p[s, a, 0] = 1.0
                r[s, a, 0] = -1.0

    outcomes = event_outcomes(config) if register_events else ()
    return TabularMdp(
        ns, p, r, done, valid, terminal, initial_distribution(config),
        discount=config.discount, outcomes=outcomes, action_names=ACTION_NAMES,
        max_episode_steps=config.max_episode_steps,
    )


def initial_distribution(config: TaxiConfig = DEFAULT_CONFIG) -> np.ndarray:
    fuel_w = (np.ones(config.fuel_capacity) if config.initial_fuel_weights is None
              else np.asarray(config.initial_fuel_weights))
    cell_w = (np.ones((config.rows, config.cols)) if config.initial_cell_weights is None
              else np.asarray(config.initial_cell_weights))
    init = np.zeros(config.num_states)
    for row in range(config.rows):
        for col in range(config.cols):
            for fuel in range(1, config.fuel_capacity + 1):
                s = encode_state((row, col, fuel, False), config)
                init[s] = cell_w[row, col] * fuel_w[fuel - 1]
    return init / init.sum()


def classify_event(s: int, a: int, s_next: int, config: TaxiConfig = DEFAULT_CONFIG) -> str:
    """Event label of the transition ``(s, a, s_next)``."""
    return _classifier(config)(int(s), int(a), int(s_next))


@functools.lru_cache(maxsize=8)
def _classifier(config: TaxiConfig):
    @functools.lru_cache(maxsize=None)
    def classify(s: int, a: int, s_next: int) -> str:
        ts, tn = decode_state(s, config), decode_state(s_next, config)
        if ts.fuel == 0:
            if s_next != s:
                raise ClassificationError(f"terminal state {s} only loops to itself")
            return TERMINATED
        if not action_mask(ts, config)[a]:
            raise ClassificationError(f"action {ACTION_NAMES[a]} is masked in state {s}")
        if a in MOVES:
            fuel = max(ts.fuel - config.move_fuel_cost, 0)
            target = move_target(ts.row, ts.col, a, config)
            if tn.fuel != fuel or tn.passenger_in_taxi != ts.passenger_in_taxi:
                raise ClassificationError(f"unsupported transition {s} -{a}-> {s_next}")
            if (tn.row, tn.col) == target:
                return "failure" if fuel == 0 else "move"
            if (tn.row, tn.col) == (ts.row, ts.col) and config.traffic_probability > 0:
                return "failure" if fuel == 0 else "traffic"
            raise ClassificationError(f"unsupported transition {s} -{a}-> {s_next}")
        expected = {
            PICKUP: ts._replace(passenger_in_taxi=True),
            DROPOFF: ts._replace(passenger_in_taxi=False),
            REFUEL: ts._replace(fuel=min(ts.fuel + config.refuel_increment, config.fuel_capacity)),
        }[a]
        if tn != expected:
            raise ClassificationError(f"unsupported transition {s} -{a}-> {s_next}")
        return ACTION_NAMES[a]

    return classify


def event_outcomes(config: TaxiConfig = DEFAULT_CONFIG, names: Sequence[str] = EVENTS) -> list[OutcomeSpec]:
    specs = []
    for name in names:
        if name not in EVENTS:
            raise ConfigError(f"unknown event {name!r}; valid events: {list(EVENTS)}")
        specs.append(OutcomeSpec(
            name=name,
            evaluate=functools.partial(_indicator, config, name),
            kind=EVENT_INDICATOR,
            reward=EVENT_REWARDS[name],
        ))
    return specs


def _indicator(config: TaxiConfig, name: str, s: int, a: int, s_next: int) -> float:
    return float(classify_event(s, a, s_next, config) == name)


def render(state: int, config: TaxiConfig = DEFAULT_CONFIG) -> str:
    """ASCII picture of a state: ``T`` is the taxi (``@`` with the passenger aboard),
    ``P`` the waiting passenger, ``D`` the destination and ``F`` the gas station."""
    ts = decode_state(state, config)
    grid = [list(line) for line in config.walls]
    marks = {config.destination_corner: "D", config.gas_station_corner: "F"}
    if not ts.passenger_in_taxi:
        marks[config.passenger_corner] = "P"
    for (row, col), ch in marks.items():
        grid[1 + row][2 * col + 1] = ch
    grid[1 + ts.row][2 * ts.col + 1] = "@" if ts.passenger_in_taxi else "T"
    lines = ["".join(line) for line in grid]
    status = "aboard" if ts.passenger_in_taxi else "waiting"
    lines.append(f"fuel {ts.fuel}/{config.fuel_capacity}  passenger {status}"
                 + ("  [terminal]" if ts.fuel == 0 else ""))
    return "\n".join(lines)

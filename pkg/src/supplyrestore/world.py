"""Ground-truth simulator: hidden state, stochastic switching, protection, sensing."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .topology import DeviceKind, NetworkTopology, Position, TopologyError, energize


class Mode(str, Enum):
    CORRECT = "correct"
    LIAR = "liar"
    BROKEN = "broken"


class Notification(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NONE = "none"


class FDReading(str, Enum):
    FAULT = "fault_downstream"
    NO_FAULT = "no_fault"
    NO_INFO = "no_info"


class PDReading(str, Enum):
    OPEN = "open"
    CLOSED = "closed"
    NO_INFO = "no_info"


@dataclass(frozen=True)
class SwitchOp:
    device: str
    direction: Position  # target position

    def __str__(self) -> str:
        verb = "open" if self.direction is Position.OPEN else "close"
        return f"{verb} {self.device}"


@dataclass(frozen=True)
class Observation:
    notification: Notification
    device: str | None
    pd_reading: PDReading
    cb_positions: Mapping[str, Position]
    fd_readings: Mapping[str, FDReading]
    # breakers opened by protection during the transition; trips are always seen
    tripped: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "notification": self.notification.value,
            "device": self.device,
            "pd_reading": self.pd_reading.value,
            "cb_positions": {k: v.value for k, v in sorted(self.cb_positions.items())},
            "fd_readings": {k: v.value for k, v in sorted(self.fd_readings.items())},
            "tripped": list(self.tripped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(
            Notification(d["notification"]),
            d["device"],
            PDReading(d["pd_reading"]),
            {k: Position(v) for k, v in d["cb_positions"].items()},
            {k: FDReading(v) for k, v in d["fd_readings"].items()},
            tuple(d.get("tripped", ())),
        )


@dataclass(frozen=True)
class StochasticConfig:
    p_ac_to_liar: float = 0.0
    p_ac_to_broken: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.p_ac_to_liar, self.p_ac_to_broken) < 0 or (
            self.p_ac_to_liar + self.p_ac_to_broken > 1
        ):
            raise ValueError("actuator transition probabilities must be in [0, 1] and sum <= 1")


@dataclass(frozen=True)
class Scenario:
    faulty_lines: frozenset[str] = frozenset()
    fd_modes: Mapping[str, Mode] = field(default_factory=dict)
    pd_modes: Mapping[str, Mode] = field(default_factory=dict)
    ac_modes: Mapping[str, Mode] = field(default_factory=dict)
    seed: int = 0
    initial_positions: Mapping[str, Position] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        allowed = {"faulty_lines", "fd_modes", "pd_modes", "ac_modes", "seed", "initial_positions"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown scenario keys: {sorted(extra)}")
        init = d.get("initial_positions")
        return cls(
            frozenset(d.get("faulty_lines", ())),
            {k: Mode(v) for k, v in d.get("fd_modes", {}).items()},
            {k: Mode(v) for k, v in d.get("pd_modes", {}).items()},
            {k: Mode(v) for k, v in d.get("ac_modes", {}).items()},
            int(d.get("seed", 0)),
            None if init is None else {k: Position(v) for k, v in init.items()},
        )

    def to_dict(self) -> dict:
        d = {
            "faulty_lines": sorted(self.faulty_lines),
            "fd_modes": {k: v.value for k, v in sorted(self.fd_modes.items())},
            "pd_modes": {k: v.value for k, v in sorted(self.pd_modes.items())},
            "ac_modes": {k: v.value for k, v in sorted(self.ac_modes.items())},
            "seed": self.seed,
        }
        if self.initial_positions is not None:
            d["initial_positions"] = {k: v.value for k, v in sorted(self.initial_positions.items())}
        return d


@dataclass(frozen=True)
class WorldState:
    positions: Mapping[str, Position]
    faulty_lines: frozenset[str]
    fd_mode: Mapping[str, Mode]
    pd_mode: Mapping[str, Mode]
    ac_mode: Mapping[str, Mode]
    fd_latched: Mapping[str, bool]
    # operations performed per device, i.e. the next draw index of its stream
    op_counts: Mapping[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------- physics


def protect(
    topo: NetworkTopology,
    positions: Mapping[str, Position],
    faulty_lines: Iterable[str],
    latched: Mapping[str, bool],
) -> tuple[dict[str, Position], dict[str, bool], tuple[str, ...]]:
    """Open every breaker feeding a fault and latch the detectors it energized.

    Detectors on closed devices of a tripping feeder record whether a faulty
    line lies beyond them; all other detectors keep their previous value.
    Shared by the world and by the deterministic candidate model.
    """
    faulty = frozenset(faulty_lines)
    en = energize(topo, positions)
    hot = {ln for ln in en.fed if ln in faulty}
    if not hot:
        return dict(positions), dict(latched), ()
    # breakers whose connected (possibly meshed) region touches a fault
    tripping = set()
    for cb in topo.breakers:
        if positions[cb] is not Position.CLOSED:
            continue
        region = _region(topo, positions, topo.devices[cb].line)
        if region & hot:
            tripping.add(cb)
    new_pos = dict(positions)
    new_latch = dict(latched)
    # fault passes a device iff a faulty line sits in the subtree beyond it
    below: dict[str, bool] = {}
    for ln in reversed(en.order):
        below[ln] = below.get(ln, False) or ln in faulty
        dev = en.parent[ln]
        if topo.devices[dev].kind is not DeviceKind.CB:
            up = topo.other_end(dev, ln)
            below[up] = below.get(up, False) or below[ln]
    for ln in en.order:
        if en.feeder_of[ln] not in tripping:
            continue
        dev = en.parent[ln]
        if topo.devices[dev].has_fd:
            new_latch[dev] = below[ln]
        # mesh chords carry no tree direction; their detectors reset
        for d in topo.incident(ln):
            if d in en.cycles and topo.devices[d].has_fd:
                new_latch[d] = False
    for cb in tripping:
        new_pos[cb] = Position.OPEN
    return new_pos, new_latch, tuple(sorted(tripping))


def _region(topo: NetworkTopology, positions: Mapping[str, Position], start: str) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        line = stack.pop()
        for dev in topo.incident(line):
            if positions[dev] is not Position.CLOSED:
                continue
            nxt = topo.other_end(dev, line)
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def fd_reading(mode: Mode, latched: bool) -> FDReading:
    if mode is Mode.BROKEN:
        return FDReading.NO_INFO
    seen = latched if mode is Mode.CORRECT else not latched
    return FDReading.FAULT if seen else FDReading.NO_FAULT


def actuator_outcome(mode: Mode) -> tuple[bool, Notification]:
    """(position changes, notification) for an actuator in ``mode``."""
    if mode is Mode.CORRECT:
        return True, Notification.POSITIVE
    if mode is Mode.LIAR:
        return False, Notification.POSITIVE
    return False, Notification.NEGATIVE


# ---------------------------------------------------------------- randomness


def device_uniform(seed: int, device: str, draw_index: int) -> float:
    """Uniform draw from the stream of ``device``, independent of other devices."""
    key = zlib.crc32(device.encode("utf-8"))
    ss = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(key, draw_index))
    return float(np.random.default_rng(ss).random())


def sample_transition(cfg: StochasticConfig, mode: Mode, device: str, draw_index: int) -> Mode:
    if mode is not Mode.CORRECT:
        return mode
    u = device_uniform(cfg.seed, device, draw_index)
    if u < cfg.p_ac_to_liar:
        return Mode.LIAR
    if u < cfg.p_ac_to_liar + cfg.p_ac_to_broken:
        return Mode.BROKEN
    return Mode.CORRECT


# ---------------------------------------------------------------- world API


def _check_known(topo: NetworkTopology, ids: Iterable[str], pool: Iterable[str], what: str):
    unknown = set(ids) - set(pool)
    if unknown:
        raise TopologyError(f"scenario references unknown {what}", unknown)


def init_world(topo: NetworkTopology, scenario: Scenario) -> WorldState:
    """Build the post-incident world: faults injected, protection settled."""
    _check_known(topo, scenario.faulty_lines, topo.lines, "lines")
    _check_known(topo, scenario.fd_modes, topo.fd_devices, "fault detectors")
    _check_known(topo, scenario.pd_modes, topo.remote_devices, "position detectors")
    _check_known(topo, scenario.ac_modes, topo.remote_devices, "actuators")
    if any(m is Mode.LIAR for m in scenario.pd_modes.values()):
        raise ValueError("position detectors can be broken but never lie")
    positions = dict(topo.normal_positions)
    if scenario.initial_positions is not None:
        _check_known(topo, scenario.initial_positions, topo.devices, "devices")
        positions.update(scenario.initial_positions)
    latched = {d: False for d in topo.fd_devices}
    positions, latched, _ = protect(topo, positions, scenario.faulty_lines, latched)
    return WorldState(
        positions=positions,
        faulty_lines=frozenset(scenario.faulty_lines),
        fd_mode={d: scenario.fd_modes.get(d, Mode.CORRECT) for d in topo.fd_devices},
        pd_mode={d: scenario.pd_modes.get(d, Mode.CORRECT) for d in topo.remote_devices},
        ac_mode={d: scenario.ac_modes.get(d, Mode.CORRECT) for d in topo.remote_devices},
        fd_latched=latched,
        op_counts={},
    )


def _observation(
    topo: NetworkTopology,
    world: WorldState,
    device: str | None,
    notification: Notification,
    tripped: tuple[str, ...],
) -> Observation:
    if device is None or world.pd_mode[device] is not Mode.CORRECT:
        pd = PDReading.NO_INFO
    else:
        pd = PDReading(world.positions[device].value)
    return Observation(
        notification=notification,
        device=device,
        pd_reading=pd,
        cb_positions={cb: world.positions[cb] for cb in topo.breakers},
        fd_readings={
            d: fd_reading(world.fd_mode[d], world.fd_latched[d]) for d in topo.fd_devices
        },
        tripped=tripped,
    )


def observe(topo: NetworkTopology, world: WorldState) -> Observation:
    return _observation(topo, world, None, Notification.NONE, ())


def execute_switch(
    topo: NetworkTopology, world: WorldState, op: SwitchOp, cfg: StochasticConfig
) -> tuple[WorldState, Observation]:
    if op.device not in topo.devices:
        raise TopologyError("unknown device", [op.device])
    if not topo.devices[op.device].remote:
        raise TopologyError("manual devices cannot be operated remotely", [op.device])
    draw = world.op_counts.get(op.device, 0)
    mode = sample_transition(cfg, world.ac_mode[op.device], op.device, draw)
    moves, note = actuator_outcome(mode)
    positions = dict(world.positions)
    if moves:
        positions[op.device] = op.direction
    positions, latched, tripped = protect(topo, positions, world.faulty_lines, world.fd_latched)
    new = replace(
        world,
        positions=positions,
        fd_latched=latched,
        ac_mode={**world.ac_mode, op.device: mode},
        op_counts={**world.op_counts, op.device: draw + 1},
    )
    return new, _observation(topo, new, op.device, note, tripped)


def random_scenario(
    topo: NetworkTopology,
    seed: int,
    max_faults: int = 2,
    p_fd_liar: float = 0.1,
    p_fd_broken: float = 0.05,
    p_pd_broken: float = 0.1,
    p_ac_faulty: float = 0.05,
) -> Scenario:
    """Seeded random incident: 1..max_faults faulty lines and random sensor/actuator modes."""
    rng = np.random.default_rng(seed)
    lines = sorted(topo.lines)
    n = int(rng.integers(1, max_faults + 1))
    faulty = frozenset(rng.choice(lines, size=min(n, len(lines)), replace=False).tolist())

    def pick(p_a: float, p_b: float) -> Mode:
        u = rng.random()
        return Mode.LIAR if u < p_a else Mode.BROKEN if u < p_a + p_b else Mode.CORRECT

    fd = {d: pick(p_fd_liar, p_fd_broken) for d in topo.fd_devices}
    pd = {d: pick(0.0, p_pd_broken) for d in topo.remote_devices}
    ac = {d: pick(p_ac_faulty / 2, p_ac_faulty / 2) for d in topo.remote_devices}
    return Scenario(
        faulty_lines=faulty,
        fd_modes={d: m for d, m in fd.items() if m is not Mode.CORRECT},
        pd_modes={d: m for d, m in pd.items() if m is not Mode.CORRECT},
        ac_modes={d: m for d, m in ac.items() if m is not Mode.CORRECT},
        seed=seed,
    )

"""Static network model and pure functions over device positions.

A network is a set of lines joined by switching devices. Circuit breakers
connect a source terminal to one line; switches (remote or manual) join two
lines. Everything here is a pure function of immutable inputs, and every
iteration runs in ascending id order so results are reproducible.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping


class Position(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class DeviceKind(str, Enum):
    CB = "cb"
    RSD = "rsd"
    MSD = "msd"


class TopologyError(ValueError):
    """Invalid network document or invariant violation."""

    def __init__(self, message: str, elements: Iterable[str] = ()):
        self.elements = tuple(sorted(elements))
        if self.elements:
            message = f"{message}: {', '.join(self.elements)}"
        super().__init__(message)


class StructuralError(TopologyError):
    """Positions that do not yield a forest of feeders."""

    def __init__(self, kind: str, elements: Iterable[str]):
        self.kind = kind
        super().__init__(kind, elements)


@dataclass(frozen=True)
class Line:
    id: str
    load_kw: float
    capacity_kw: float
    consumer_weight: float = 1.0


@dataclass(frozen=True)
class Device:
    id: str
    kind: DeviceKind
    endpoints: tuple[str, str]
    capacity_kw: float | None = None

    @property
    def remote(self) -> bool:
        # remote devices carry an actuator and a position detector
        return self.kind is not DeviceKind.MSD

    @property
    def has_fd(self) -> bool:
        return self.kind is DeviceKind.RSD

    @property
    def line(self) -> str:
        """The line side of a circuit breaker."""
        return self.endpoints[1]


@dataclass(frozen=True)
class Area:
    id: str
    lines: frozenset[str]
    boundary: frozenset[str]


@dataclass(frozen=True)
class NetworkTopology:
    lines: Mapping[str, Line]
    devices: Mapping[str, Device]
    normal_positions: Mapping[str, Position]
    _incident: Mapping[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _areas: tuple[Area, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        incident: dict[str, list[str]] = {lid: [] for lid in self.lines}
        for dev in self.devices.values():
            for end in dev.endpoints:
                if end in incident:
                    incident[end].append(dev.id)
        object.__setattr__(
            self, "_incident", {lid: tuple(sorted(ids)) for lid, ids in incident.items()}
        )
        object.__setattr__(self, "_areas", _compute_areas(self))

    @property
    def breakers(self) -> list[str]:
        return sorted(d for d, dev in self.devices.items() if dev.kind is DeviceKind.CB)

    @property
    def remote_devices(self) -> list[str]:
        return sorted(d for d, dev in self.devices.items() if dev.remote)

    @property
    def fd_devices(self) -> list[str]:
        return sorted(d for d, dev in self.devices.items() if dev.has_fd)

    def incident(self, line: str) -> tuple[str, ...]:
        return self._incident[line]

    def other_end(self, device: str, line: str) -> str | None:
        """Line on the far side of ``device`` seen from ``line``; None past a breaker."""
        dev = self.devices[device]
        if dev.kind is DeviceKind.CB:
            return None
        a, b = dev.endpoints
        return b if a == line else a

    def area_of(self, line: str) -> Area:
        for area in self._areas:
            if line in area.lines:
                return area
        raise KeyError(line)

    def area(self, area_id: str) -> Area:
        for area in self._areas:
            if area.id == area_id:
                return area
        raise KeyError(area_id)

    def area_lines(self, area_ids: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for aid in area_ids:
            out |= self.area(aid).lines
        return frozenset(out)


# ---------------------------------------------------------------- loading


_LINE_KEYS = {"id", "load_kw", "capacity_kw", "consumer_weight"}
_DEVICE_KEYS = {"id", "kind", "endpoints", "capacity_kw"}
_TOP_KEYS = {"lines", "devices", "normal_positions"}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise TopologyError(f"unknown keys in {where}", extra)


def topology_from_dict(doc: dict) -> NetworkTopology:
    if not isinstance(doc, dict):
        raise TopologyError("network document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "network")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise TopologyError("missing keys in network", missing)

    lines: dict[str, Line] = {}
    for raw in doc["lines"]:
        _reject_unknown(raw, _LINE_KEYS, "line")
        try:
            line = Line(
                id=str(raw["id"]),
                load_kw=float(raw["load_kw"]),
                capacity_kw=float(raw["capacity_kw"]),
                consumer_weight=float(raw.get("consumer_weight", 1.0)),
            )
        except KeyError as exc:
            raise TopologyError(f"line missing field {exc}") from None
        if line.id in lines:
            raise TopologyError("duplicate line id", [line.id])
        if line.load_kw < 0:
            raise TopologyError("negative load", [line.id])
        lines[line.id] = line

    devices: dict[str, Device] = {}
    for raw in doc["devices"]:
        _reject_unknown(raw, _DEVICE_KEYS, "device")
        try:
            did = str(raw["id"])
            kind = DeviceKind(raw["kind"])
            ends = tuple(str(e) for e in raw["endpoints"])
        except (KeyError, ValueError) as exc:
            raise TopologyError(f"bad device entry {raw!r}: {exc}") from None
        if did in devices or did in lines:
            raise TopologyError("duplicate id", [did])
        if len(ends) != 2:
            raise TopologyError("device needs two endpoints", [did])
        if kind is DeviceKind.CB:
            on_lines = [e for e in ends if e in lines]
            if len(on_lines) != 1:
                raise TopologyError("breaker must join one source and one line", [did])
            source = ends[0] if ends[1] == on_lines[0] else ends[1]
            ends = (source, on_lines[0])
            if "capacity_kw" not in raw:
                raise TopologyError("breaker without capacity_kw", [did])
            cap = float(raw["capacity_kw"])
        else:
            unknown = [e for e in ends if e not in lines]
            if unknown:
                raise TopologyError(f"switch {did} references unknown lines", unknown)
            if ends[0] == ends[1]:
                raise TopologyError("device connects a line to itself", [did])
            if "capacity_kw" in raw:
                raise TopologyError("capacity_kw only applies to breakers", [did])
            cap = None
        devices[did] = Device(did, kind, ends, cap)

    positions: dict[str, Position] = {}
    for did, pos in doc["normal_positions"].items():
        if did not in devices:
            raise TopologyError("position for unknown device", [did])
        try:
            positions[did] = Position(pos)
        except ValueError:
            raise TopologyError(f"bad position {pos!r}", [did]) from None
    missing_pos = set(devices) - set(positions)
    if missing_pos:
        raise TopologyError("normal_positions not total", missing_pos)

    sources = [dev.endpoints[0] for dev in devices.values() if dev.kind is DeviceKind.CB]
    dup_sources = {s for s in sources if sources.count(s) > 1}
    if dup_sources:
        raise TopologyError("source shared by several breakers", dup_sources)

    topo = NetworkTopology(lines, devices, positions)
    _check_invariants(topo)
    return topo


def load_network(document: str) -> NetworkTopology:
    """Parse a JSON network document and verify every invariant."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"parse error: {exc}") from None
    return topology_from_dict(doc)


def topology_to_dict(topo: NetworkTopology) -> dict:
    return {
        "lines": [
            {
                "id": ln.id,
                "load_kw": ln.load_kw,
                "capacity_kw": ln.capacity_kw,
                "consumer_weight": ln.consumer_weight,
            }
            for ln in sorted(topo.lines.values(), key=lambda x: x.id)
        ],
        "devices": [
            {"id": d.id, "kind": d.kind.value, "endpoints": list(d.endpoints)}
            | ({"capacity_kw": d.capacity_kw} if d.capacity_kw is not None else {})
            for d in sorted(topo.devices.values(), key=lambda x: x.id)
        ],
        "normal_positions": {d: p.value for d, p in sorted(topo.normal_positions.items())},
    }


def _check_invariants(topo: NetworkTopology) -> None:
    # every line must hang off some breaker when positions are ignored
    reached: set[str] = set()
    queue = deque(topo.devices[cb].line for cb in topo.breakers)
    reached.update(queue)
    while queue:
        line = queue.popleft()
        for dev in topo.incident(line):
            nxt = topo.other_end(dev, line)
            if nxt is not None and nxt not in reached:
                reached.add(nxt)
                queue.append(nxt)
    orphans = set(topo.lines) - reached
    if orphans:
        raise TopologyError("lines not connected to any breaker", orphans)
    # normal configuration must be a forest of feeders
    feeders(topo, topo.normal_positions)


# ---------------------------------------------------------------- areas


def _compute_areas(topo: NetworkTopology) -> tuple[Area, ...]:
    parent = {lid: lid for lid in topo.lines}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for dev in topo.devices.values():
        if dev.kind is DeviceKind.MSD:
            a, b = find(dev.endpoints[0]), find(dev.endpoints[1])
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[str, set[str]] = {}
    for lid in topo.lines:
        groups.setdefault(find(lid), set()).add(lid)
    areas = []
    for members in groups.values():
        boundary = {
            d for ln in members for d in topo.incident(ln) if topo.devices[d].remote
        }
        areas.append(Area(min(members), frozenset(members), frozenset(boundary)))
    return tuple(sorted(areas, key=lambda a: a.id))


def areas(topo: NetworkTopology) -> list[Area]:
    """Partition of the lines by connectivity through manual devices."""
    return list(topo._areas)


# ---------------------------------------------------------------- energization


@dataclass(frozen=True)
class Energization:
    """Mesh-tolerant view of which breaker feeds which line.

    Lines reached by several breakers keep the smallest breaker id;
    ``multi_fed`` and ``cycles`` record what a strict forest would reject.
    """

    feeder_of: Mapping[str, str]
    parent: Mapping[str, str]
    order: tuple[str, ...]
    multi_fed: frozenset[str]
    cycles: frozenset[str]

    @property
    def fed(self) -> frozenset[str]:
        return frozenset(self.feeder_of)

    def lines_of(self, cb: str) -> list[str]:
        return [ln for ln in self.order if self.feeder_of[ln] == cb]


def energize(topo: NetworkTopology, positions: Mapping[str, Position]) -> Energization:
    feeder_of: dict[str, str] = {}
    parent: dict[str, str] = {}
    order: list[str] = []
    reach_count: dict[str, int] = {}
    cycles: set[str] = set()
    for cb in topo.breakers:
        if positions[cb] is not Position.CLOSED:
            continue
        root = topo.devices[cb].line
        seen = {root}
        used = {cb}
        local_parent = {root: cb}
        local_order = [root]
        queue = deque([root])
        while queue:
            line = queue.popleft()
            for dev in topo.incident(line):
                if dev in used or positions[dev] is not Position.CLOSED:
                    continue
                nxt = topo.other_end(dev, line)
                if nxt is None:
                    # another closed breaker on this line: two sources meet
                    reach_count[line] = reach_count.get(line, 0) + 1
                    continue
                used.add(dev)
                if nxt in seen:
                    cycles.add(dev)
                    continue
                seen.add(nxt)
                local_parent[nxt] = dev
                local_order.append(nxt)
                queue.append(nxt)
        for ln in local_order:
            reach_count[ln] = reach_count.get(ln, 0) + 1
            if ln not in feeder_of:
                feeder_of[ln] = cb
                parent[ln] = local_parent[ln]
                order.append(ln)
    multi = frozenset(ln for ln, n in reach_count.items() if n > 1)
    return Energization(feeder_of, parent, tuple(order), multi, frozenset(cycles))


# ---------------------------------------------------------------- feeders


@dataclass(frozen=True)
class Feeder:
    cb: str
    lines: tuple[str, ...]  # breadth-first from the root line
    parent: Mapping[str, str]  # line -> closed device feeding it (the CB for the root)
    leaves: frozenset[str]  # open devices on the feeder boundary

    def edges(self) -> frozenset[str]:
        return frozenset(self.parent.values()) - {self.cb}


@dataclass(frozen=True)
class FeederForest:
    trees: Mapping[str, Feeder]
    unfed: frozenset[str]

    def feeder_of(self, line: str) -> str | None:
        for cb, tree in self.trees.items():
            if line in tree.parent:
                return cb
        return None


def feeders(topo: NetworkTopology, positions: Mapping[str, Position]) -> FeederForest:
    """Feeder trees for ``positions``; raises StructuralError on multi-feed or cycles."""
    missing = set(topo.devices) - set(positions)
    if missing:
        raise TopologyError("positions not total", missing)
    en = energize(topo, positions)
    if en.multi_fed:
        raise StructuralError("multi-feed", en.multi_fed)
    if en.cycles:
        raise StructuralError("cycle", en.cycles)
    trees = {}
    for cb in topo.breakers:
        if positions[cb] is not Position.CLOSED:
            continue
        lines = tuple(en.lines_of(cb))
        leaves = frozenset(
            d
            for ln in lines
            for d in topo.incident(ln)
            if positions[d] is Position.OPEN
        )
        trees[cb] = Feeder(cb, lines, {ln: en.parent[ln] for ln in lines}, leaves)
    return FeederForest(trees, frozenset(topo.lines) - en.fed)


def position_of(positions: Mapping[str, Position], device: str) -> Position:
    try:
        return positions[device]
    except KeyError:
        raise TopologyError("unknown device", [device]) from None


def downstream_children(
    topo: NetworkTopology,
    positions: Mapping[str, Position],
    device: str,
    feeder: str,
) -> list[tuple[str, str]]:
    """Devices on the line that closing ``device`` would feed from ``feeder``.

    ``device`` must touch a line currently fed by ``feeder`` (or be the
    feeder's own breaker).
    """
    dev = topo.devices[device]
    if dev.kind is DeviceKind.CB:
        if device != feeder:
            raise TopologyError(f"breaker {device} is not the root of feeder", [feeder])
        target = dev.line
    else:
        en = energize(topo, {**positions, device: Position.OPEN})
        a, b = dev.endpoints
        if en.feeder_of.get(a) == feeder:
            target = b
        elif en.feeder_of.get(b) == feeder:
            target = a
        else:
            raise TopologyError(f"device {device} not adjacent to feeder", [feeder])
    return [(d, feeder) for d in topo.incident(target) if d != device]


# ---------------------------------------------------------------- power


@dataclass(frozen=True)
class PowerReport:
    throughput: Mapping[str, float]
    cb_load: Mapping[str, float]
    cb_margin: Mapping[str, float]
    violations: tuple[str, ...]


def _report(topo: NetworkTopology, en: Energization, closed_cbs: Iterable[str]) -> PowerReport:
    flow = {ln: topo.lines[ln].load_kw for ln in en.order}
    # children come after parents in breadth-first order
    for ln in reversed(en.order):
        dev = en.parent[ln]
        if topo.devices[dev].kind is DeviceKind.CB:
            continue
        up = topo.other_end(dev, ln)
        if up in flow:
            flow[up] += flow[ln]
    load = {cb: 0.0 for cb in closed_cbs}
    for ln in en.order:
        dev = en.parent[ln]
        if topo.devices[dev].kind is DeviceKind.CB:
            load[dev] += flow[ln]
    violations = sorted(
        [ln for ln, f in flow.items() if f > topo.lines[ln].capacity_kw]
        + [cb for cb, f in load.items() if f > topo.devices[cb].capacity_kw]
    )
    margin = {cb: topo.devices[cb].capacity_kw - f for cb, f in load.items()}
    return PowerReport(flow, load, margin, tuple(violations))


def power_report(topo: NetworkTopology, positions: Mapping[str, Position]) -> PowerReport:
    """Additive kW accounting over the feeder forest."""
    feeders(topo, positions)
    en = energize(topo, positions)
    closed = [cb for cb in topo.breakers if positions[cb] is Position.CLOSED]
    return _report(topo, en, closed)


def loose_power_report(topo: NetworkTopology, positions: Mapping[str, Position]) -> PowerReport:
    """Like power_report but tolerates meshed states (first breaker wins)."""
    en = energize(topo, positions)
    closed = [cb for cb in topo.breakers if positions[cb] is Position.CLOSED]
    return _report(topo, en, closed)

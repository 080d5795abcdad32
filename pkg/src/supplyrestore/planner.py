"""Admissible level-1 restoration plans and their ranking.

Plans only grow existing feeders toward de-energized lines: bordering live
feeders extend through their tie switches, and cut-off feeders are rebuilt
from their breaker. Search is a depth-first walk over a stack of
(device, feeder) extension points; at each point the device either stops
the extension (open) or carries it one line further (closed).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .belief import Candidate
from .topology import (
    DeviceKind,
    NetworkTopology,
    Position,
    energize,
    loose_power_report,
)
from .world import Mode, SwitchOp


@dataclass(frozen=True)
class Plan:
    """Opening operations (ascending id) followed by closing operations.

    Closes keep the order in which the search chose them, which walks each
    feeder outward from its root: a device is never closed before the one
    that energizes it.
    """

    opens: tuple[str, ...] = ()
    closes: tuple[str, ...] = ()

    def __post_init__(self):
        if set(self.opens) & set(self.closes):
            raise ValueError("a device cannot be both opened and closed")

    @property
    def operations(self) -> list[SwitchOp]:
        return [SwitchOp(d, Position.OPEN) for d in self.opens] + [
            SwitchOp(d, Position.CLOSED) for d in self.closes
        ]

    def __len__(self):
        return len(self.opens) + len(self.closes)

    def apply(self, positions: Mapping[str, Position]) -> dict[str, Position]:
        out = dict(positions)
        out.update({d: Position.OPEN for d in self.opens})
        out.update({d: Position.CLOSED for d in self.closes})
        return out

    def to_dict(self) -> dict:
        return {"open": list(self.opens), "close": list(self.closes)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Plan":
        return cls(tuple(d.get("open", ())), tuple(d.get("close", ())))

    def __str__(self) -> str:
        ops = [str(op) for op in self.operations]
        return ", ".join(ops) if ops else "(no operation)"


@dataclass(frozen=True)
class UtilityWeights:
    w_supply: float = 1000.0
    w_ops: float = 1.0
    w_balance: float = 10.0

    @classmethod
    def from_dict(cls, d: Mapping) -> "UtilityWeights":
        extra = set(d) - {"w_supply", "w_ops", "w_balance"}
        if extra:
            raise ValueError(f"unknown utility keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {"w_supply": self.w_supply, "w_ops": self.w_ops, "w_balance": self.w_balance}


Frontier = tuple[tuple[str, str], ...]


def cutoff_feeders(topo: NetworkTopology, cand: Candidate) -> list[str]:
    return [cb for cb in topo.breakers if cand.positions[cb] is Position.OPEN]


def extension_points(
    topo: NetworkTopology, cand: Candidate, cutoff: Iterable[str]
) -> Frontier:
    """Initial frontier: tie switches from live feeders plus cut-off breakers.

    A tie qualifies when it is open with one side fed and the other side
    de-energized. Entries are sorted by device id; the search pops from the
    end of the stack.
    """
    en = energize(topo, cand.positions)
    points = set()
    for d, dev in topo.devices.items():
        if dev.kind is DeviceKind.CB or cand.positions[d] is not Position.OPEN:
            continue
        a, b = dev.endpoints
        fa, fb = en.feeder_of.get(a), en.feeder_of.get(b)
        if fa is not None and fb is None:
            points.add((d, fa))
        elif fb is not None and fa is None:
            points.add((d, fb))
    for cb in cutoff:
        if cand.positions[cb] is Position.OPEN:
            points.add((cb, cb))
    return tuple(sorted(points))


class _Search:
    def __init__(self, topo: NetworkTopology, cand: Candidate):
        self.topo = topo
        self.cand = cand
        self.faulty = cand.faulty_lines(topo)
        base = energize(topo, cand.positions)
        self.base_multi = base.multi_fed
        self.base_cycles = base.cycles
        self.base_violations = set(loose_power_report(topo, cand.positions).violations)
        self.plans: list[Plan] = []
        self._seen: set[tuple] = set()

    def operable(self, d: str) -> bool:
        dev = self.topo.devices[d]
        return dev.remote and self.cand.ac_mode.get(d) is Mode.CORRECT

    def partial_positions(self, opens, closes, frontier) -> dict[str, Position]:
        pos = dict(self.cand.positions)
        # undecided frontier devices hold the extension back
        for d, _ in frontier:
            pos[d] = Position.OPEN
        pos.update({d: Position.OPEN for d in opens})
        pos.update({d: Position.CLOSED for d in closes})
        return pos

    def try_close(self, d, f, opens, closes, frontier):
        """Children of ``d`` if closing it keeps the extension admissible, else None."""
        topo = self.topo
        before = self.partial_positions(opens, closes, frontier)
        before[d] = Position.OPEN
        en0 = energize(topo, before)
        dev = topo.devices[d]
        if dev.kind is DeviceKind.CB:
            target = dev.line
            if target in en0.feeder_of:
                return None
        else:
            a, b = dev.endpoints
            fed_a, fed_b = a in en0.feeder_of, b in en0.feeder_of
            if fed_a == fed_b:
                # both sides fed means a loop or a second source
                return None
            target = b if fed_a else a
        children = [(c, f) for c in topo.incident(target) if c != d]
        after = dict(before)
        after[d] = Position.CLOSED
        for c, _ in children:
            if c not in closes:
                after[c] = Position.OPEN
        en1 = energize(topo, after)
        if en1.fed & self.faulty:
            return None
        if not en1.multi_fed <= self.base_multi or not en1.cycles <= self.base_cycles:
            return None
        if not set(loose_power_report(topo, after).violations) <= self.base_violations:
            return None
        return children

    def explore(self, opens: tuple, closes: tuple, frontier: Frontier):
        if not frontier:
            self.emit(opens, closes)
            return
        (d, f), rest = frontier[-1], frontier[:-1]
        pos_n = self.cand.positions[d]
        if d in closes:
            # reached again from its other side: closing it twice would loop
            return
        if d in opens:
            choices = (Position.OPEN,)
        elif not self.operable(d):
            choices = (pos_n,)
        else:
            choices = (Position.OPEN, Position.CLOSED)
        if Position.OPEN in choices:
            self.explore(opens + (d,), closes, rest)
        if Position.CLOSED in choices:
            children = self.try_close(d, f, opens, closes, rest)
            if children is not None:
                self.explore(opens, closes + (d,), rest + tuple(children))

    def emit(self, opens, closes):
        pos = self.cand.positions
        plan = Plan(
            tuple(sorted(d for d in set(opens) if pos[d] is Position.CLOSED)),
            tuple(d for d in closes if pos[d] is Position.OPEN),
        )
        sig = (frozenset(plan.opens), frozenset(plan.closes))
        if sig not in self._seen:
            self._seen.add(sig)
            self.plans.append(plan)


def explore(
    topo: NetworkTopology,
    cand: Candidate,
    open_choices: Sequence[str] = (),
    closed_choices: Sequence[str] = (),
    frontier: Frontier = (),
) -> list[Plan]:
    """Every admissible level-1 plan reachable from ``frontier`` (duplicates dropped)."""
    search = _Search(topo, cand)
    search.explore(tuple(open_choices), tuple(closed_choices), tuple(frontier))
    return search.plans


def plan_utility(
    plan: Plan, cand: Candidate, topo: NetworkTopology, weights: UtilityWeights
) -> float:
    before = energize(topo, cand.positions).fed
    after_pos = plan.apply(cand.positions)
    after = energize(topo, after_pos)
    supply = sum(
        topo.lines[ln].load_kw * topo.lines[ln].consumer_weight
        for ln in sorted(after.fed - before)
    )
    # measured against the candidate's own imbalance, so doing nothing scores 0;
    # the offset is the same for every plan of a candidate and leaves ranks alone
    imbalance = _imbalance(topo, after_pos) - _imbalance(topo, cand.positions)
    return weights.w_supply * supply - weights.w_ops * len(plan) - weights.w_balance * imbalance


def _imbalance(topo: NetworkTopology, positions: Mapping[str, Position]) -> float:
    """Population variance of load/capacity over closed breakers."""
    report = loose_power_report(topo, positions)
    ratios = [report.cb_load[cb] / topo.devices[cb].capacity_kw for cb in sorted(report.cb_load)]
    return statistics.pvariance(ratios) if len(ratios) > 1 else 0.0


def rank_plans(
    plans: Iterable[Plan], cand: Candidate, topo: NetworkTopology, weights: UtilityWeights
) -> list[tuple[Plan, float]]:
    """Best first; ties go to fewer operations, then the smaller device-id sequence."""
    scored = [(p, plan_utility(p, cand, topo, weights)) for p in plans]
    scored.sort(key=lambda ps: (-ps[1], len(ps[0]), [op.device for op in ps[0].operations]))
    return scored


def generate_plans(topo: NetworkTopology, cand: Candidate, cutoff: Iterable[str] | None = None) -> list[Plan]:
    if cutoff is None:
        cutoff = cutoff_feeders(topo, cand)
    return explore(topo, cand, (), (), extension_points(topo, cand, cutoff))


def plan(
    topo: NetworkTopology,
    cand: Candidate,
    cutoff: Iterable[str] | None = None,
    weights: UtilityWeights = UtilityWeights(),
) -> Plan:
    """Best admissible level-1 plan for ``cand``; the empty plan if nothing helps."""
    ranked = rank_plans(generate_plans(topo, cand, cutoff), cand, topo, weights)
    return ranked[0][0] if ranked else Plan()

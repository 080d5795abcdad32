"""State estimation over complete network hypotheses.

A candidate is one fully specified hypothesis (positions, faulty areas,
detector and actuator modes, latched detector values) that the deterministic
network model can simulate. A belief is a normalized distribution over
candidates, kept as log-weights.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .topology import NetworkTopology, Position, TopologyError, feeders
from .world import (
    FDReading,
    Mode,
    Notification,
    Observation,
    PDReading,
    SwitchOp,
    actuator_outcome,
    fd_reading,
    protect,
)

NORMALIZATION_TOL = 1e-9


class AllPruned(Exception):
    """No candidate is consistent with the observations."""


@dataclass(frozen=True)
class Priors:
    p_liar_given_positive: float = 0.05
    p_liar_given_negative: float = 0.02
    p_ac_to_liar: float = 0.10
    p_ac_to_broken: float = 0.05
    area_fault_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("p_liar_given_positive", "p_liar_given_negative"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if min(self.p_ac_to_liar, self.p_ac_to_broken) < 0 or (
            self.p_ac_to_liar + self.p_ac_to_broken >= 1
        ):
            raise ValueError("actuator transition probabilities must be >= 0 and sum < 1")
        if any(w <= 0 for w in self.area_fault_weights.values()):
            raise ValueError("area fault weights must be positive")

    @property
    def p_correct_given_positive(self) -> float:
        return 1.0 - self.p_liar_given_positive

    @property
    def p_correct_given_negative(self) -> float:
        return 1.0 - self.p_liar_given_negative

    def fd_mode_prob(self, mode: Mode, reading: FDReading) -> float:
        """P(detector mode | the reading it returns)."""
        if reading is FDReading.NO_INFO:
            return 1.0 if mode is Mode.BROKEN else 0.0
        if mode is Mode.BROKEN:
            return 0.0
        p_liar = (
            self.p_liar_given_positive
            if reading is FDReading.FAULT
            else self.p_liar_given_negative
        )
        return p_liar if mode is Mode.LIAR else 1.0 - p_liar

    def transitions(self, mode: Mode) -> list[tuple[Mode, float]]:
        if mode is not Mode.CORRECT:
            return [(mode, 1.0)]
        out = [
            (Mode.CORRECT, 1.0 - self.p_ac_to_liar - self.p_ac_to_broken),
            (Mode.LIAR, self.p_ac_to_liar),
            (Mode.BROKEN, self.p_ac_to_broken),
        ]
        return [(m, p) for m, p in out if p > 0]

    @classmethod
    def from_dict(cls, d: Mapping) -> "Priors":
        known = {
            "p_liar_given_positive",
            "p_liar_given_negative",
            "p_ac_to_liar",
            "p_ac_to_broken",
            "area_fault_weights",
        }
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown priors keys: {sorted(extra)}")
        kw = dict(d)
        kw["area_fault_weights"] = dict(kw.get("area_fault_weights", {}))
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "p_liar_given_positive": self.p_liar_given_positive,
            "p_liar_given_negative": self.p_liar_given_negative,
            "p_ac_to_liar": self.p_ac_to_liar,
            "p_ac_to_broken": self.p_ac_to_broken,
            "area_fault_weights": dict(sorted(self.area_fault_weights.items())),
        }


def _frozen(m: Mapping) -> tuple:
    return tuple(sorted((k, v.value if hasattr(v, "value") else v) for k, v in m.items()))


@dataclass(frozen=True, eq=False)
class Candidate:
    positions: Mapping[str, Position]
    fault_areas: frozenset[str]
    fd_mode: Mapping[str, Mode]
    ac_mode: Mapping[str, Mode]
    fd_latched: Mapping[str, bool]

    @property
    def key(self) -> tuple:
        """Canonical ordering key: fewest faults, area ids, then state maps."""
        k = self.__dict__.get("_key")
        if k is None:
            k = (
                len(self.fault_areas),
                tuple(sorted(self.fault_areas)),
                _frozen(self.positions),
                _frozen(self.fd_mode),
                _frozen(self.ac_mode),
                _frozen(self.fd_latched),
            )
            object.__setattr__(self, "_key", k)
        return k

    def __eq__(self, other):
        return isinstance(other, Candidate) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def faulty_lines(self, topo: NetworkTopology) -> frozenset[str]:
        return topo.area_lines(self.fault_areas)

    def summary(self) -> dict:
        return {
            "fault_areas": sorted(self.fault_areas),
            "fd_liar": sorted(d for d, m in self.fd_mode.items() if m is Mode.LIAR),
            "fd_broken": sorted(d for d, m in self.fd_mode.items() if m is Mode.BROKEN),
            "ac_faulty": {d: m.value for d, m in sorted(self.ac_mode.items()) if m is not Mode.CORRECT},
            "open": sorted(d for d, p in self.positions.items() if p is Position.OPEN),
        }

    def to_dict(self) -> dict:
        return {
            "positions": {k: v.value for k, v in sorted(self.positions.items())},
            "fault_areas": sorted(self.fault_areas),
            "fd_modes": {k: v.value for k, v in sorted(self.fd_mode.items())},
            "ac_modes": {k: v.value for k, v in sorted(self.ac_mode.items())},
            "fd_latched": dict(sorted(self.fd_latched.items())),
        }

    @classmethod
    def from_dict(cls, topo: NetworkTopology, d: Mapping) -> "Candidate":
        """Build a candidate; omitted maps default to normal/correct/unlatched."""
        allowed = {"positions", "fault_areas", "faulty_lines", "fd_modes", "ac_modes", "fd_latched"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown candidate keys: {sorted(extra)}")
        pos = dict(topo.normal_positions)
        pos.update({k: Position(v) for k, v in d.get("positions", {}).items()})
        fault_areas = set(d.get("fault_areas", ()))
        fault_areas |= {topo.area_of(ln).id for ln in d.get("faulty_lines", ())}
        for aid in fault_areas:
            topo.area(aid)
        unknown = (set(pos) - set(topo.devices)) | (
            set(d.get("fd_modes", {})) - set(topo.fd_devices)
        ) | (set(d.get("ac_modes", {})) - set(topo.remote_devices))
        if unknown:
            raise TopologyError("candidate references unknown devices", unknown)
        fd = {x: Mode(d.get("fd_modes", {}).get(x, "correct")) for x in topo.fd_devices}
        ac = {x: Mode(d.get("ac_modes", {}).get(x, "correct")) for x in topo.remote_devices}
        latched = {x: bool(d.get("fd_latched", {}).get(x, False)) for x in topo.fd_devices}
        return cls(pos, frozenset(fault_areas), fd, ac, latched)


@dataclass(frozen=True)
class Entry:
    candidate: Candidate
    logp: float
    # breakers the model expects to trip during the last transition
    tripped: tuple[str, ...] = ()


@dataclass(frozen=True)
class Belief:
    entries: tuple[Entry, ...]
    k: int = 1

    def __len__(self):
        return len(self.entries)

    @property
    def candidates(self) -> list[Candidate]:
        return [e.candidate for e in self.entries]

    @property
    def probabilities(self) -> list[float]:
        return [math.exp(e.logp) for e in self.entries]

    def probability_of(self, candidate: Candidate) -> float:
        return sum(math.exp(e.logp) for e in self.entries if e.candidate == candidate)

    def total(self) -> float:
        return math.fsum(self.probabilities)

    def ranked(self) -> list[tuple[Candidate, float]]:
        order = sorted(self.entries, key=lambda e: (-e.logp, e.candidate.key))
        return [(e.candidate, math.exp(e.logp)) for e in order]

    def to_json(self) -> list:
        return [{"candidate": c.summary(), "probability": p} for c, p in self.ranked()]

    def to_dict(self) -> dict:
        """Full dump, most probable first; :meth:`from_dict` reads it back."""
        return {
            "k": self.k,
            "candidates": [
                {"state": c.to_dict(), "summary": c.summary(), "probability": p}
                for c, p in self.ranked()
            ],
        }

    @classmethod
    def from_dict(cls, topo: NetworkTopology, d: Mapping) -> "Belief":
        entries = tuple(
            Entry(Candidate.from_dict(topo, e["state"]), math.log(e["probability"]))
            for e in d["candidates"]
        )
        return cls(entries, int(d["k"]))


def _normalize(items: Iterable[tuple[Candidate, float, tuple]], k: int) -> Belief:
    items = sorted(items, key=lambda t: (t[0].key, t[2]))
    if not items:
        raise AllPruned("no candidate left")
    peak = max(lp for _, lp, _ in items)
    log_z = peak + math.log(math.fsum(math.exp(lp - peak) for _, lp, _ in items))
    return Belief(tuple(Entry(c, lp - log_z, tr) for c, lp, tr in items), k)


def _merge(items: Iterable[tuple[Candidate, float, tuple]]) -> list[tuple[Candidate, float, tuple]]:
    groups: dict[tuple, list] = {}
    first: dict[tuple, tuple[Candidate, tuple]] = {}
    for cand, lp, tr in items:
        gk = (cand.key, tr)
        groups.setdefault(gk, []).append(lp)
        first.setdefault(gk, (cand, tr))
    out = []
    for gk in sorted(groups):
        lps = sorted(groups[gk])
        peak = lps[-1]
        merged = peak + math.log(math.fsum(math.exp(x - peak) for x in lps))
        cand, tr = first[gk]
        out.append((cand, merged, tr))
    return out


# ---------------------------------------------------------------- task 1


def enumerate_fault_combos(
    areas_per_cutoff_feeder: Sequence[Sequence[str]], k: int
) -> list[frozenset[str]]:
    """Fault-area combinations for escalation level ``k``.

    Each cut-off feeder carries between 1 and k faulty areas; for k > 1 at
    least one feeder carries exactly k, so successive levels are disjoint.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    per_feeder = []
    for feeder_areas in areas_per_cutoff_feeder:
        opts = sorted(set(feeder_areas))
        per_feeder.append(
            [frozenset(c) for r in range(1, min(k, len(opts)) + 1) for c in itertools.combinations(opts, r)]
        )
    seen = set()
    out = []
    for combo in itertools.product(*per_feeder):
        if k > 1 and not any(len(c) == k for c in combo):
            continue
        union = frozenset().union(*combo)
        if union not in seen:
            seen.add(union)
            out.append(union)
    return sorted(out, key=lambda s: (len(s), sorted(s)))


def deduce_fd_modes(
    expected: Mapping[str, FDReading], actual: Mapping[str, FDReading]
) -> dict[str, Mode]:
    """Modes explaining ``actual`` readings given what correct detectors would say."""
    out = {}
    for d in sorted(expected):
        if actual[d] is FDReading.NO_INFO:
            out[d] = Mode.BROKEN
        elif actual[d] != expected[d]:
            out[d] = Mode.LIAR
        else:
            out[d] = Mode.CORRECT
    return out


def feeder_areas(
    topo: NetworkTopology, positions: Mapping[str, Position], cb: str
) -> list[str]:
    """Areas with at least one line on the feeder of ``cb`` under ``positions``."""
    forest = feeders(topo, {**positions, cb: Position.CLOSED})
    tree = forest.trees[cb]
    return sorted({topo.area_of(ln).id for ln in tree.lines})


def initial_distribution(
    topo: NetworkTopology,
    pre_incident: Mapping[str, Position],
    cutoff_feeders: Sequence[str],
    actual_readings: Mapping[str, FDReading],
    k: int,
    priors: Priors,
    cb_positions: Mapping[str, Position] | None = None,
) -> Belief:
    """One candidate per fault combination, weighted by its detector modes.

    When ``cb_positions`` is given, combinations whose simulated trips do
    not reproduce the observed breaker positions are dropped.
    """
    if not cutoff_feeders:
        raise ValueError("no cut-off feeder")
    per_feeder = [feeder_areas(topo, pre_incident, cb) for cb in sorted(cutoff_feeders)]
    unlatched = {d: False for d in topo.fd_devices}
    items = []
    for combo in enumerate_fault_combos(per_feeder, k):
        faulty = topo.area_lines(combo)
        pos, latched, _ = protect(topo, pre_incident, faulty, unlatched)
        if cb_positions is not None and any(pos[cb] != p for cb, p in cb_positions.items()):
            continue
        expected = {d: fd_reading(Mode.CORRECT, latched[d]) for d in topo.fd_devices}
        modes = deduce_fd_modes(expected, actual_readings)
        factors = [priors.fd_mode_prob(modes[d], actual_readings[d]) for d in modes]
        if min(factors, default=1.0) <= 0.0:
            continue
        logs = [math.log(f) for f in factors]
        logs += [math.log(priors.area_fault_weights.get(a, 1.0)) for a in combo]
        cand = Candidate(
            positions=pos,
            fault_areas=combo,
            fd_mode=modes,
            ac_mode={d: Mode.CORRECT for d in topo.remote_devices},
            fd_latched=latched,
        )
        # fsum makes equal factor multisets give bit-identical weights
        items.append((cand, math.fsum(logs), ()))
    return _normalize(items, k)


# ---------------------------------------------------------------- task 2


def simulate(
    topo: NetworkTopology, cand: Candidate, op: SwitchOp, mode_after: Mode
) -> tuple[Candidate, tuple[str, ...]]:
    """Deterministic successor of ``cand`` when the operated actuator ends in ``mode_after``."""
    moves, _ = actuator_outcome(mode_after)
    pos = dict(cand.positions)
    if moves:
        pos[op.device] = op.direction
    pos, latched, tripped = protect(topo, pos, cand.faulty_lines(topo), cand.fd_latched)
    succ = replace(
        cand,
        positions=pos,
        fd_latched=latched,
        ac_mode={**cand.ac_mode, op.device: mode_after},
    )
    succ.__dict__.pop("_key", None)
    return succ, tripped


def _require_remote(topo: NetworkTopology, op: SwitchOp):
    if op.device not in topo.devices:
        raise TopologyError("unknown device", [op.device])
    if not topo.devices[op.device].remote:
        raise TopologyError("manual devices cannot be operated remotely", [op.device])


def predict(topo: NetworkTopology, belief: Belief, op: SwitchOp, priors: Priors) -> Belief:
    """Push every candidate through every actuator-mode change of the operated device."""
    _require_remote(topo, op)
    items = []
    for e in belief.entries:
        for mode, p in priors.transitions(e.candidate.ac_mode[op.device]):
            succ, tripped = simulate(topo, e.candidate, op, mode)
            items.append((succ, e.logp + math.log(p), tripped))
    merged = _merge(items)
    return Belief(tuple(Entry(c, lp, tr) for c, lp, tr in merged), belief.k)


def expected_observation(
    topo: NetworkTopology, cand: Candidate, device: str, tripped: tuple[str, ...]
) -> Observation:
    note = Notification.NEGATIVE if cand.ac_mode[device] is Mode.BROKEN else Notification.POSITIVE
    return Observation(
        notification=note,
        device=device,
        pd_reading=PDReading(cand.positions[device].value),
        cb_positions={cb: cand.positions[cb] for cb in topo.breakers},
        fd_readings={d: fd_reading(cand.fd_mode[d], cand.fd_latched[d]) for d in topo.fd_devices},
        tripped=tripped,
    )


def consistent(expected: Observation, actual: Observation) -> bool:
    """Componentwise match; a missing actual reading constrains nothing."""
    if expected.notification != actual.notification:
        return False
    if actual.pd_reading is not PDReading.NO_INFO and expected.pd_reading != actual.pd_reading:
        return False
    if dict(expected.cb_positions) != dict(actual.cb_positions):
        return False
    if tuple(expected.tripped) != tuple(actual.tripped):
        return False
    for d, reading in actual.fd_readings.items():
        if reading is not FDReading.NO_INFO and expected.fd_readings[d] != reading:
            return False
    return True


def condition(
    topo: NetworkTopology, belief: Belief, observation: Observation, op: SwitchOp
) -> Belief:
    """Prune candidates inconsistent with ``observation`` and renormalize."""
    keep = []
    for e in belief.entries:
        exp = expected_observation(topo, e.candidate, op.device, e.tripped)
        if consistent(exp, observation):
            keep.append((e.candidate, e.logp, ()))
    if not keep:
        raise AllPruned(f"no candidate explains the outcome of {op}")
    return _normalize(_merge(keep), belief.k)


def most_probable(belief: Belief) -> Candidate:
    if not belief.entries:
        raise ValueError("empty belief")
    best = min(belief.entries, key=lambda e: (-e.logp, e.candidate.key))
    return best.candidate

"""Closed-loop restoration supervisor.

Plan for the most probable candidate, execute one switching operation at a
time, update and revise the belief after each, replan when the belief no
longer agrees with what the plan expected, and raise the per-feeder fault
bound when every candidate has been ruled out.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .belief import (
    AllPruned,
    Belief,
    Candidate,
    Priors,
    condition,
    initial_distribution,
    most_probable,
    predict,
    simulate,
)
from .planner import Plan, UtilityWeights, cutoff_feeders, plan as make_plan
from .topology import NetworkTopology, Position, energize
from .world import (
    Mode,
    Observation,
    StochasticConfig,
    SwitchOp,
    WorldState,
    execute_switch,
    observe,
)

log = logging.getLogger(__name__)


class RestorationAborted(Exception):
    pass


@dataclass(frozen=True)
class SessionConfig:
    priors: Priors = field(default_factory=Priors)
    stochastic: StochasticConfig = field(default_factory=StochasticConfig)
    utility: UtilityWeights = field(default_factory=UtilityWeights)
    k_max: int = 3
    replan_max: int = 32

    @classmethod
    def from_dict(cls, d: Mapping, seed: int = 0) -> "SessionConfig":
        extra = set(d) - {"priors", "stochastic", "utility", "k_max", "replan_max"}
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        stoch = dict(d.get("stochastic", {}))
        stoch.setdefault("seed", seed)
        return cls(
            priors=Priors.from_dict(d.get("priors", {})),
            stochastic=StochasticConfig(**stoch),
            utility=UtilityWeights.from_dict(d.get("utility", {})),
            k_max=int(d.get("k_max", 3)),
            replan_max=int(d.get("replan_max", 32)),
        )

    def to_dict(self) -> dict:
        return {
            "priors": self.priors.to_dict(),
            "stochastic": {
                "p_ac_to_liar": self.stochastic.p_ac_to_liar,
                "p_ac_to_broken": self.stochastic.p_ac_to_broken,
                "seed": self.stochastic.seed,
            },
            "utility": self.utility.to_dict(),
            "k_max": self.k_max,
            "replan_max": self.replan_max,
        }


# ---------------------------------------------------------------- trace

INITIAL = "InitialObservation"
HYPOTHESIS = "HypothesisAdopted"
PLAN = "PlanAdopted"
OP = "OpExecuted"
REPLAN = "Replan"
ESCALATION = "Escalation"
ABORTED = "Aborted"
FINISHED = "Finished"

_PREFIX = {
    INITIAL: "OBS",
    HYPOTHESIS: "HYP",
    PLAN: "PLAN",
    OP: "OP",
    REPLAN: "REPLAN",
    ESCALATION: "ESC",
    ABORTED: "END",
    FINISHED: "END",
}


@dataclass(frozen=True)
class Event:
    kind: str
    data: dict

    def to_json(self) -> str:
        return json.dumps({"event": self.kind, **self.data}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Event":
        d = json.loads(line)
        return cls(d.pop("event"), d)

    def render(self) -> str:
        d = self.data
        tag = _PREFIX[self.kind]
        if self.kind == INITIAL:
            obs = d["observation"]
            cut = [cb for cb, p in obs["cb_positions"].items() if p == "open"]
            fault = [x for x, r in obs["fd_readings"].items() if r == "fault_downstream"]
            blind = [x for x, r in obs["fd_readings"].items() if r == "no_info"]
            body = f"breakers open: {_ls(cut)}; fault downstream: {_ls(fault)}; no info: {_ls(blind)}"
        elif self.kind == HYPOTHESIS:
            c = d["candidate"]
            faults = "; ".join(
                f"{aid} [{'|'.join(bnd)}]" for aid, bnd in sorted(d["areas"].items())
            )
            ac = ", ".join(f"{k}={v}" for k, v in c["ac_faulty"].items()) or "-"
            body = (
                f"k={d['k']} p={d['probability']:.4f} faults: {faults}; "
                f"lying FDs: {_ls(c['fd_liar'])}; broken FDs: {_ls(c['fd_broken'])}; faulty ACs: {ac}"
            )
        elif self.kind == PLAN:
            p = Plan.from_dict(d["plan"])
            body = str(p)
        elif self.kind == OP:
            obs = d["observation"]
            body = (
                f"{d['op']} -> {obs['notification']}, PD {obs['pd_reading']}, "
                f"tripped: {_ls(obs['tripped'])}"
            )
        elif self.kind == REPLAN:
            body = d["reason"]
        elif self.kind == ESCALATION:
            body = f"k={d['k']}"
        elif self.kind == ABORTED:
            body = f"aborted: {d['reason']}"
        else:
            fed = ", ".join(f"{ln}<-{cb}" for ln, cb in d["fed"].items())
            body = f"finished after {d['operations']} operations; fed: {fed}; unfed: {_ls(d['unfed'])}"
        return f"{tag:<6} {body}"


def _ls(xs: Sequence[str]) -> str:
    return ", ".join(xs) if xs else "-"


@dataclass
class Trace:
    events: list[Event] = field(default_factory=list)

    def add(self, kind: str, **data: Any) -> None:
        self.events.append(Event(kind, data))

    def of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    @property
    def outcome(self) -> str:
        return self.events[-1].kind if self.events else ""

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        return cls([Event.from_json(ln) for ln in text.splitlines() if ln.strip()])

    def render(self) -> str:
        return "".join(e.render() + "\n" for e in self.events)


# ---------------------------------------------------------------- session


@dataclass
class Session:
    trace: Trace
    world: WorldState
    beliefs: list[Belief]  # beliefs[i] is the belief after i operations


def expected_successor(topo: NetworkTopology, cand: Candidate, op: SwitchOp) -> Candidate:
    """Outcome the planner counts on: the actuator stays correct and the move happens."""
    succ, _ = simulate(topo, cand, op, Mode.CORRECT)
    return succ


def replay(
    topo: NetworkTopology,
    belief: Belief,
    history: Sequence[tuple[SwitchOp, Observation]],
    priors: Priors,
) -> Belief:
    for op, obs in history:
        belief = condition(topo, predict(topo, belief, op, priors), obs, op)
    return belief


def escalate(
    topo: NetworkTopology,
    pre_incident: Mapping[str, Position],
    initial: Observation,
    history: Sequence[tuple[SwitchOp, Observation]],
    cfg: SessionConfig,
    k: int,
) -> Belief:
    """Rebuild the belief at the next fault bound that explains the whole history."""
    cutoff = _tripped_feeders(topo, pre_incident, initial)
    for level in range(k + 1, cfg.k_max + 1):
        try:
            belief = initial_distribution(
                topo, pre_incident, cutoff, initial.fd_readings, level, cfg.priors,
                cb_positions=initial.cb_positions,
            )
            return replay(topo, belief, history, cfg.priors)
        except AllPruned:
            log.debug("level %d exhausted", level)
    raise RestorationAborted(f"no hypothesis with at most {cfg.k_max} faults per feeder")


def _tripped_feeders(topo, pre_incident, obs: Observation) -> list[str]:
    return [
        cb for cb in topo.breakers
        if obs.cb_positions[cb] is Position.OPEN and pre_incident[cb] is Position.CLOSED
    ]


def _hypothesis_event(topo: NetworkTopology, belief: Belief, cand: Candidate) -> dict:
    return {
        "k": belief.k,
        "probability": belief.probability_of(cand),
        "candidate": cand.summary(),
        "areas": {a: sorted(topo.area(a).boundary) for a in sorted(cand.fault_areas)},
    }


def _finish(topo: NetworkTopology, trace: Trace, world: WorldState, n_ops: int) -> None:
    en = energize(topo, world.positions)
    trace.add(
        FINISHED,
        operations=n_ops,
        fed={ln: en.feeder_of[ln] for ln in sorted(en.fed)},
        unfed=sorted(set(topo.lines) - en.fed),
    )


def restore(
    topo: NetworkTopology,
    world: WorldState,
    cfg: SessionConfig = SessionConfig(),
    pre_incident: Mapping[str, Position] | None = None,
) -> Session:
    """Run one restoration session against ``world`` until finished or aborted."""
    if pre_incident is None:
        pre_incident = topo.normal_positions
    trace = Trace()
    initial = observe(topo, world)
    trace.add(INITIAL, observation=initial.to_dict())
    beliefs: list[Belief] = []
    history: list[tuple[SwitchOp, Observation]] = []

    cutoff = _tripped_feeders(topo, pre_incident, initial)
    if not cutoff:
        _finish(topo, trace, world, 0)
        return Session(trace, world, beliefs)

    try:
        try:
            belief = initial_distribution(
                topo, pre_incident, cutoff, initial.fd_readings, 1, cfg.priors,
                cb_positions=initial.cb_positions,
            )
        except AllPruned:
            belief = escalate(topo, pre_incident, initial, history, cfg, 1)
            trace.add(ESCALATION, k=belief.k)
    except RestorationAborted as exc:
        trace.add(ABORTED, reason=str(exc))
        return Session(trace, world, beliefs)
    beliefs.append(belief)

    replans = 0
    while True:
        hyp = most_probable(belief)
        trace.add(HYPOTHESIS, **_hypothesis_event(topo, belief, hyp))
        current = make_plan(topo, hyp, cutoff_feeders(topo, hyp), cfg.utility)
        trace.add(PLAN, plan=current.to_dict())
        expected = hyp
        revised = False
        for op in current.operations:
            expected = expected_successor(topo, expected, op)
            world, obs = execute_switch(topo, world, op, cfg.stochastic)
            history.append((op, obs))
            trace.add(OP, op=str(op), device=op.device, direction=op.direction.value,
                      observation=obs.to_dict())
            try:
                belief = condition(topo, predict(topo, belief, op, cfg.priors), obs, op)
            except AllPruned:
                try:
                    belief = escalate(topo, pre_incident, initial, history, cfg, belief.k)
                except RestorationAborted as exc:
                    beliefs.append(belief)
                    trace.add(ABORTED, reason=str(exc))
                    return Session(trace, world, beliefs)
                beliefs.append(belief)
                trace.add(ESCALATION, k=belief.k)
                revised = True
                break
            beliefs.append(belief)
            if most_probable(belief) != expected:
                trace.add(REPLAN, reason=f"most probable state changed after {op}")
                revised = True
                break
        if not revised:
            _finish(topo, trace, world, len(history))
            return Session(trace, world, beliefs)
        replans += 1
        if replans > cfg.replan_max:
            trace.add(ABORTED, reason=f"more than {cfg.replan_max} replans")
            return Session(trace, world, beliefs)

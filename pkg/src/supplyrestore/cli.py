"""Command-line front end: validate networks, run sessions, list plans, dump beliefs.

Exit codes: 0 on success (session Finished), 1 on bad input, 2 when the
session was Aborted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import data_path
from .belief import Candidate
from .engine import ABORTED, SessionConfig, restore
from .planner import generate_plans, rank_plans
from .topology import NetworkTopology, StructuralError, TopologyError, feeders, load_network, power_report
from .world import Scenario, init_world

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ABORTED = 2

log = logging.getLogger(__name__)


class InputError(Exception):
    pass


def _read(path: str | None, default: str) -> str:
    if path is None:
        return data_path(default).read_text()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _json(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: parse error: {exc}") from None


def _network(args) -> NetworkTopology:
    text = _read(args.network, "example_network.json")
    try:
        return load_network(text)
    except TopologyError as exc:
        raise InputError(f"network: {exc}") from None


def _config(args, scenario_seed: int = 0) -> SessionConfig:
    doc = _json(_read(args.config, "default_config.json"), "config")
    if not isinstance(doc, dict):
        raise InputError("config: expected a JSON object")
    doc = dict(doc)
    stoch = dict(doc.get("stochastic", {}))
    if args.seed is not None:
        stoch["seed"] = args.seed
    doc["stochastic"] = stoch
    try:
        return SessionConfig.from_dict(doc, seed=scenario_seed)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None


def _scenario(args) -> Scenario:
    doc = _json(_read(args.scenario, "sample_session.json"), "scenario")
    if not isinstance(doc, dict):
        raise InputError("scenario: expected a JSON object")
    try:
        return Scenario.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"scenario: {exc}") from None


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- commands


def network_summary(topo: NetworkTopology) -> dict:
    forest = feeders(topo, topo.normal_positions)
    report = power_report(topo, topo.normal_positions)
    out = []
    for cb, tree in sorted(forest.trees.items()):
        area_ids = sorted({topo.area_of(ln).id for ln in tree.lines})
        out.append({
            "cb": cb,
            "lines": sorted(tree.lines),
            "areas": area_ids,
            "load_kw": report.cb_load[cb],
            "capacity_kw": topo.devices[cb].capacity_kw,
        })
    return {
        "lines": len(topo.lines),
        "devices": len(topo.devices),
        "feeders": out,
        "unfed": sorted(forest.unfed),
        "violations": list(report.violations),
    }


def cmd_validate(args) -> int:
    topo = _network(args)
    summary = network_summary(topo)
    if args.format == "json":
        _emit(args, _dump(summary))
    else:
        rows = [f"valid network: {summary['lines']} lines, {summary['devices']} devices, "
                f"{len(summary['feeders'])} feeders"]
        for f in summary["feeders"]:
            rows.append(
                f"  {f['cb']}: {len(f['lines'])} lines, {len(f['areas'])} areas "
                f"({', '.join(f['areas'])}), load {f['load_kw']:g}/{f['capacity_kw']:g} kW"
            )
        if summary["violations"]:
            rows.append(f"  capacity violations: {', '.join(summary['violations'])}")
        _emit(args, "\n".join(rows) + "\n")
    return EXIT_OK


def _session(args):
    topo = _network(args)
    scenario = _scenario(args)
    cfg = _config(args, scenario.seed)
    try:
        world = init_world(topo, scenario)
    except (TopologyError, ValueError) as exc:
        raise InputError(f"scenario: {exc}") from None
    return topo, restore(topo, world, cfg)


def cmd_run(args) -> int:
    _, session = _session(args)
    trace = session.trace
    _emit(args, trace.to_jsonl() if args.format == "json" else trace.render())
    return EXIT_ABORTED if trace.outcome == ABORTED else EXIT_OK


def cmd_plans(args) -> int:
    topo = _network(args)
    cfg = _config(args)
    doc = _json(_read(args.candidate, "candidate_16_18.json"), "candidate")
    try:
        cand = Candidate.from_dict(topo, doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"candidate: {exc}") from None
    ranked = rank_plans(generate_plans(topo, cand), cand, topo, cfg.utility)
    if args.format == "json":
        _emit(args, _dump([{"plan": p.to_dict(), "score": s} for p, s in ranked]))
    else:
        _emit(args, "".join(f"{s:14.4f}  {p}\n" for p, s in ranked))
    return EXIT_OK


def cmd_belief(args) -> int:
    _, session = _session(args)
    n = len(session.beliefs)
    if not 0 <= args.step < n:
        raise InputError(f"step {args.step} out of range: the session holds {n} beliefs")
    belief = session.beliefs[args.step]
    if args.format == "json":
        _emit(args, _dump({"step": args.step, **belief.to_dict()}))
    else:
        rows = [f"step {args.step}, k={belief.k}, {len(belief)} candidates"]
        for c, p in belief.ranked():
            s = c.summary()
            ac = ", ".join(f"{d}={m}" for d, m in s["ac_faulty"].items()) or "-"
            rows.append(
                f"  {p:.6f}  faults {'+'.join(s['fault_areas'])}; "
                f"lying FDs {', '.join(s['fd_liar']) or '-'}; faulty ACs {ac}"
            )
        _emit(args, "\n".join(rows) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", help="network JSON (default: bundled example network)")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    session = argparse.ArgumentParser(add_help=False)
    session.add_argument("--scenario", help="scenario JSON (default: bundled sample session)")
    session.add_argument("--config", help="config JSON (default: bundled defaults)")
    session.add_argument("--seed", type=int, help="world RNG seed, overrides scenario and config")

    p = argparse.ArgumentParser(prog="supplyrestore", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="check a network and summarize it")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", parents=[common, session], help="run a restoration session")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plans", parents=[common], help="rank the level-1 plans for a candidate")
    pl.add_argument("--candidate", help="candidate JSON (default: bundled fault 16-18 hypothesis)")
    pl.add_argument("--config", help="config JSON (default: bundled defaults)")
    pl.set_defaults(func=cmd_plans, seed=None)

    b = sub.add_parser("belief", parents=[common, session], help="dump the belief after N operations")
    b.add_argument("--step", type=int, default=0, help="number of operations executed (default 0)")
    b.set_defaults(func=cmd_belief)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StructuralError as exc:
        print(f"error: {exc.kind}: {', '.join(sorted(exc.args[1]))}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

import itertools
import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from supplyrestore import restore
from supplyrestore.belief import (
    AllPruned,
    Belief,
    Candidate,
    Entry,
    Priors,
    condition,
    consistent,
    deduce_fd_modes,
    enumerate_fault_combos,
    expected_observation,
    initial_distribution,
    most_probable,
    predict,
)
from supplyrestore.topology import Position, topology_from_dict
from supplyrestore.world import (
    FDReading,
    Mode,
    Scenario,
    SwitchOp,
    init_world,
    observe,
)

OPEN, CLOSED = Position.OPEN, Position.CLOSED
F, N, X = FDReading.FAULT, FDReading.NO_FAULT, FDReading.NO_INFO


@pytest.fixture(scope="module")
def incident(topo, sample_scenario):
    return observe(topo, init_world(topo, sample_scenario))


def initial(topo, incident, priors=Priors(), k=1):
    return initial_distribution(
        topo, topo.normal_positions, ["CB1"], incident.fd_readings, k, priors,
        cb_positions=incident.cb_positions,
    )


# ---------------------------------------------------------------- combos


def test_five_single_fault_combos():
    assert len(enumerate_fault_combos([list("abcde")], 1)) == 5


def test_level_two_is_pairs_only():
    combos = enumerate_fault_combos([list("abcde")], 2)
    assert len(combos) == math.comb(5, 2)
    assert all(len(c) == 2 for c in combos)


def test_two_feeders_product_rule():
    assert len(enumerate_fault_combos([["a", "b", "c"], ["x", "y"]], 1)) == 3 * 2


@pytest.mark.parametrize("sizes, k", [((3, 2), 2), ((4, 3), 2), ((3, 3), 3), ((2,), 3)])
def test_levels_are_disjoint_and_cover_brute_force(sizes, k):
    feeders = [[f"f{i}a{j}" for j in range(n)] for i, n in enumerate(sizes)]
    brute = set()
    for per in itertools.product(*[
        [frozenset(c) for r in range(1, n + 1) for c in itertools.combinations(fa, r)]
        for fa, n in zip(feeders, sizes)
    ]):
        worst = max(len(c) for c in per)
        if worst == k or (k == 1 and worst == 1):
            brute.add(frozenset().union(*per))
    assert set(enumerate_fault_combos(feeders, k)) == brute
    lower = set().union(*(enumerate_fault_combos(feeders, j) for j in range(1, k)))
    assert not lower & brute


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        enumerate_fault_combos([["a"]], 0)


# ---------------------------------------------------------------- fd modes


def test_agreeing_readings_are_correct():
    assert deduce_fd_modes({"a": F, "b": N}, {"a": F, "b": N}) == {"a": Mode.CORRECT, "b": Mode.CORRECT}


def test_fault_upstream_of_11_and_12_makes_16_a_liar(topo):
    # fault on the breaker-side area: no detector should have seen it
    expected = {d: N for d in topo.fd_devices}
    actual = {**expected, "RSD16": F}
    modes = deduce_fd_modes(expected, actual)
    assert modes["RSD16"] is Mode.LIAR
    assert all(m is Mode.CORRECT for d, m in modes.items() if d != "RSD16")


def test_no_info_means_broken():
    assert deduce_fd_modes({"a": F, "b": N}, {"a": X, "b": X}) == {"a": Mode.BROKEN, "b": Mode.BROKEN}


# ---------------------------------------------------------------- initial


def test_single_area_feeder_gives_certain_candidate():
    topo = topology_from_dict({
        "lines": [{"id": "L1", "load_kw": 1.0, "capacity_kw": 10.0, "consumer_weight": 1.0}],
        "devices": [{"id": "CB1", "kind": "cb", "endpoints": ["S", "L1"], "capacity_kw": 10.0}],
        "normal_positions": {"CB1": "closed"},
    })
    b = initial_distribution(topo, topo.normal_positions, ["CB1"], {}, 1, Priors())
    assert len(b) == 1
    assert b.probabilities == [pytest.approx(1.0)]
    assert b.candidates[0].positions["CB1"] is OPEN


def test_five_hypotheses(topo, incident):
    b = initial(topo, incident)
    assert len(b) == 5
    assert sorted(tuple(c.fault_areas) for c in b.candidates) == [
        ("L1",), ("L11",), ("L12",), ("L16",), ("L18",)
    ]


def test_hand_normalized_weights(topo, incident):
    priors = Priors(p_liar_given_positive=0.1, p_liar_given_negative=0.05)
    b = initial(topo, incident, priors)
    # readings: 11 and 12 say fault, 16, 18, 53, 63 say no fault
    c_pos, l_pos, c_neg, l_neg = 0.9, 0.1, 0.95, 0.05
    table = {
        "L1": [l_pos, l_pos, c_neg, c_neg, c_neg, c_neg],
        "L11": [c_pos, l_pos, c_neg, c_neg, c_neg, c_neg],
        "L12": [l_pos, c_pos, c_neg, c_neg, c_neg, c_neg],
        "L16": [l_pos, c_pos, l_neg, c_neg, c_neg, c_neg],
        "L18": [l_pos, c_pos, l_neg, l_neg, c_neg, c_neg],
    }
    raw = {a: math.prod(fs) for a, fs in table.items()}
    z = sum(raw.values())
    got = {next(iter(c.fault_areas)): p for c, p in b.ranked()}
    for a, w in raw.items():
        assert got[a] == pytest.approx(w / z, abs=1e-12)


def test_area_weights_break_ties(topo, incident):
    b = initial(topo, incident, Priors(area_fault_weights={"L12": 2.0}))
    assert most_probable(b).fault_areas == {"L12"}


def test_initial_candidates_have_correct_actuators(topo, incident):
    for c in initial(topo, incident).candidates:
        assert all(m is Mode.CORRECT for m in c.ac_mode.values())


def test_priors_validation():
    with pytest.raises(ValueError):
        Priors(p_liar_given_positive=1.0)
    with pytest.raises(ValueError):
        Priors(p_ac_to_liar=0.6, p_ac_to_broken=0.5)
    with pytest.raises(ValueError):
        Priors(area_fault_weights={"L1": 0.0})
    with pytest.raises(ValueError):
        Priors.from_dict({"p_foo": 1})
    p = Priors(0.2, 0.1, 0.05, 0.01, {"L1": 3.0})
    assert Priors.from_dict(p.to_dict()) == p


# ---------------------------------------------------------------- predict


def _single(topo, incident, area="L16"):
    b = initial(topo, incident)
    c = next(c for c in b.candidates if c.fault_areas == {area})
    return Belief((Entry(c, 0.0),), 1)


def test_deterministic_prediction(topo, incident):
    b = predict(topo, _single(topo, incident), SwitchOp("RSD18", OPEN), Priors(p_ac_to_liar=0, p_ac_to_broken=0))
    assert len(b) == 1
    assert b.probabilities == [1.0]
    assert b.candidates[0].positions["RSD18"] is OPEN


def test_liar_actuator_keeps_position(topo, incident):
    one = _single(topo, incident)
    c = one.candidates[0]
    liar = replace(c, ac_mode={**c.ac_mode, "RSD18": Mode.LIAR})
    liar.__dict__.pop("_key", None)
    b = predict(topo, Belief((Entry(liar, 0.0),), 1), SwitchOp("RSD18", OPEN), Priors())
    assert len(b) == 1
    assert b.candidates[0].positions["RSD18"] is CLOSED


def test_three_way_branching(topo, incident):
    b = predict(topo, _single(topo, incident), SwitchOp("RSD18", OPEN), Priors(p_ac_to_liar=0.05, p_ac_to_broken=0.05))
    masses = {c.ac_mode["RSD18"]: p for c, p in b.ranked()}
    assert masses == pytest.approx({Mode.CORRECT: 0.9, Mode.LIAR: 0.05, Mode.BROKEN: 0.05}, abs=1e-12)


def test_predict_rejects_manual_devices(topo, incident):
    with pytest.raises(Exception, match="manual"):
        predict(topo, _single(topo, incident), SwitchOp("MSD19", OPEN), Priors())


# ---------------------------------------------------------------- condition


def test_consistent_observation_leaves_belief_unchanged(topo, incident):
    b = initial(topo, incident)
    op = SwitchOp("RSD18", OPEN)
    pb = predict(topo, b, op, Priors(p_ac_to_liar=0, p_ac_to_broken=0))
    obs = expected_observation(topo, pb.candidates[0], "RSD18", ())
    # every candidate expects the same observation from opening 18
    after = condition(topo, pb, obs, op)
    assert sorted(after.probabilities) == pytest.approx(sorted(b.probabilities), abs=1e-12)


def test_cb1_retrip_prunes_the_below_11_success(topo, sample_scenario):
    session = restore(topo, init_world(topo, sample_scenario))
    b = session.beliefs[2]
    summaries = [(tuple(c.fault_areas), dict(c.ac_mode), c.positions["RSD11"]) for c in b.candidates]
    assert not any(a == ("L11",) and pos is OPEN for a, _, pos in summaries)
    top = b.ranked()
    assert top[0][0].fault_areas == {"L12"} and top[0][0].fd_mode["RSD11"] is Mode.LIAR
    below11_liar = next(p for c, p in top if c.fault_areas == {"L11"} and c.ac_mode["RSD11"] is Mode.LIAR)
    assert top[0][1] > below11_liar


def test_unexpected_trip_prunes_everything(topo, incident):
    b = initial(topo, incident)
    op = SwitchOp("RSD18", OPEN)
    pb = predict(topo, b, op, Priors())
    obs = expected_observation(topo, pb.candidates[0], "RSD18", ())
    weird = replace(obs, cb_positions={**obs.cb_positions, "CB6": OPEN})
    with pytest.raises(AllPruned):
        condition(topo, pb, weird, op)


def test_no_info_matches_anything(topo, incident):
    c = initial(topo, incident).candidates[0]
    exp = expected_observation(topo, c, "RSD18", ())
    blind = replace(exp, fd_readings={d: X for d in exp.fd_readings},
                    pd_reading=type(exp.pd_reading).NO_INFO)
    assert consistent(exp, blind)
    assert not consistent(exp, replace(exp, tripped=("CB5",)))


# ---------------------------------------------------------------- most probable


def test_single_candidate_is_most_probable(topo, incident):
    one = _single(topo, incident)
    assert most_probable(one) == one.candidates[0]


def test_larger_mass_wins(topo, incident):
    b = initial(topo, incident)
    a, c = b.candidates[:2]
    two = Belief((Entry(a, math.log(0.4)), Entry(c, math.log(0.6))), 1)
    assert most_probable(two) == c


def test_exact_tie_goes_to_smaller_area_id(topo, incident):
    b = initial(topo, incident)
    p = {next(iter(c.fault_areas)): e.logp for c, e in zip(b.candidates, b.entries)}
    assert p["L11"] == p["L12"]  # bit-identical
    winners = set()
    for perm in itertools.permutations(b.entries):
        winners.add(frozenset(most_probable(Belief(perm, 1)).fault_areas))
    assert winners == {frozenset({"L11"})}


def test_empty_belief():
    with pytest.raises(ValueError):
        most_probable(Belief((), 1))


def test_belief_dump_round_trip(topo, incident):
    b = initial(topo, incident)
    again = Belief.from_dict(topo, b.to_dict())
    assert [c for c, _ in again.ranked()] == [c for c, _ in b.ranked()]
    assert again.probabilities == pytest.approx([p for _, p in b.ranked()], abs=1e-15)


def test_candidate_round_trip(topo, incident):
    for c in initial(topo, incident).candidates:
        assert Candidate.from_dict(topo, c.to_dict()) == c


# ---------------------------------------------------------------- properties


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 7),
    st.booleans(),
    st.one_of(st.just(0.0), st.floats(1e-4, 0.3)),
    st.one_of(st.just(0.0), st.floats(1e-4, 0.3)),
)
def test_predict_conserves_mass_and_condition_is_restriction(topo, incident, i, close, pl, pb):
    priors = Priors(p_ac_to_liar=pl, p_ac_to_broken=pb)
    b = initial(topo, incident, priors)
    dev = topo.remote_devices[i]
    op = SwitchOp(dev, CLOSED if close else OPEN)
    pred = predict(topo, b, op, priors)
    assert abs(pred.total() - 1.0) <= 1e-12
    # pick an observation some candidate expects
    e = pred.entries[0]
    obs = expected_observation(topo, e.candidate, dev, e.tripped)
    post = condition(topo, pred, obs, op)
    assert abs(post.total() - 1.0) <= 1e-9
    # naive restriction
    keep = [(x.candidate, math.exp(x.logp)) for x in pred.entries
            if consistent(expected_observation(topo, x.candidate, dev, x.tripped), obs)]
    naive = {}
    for c, p in keep:
        naive[c] = naive.get(c, 0.0) + p
    z = sum(naive.values())
    got = dict(post.ranked())
    assert set(got) == set(naive)
    for c, p in naive.items():
        assert got[c] == pytest.approx(p / z, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50))
def test_argmax_is_scale_invariant(topo, incident, shift):
    b = initial(topo, incident)
    shifted = Belief(tuple(Entry(e.candidate, e.logp + shift, e.tripped) for e in b.entries), b.k)
    assert most_probable(shifted) == most_probable(b)


def test_true_state_survives_in_the_sample_session(topo, sample_scenario):
    session = restore(topo, init_world(topo, sample_scenario))
    world = session.world
    operated = {e.data["device"] for e in session.trace.of("OpExecuted")}
    truth = Candidate(
        positions=world.positions,
        fault_areas=frozenset(topo.area_of(ln).id for ln in world.faulty_lines),
        fd_mode=world.fd_mode,
        ac_mode={d: (world.ac_mode[d] if d in operated else Mode.CORRECT) for d in topo.remote_devices},
        fd_latched=world.fd_latched,
    )
    final = session.beliefs[-1]
    assert final.k == 2
    assert truth in final.candidates

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcfl.dag import (
    DagState,
    Transaction,
    TransitionTable,
    WalkParams,
    attach_transaction,
    confirm_transactions,
    cumulative_weight,
    dag_from_json,
    dag_to_json,
    entry_point,
    heights,
    own_weight,
    random_walk,
    tip_select,
    to_dot,
    transition_probabilities,
    write_jsonl,
)
from bcfl.errors import (
    DegenerateWeight,
    DuplicateTransaction,
    NoSuccessors,
    OrphanParent,
    ValidationFailed,
)
from oracles import reference_cw, tip_law


def add(dag, parents, weight, acc, name, size=10):
    tx = Transaction(tuple(parents), name, "", size, 1, acc, weight, len(dag))
    attach_transaction(dag, tx, {p: dag.transactions[p].accuracy for p in parents})
    return tx.id


def build(spec, **kw):
    """spec: list of (name, parent names, W, Acc); 'g' is genesis."""
    dag = DagState.create(accuracy=1.0, **kw)
    ids = {"g": dag.genesis_id}
    for name, parents, w, acc in spec:
        ids[name] = add(dag, [ids[p] for p in parents], w, acc, name)
    return dag, ids


DIAMOND = [("a", "gg", 0.4, 0.9), ("b", "gg", 0.3, 0.8), ("c", "ab", 0.5, 0.95), ("e", "aa", 0.2, 0.7)]

LADDER = [("a", "gg", 0.1, 0.6), ("b", "gg", 0.9, 0.95), ("c", "ab", 0.3, 0.7), ("d", "bb", 0.8, 0.9),
          ("e", "cd", 0.5, 0.85), ("f", "dd", 0.05, 0.3), ("h", "cc", 0.6, 0.99)]

WIDE = [("a", "gg", 0.2, 0.5), ("b", "gg", 0.7, 0.9), ("c", "gg", 0.4, 0.8), ("d", "ab", 0.9, 0.95),
        ("e", "bc", 0.1, 0.4), ("f", "ca", 0.6, 0.7), ("h", "dd", 0.3, 0.9), ("i", "de", 0.8, 0.6),
        ("j", "ef", 0.5, 0.99), ("k", "ff", 0.95, 0.2), ("m", "hi", 0.25, 0.75)]

FIXTURES = {"diamond": DIAMOND, "ladder": LADDER, "wide": WIDE}


def oracle_cw(spec):
    """CW of every fixture node from the definition alone (genesis fixed at 1)."""
    info = {name: (w, acc) for name, _, w, acc in spec}
    approvers = {}
    for name, parents, w, _ in spec:
        for p in dict.fromkeys(parents):
            approvers.setdefault(p, []).append(name)
    cw = {"g": 1.0}
    for name, (w, acc) in info.items():
        cw[name] = reference_cw(w, [(acc, info[a][0]) for a in approvers.get(name, [])])
    children = {p: kids for p, kids in approvers.items()}
    return cw, children


# --- weight formulas -----------------------------------------------------------

def test_own_weight_examples():
    assert own_weight(100, 0.5, 100, 300, 1, 0.9) == pytest.approx(0.3375, abs=1e-12)
    assert own_weight(100, 0.5, 100, 300, 1, 0.0) == 0.0
    assert own_weight(500, 0.0, 0, 500, 1, 1.0) == 1.0
    with pytest.raises(DegenerateWeight):
        own_weight(0, 0.5, 0, 0, 1, 0.9)
    with pytest.raises(ValueError):
        own_weight(10, 1.5, 0, 10, 1, 0.9)


def test_own_weight_is_clamped():
    assert own_weight(100, 1.0, 100, 100, 3, 1.0) == 1.0


@given(st.floats(1, 1e4), st.floats(0, 1), st.floats(0, 1e4), st.floats(1, 1e4), st.floats(0.01, 1),
       st.floats(0.1, 100))
def test_own_weight_scale_invariant(d, rho, acc_size, total, acc, k):
    a = own_weight(d, rho, acc_size, total, 1, acc)
    b = own_weight(k * d, rho, k * acc_size, k * total, 1, acc)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_cumulative_weight_examples():
    assert cumulative_weight(0.4, []) == 0.4
    assert cumulative_weight(0.4, [(0.9, 0.5)]) == pytest.approx(0.65, abs=1e-12)
    assert cumulative_weight(0.4, [(0.4, 0.9)]) == 0.4
    # a worse approver would lower CW; the clamp holds it at W
    assert cumulative_weight(0.4, [(0.1, 0.5)]) == 0.4
    assert cumulative_weight(0.4, [(0.1, 0.5)], clamp=False) == pytest.approx(0.25)


@given(st.floats(0, 1), st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=6))
def test_cw_at_least_w_and_matches_oracle(w, approvers):
    cw = cumulative_weight(w, approvers)
    assert cw >= w
    assert cw == pytest.approx(reference_cw(w, approvers), abs=1e-12)


# --- transition probabilities --------------------------------------------------

def test_transition_examples():
    cw = {"x": 0.0, "y1": 1.0, "y2": 0.0, "y3": 0.5}
    assert transition_probabilities("x", ["y1"], cw).tolist() == [1.0]
    assert transition_probabilities("x", ["y2", "x"], {"x": 0.0, "y2": 0.0}).tolist() == [0.5, 0.5]
    p = transition_probabilities("x", ["y1", "y2"], cw)
    assert p == pytest.approx([math.e / (math.e + 1), 1 / (math.e + 1)], abs=1e-12)
    with pytest.raises(NoSuccessors):
        transition_probabilities("x", [], cw)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.floats(-50, 50))
def test_softmax_law(values, shift):
    names = [f"y{i}" for i in range(len(values))]
    cw = dict(zip(names, values), x=0.0)
    p = transition_probabilities("x", names, cw)
    assert abs(p.sum() - 1.0) < 1e-12
    shifted = {k: v + shift for k, v in cw.items()}
    q = transition_probabilities("x", names, shifted)
    assert np.allclose(p, q, atol=1e-12)
    assert p[np.argmax(values)] == p.max()


# --- attachment and tips -------------------------------------------------------

def test_tip_bookkeeping():
    dag = DagState.create()
    g = dag.genesis_id
    a = add(dag, [g, g], 0.2, 0.8, "a")
    assert g not in dag.tips and dag.tips == {a}
    b = add(dag, [g, g], 0.2, 0.8, "b")
    assert dag.tips == {a, b}
    c = add(dag, [a, b], 0.2, 0.8, "c")
    d = add(dag, [c, c], 0.2, 0.8, "d")
    assert dag.tips == {d}


def test_attach_errors():
    dag = DagState.create(accuracy=0.5)
    g = dag.genesis_id
    tx = Transaction((g, g), "h0", "", 1, 1, 0.8, 0.2, 1)
    with pytest.raises(ValidationFailed):
        attach_transaction(dag, tx, {g: 0.56})               # parent misreported by > 0.05
    attach_transaction(dag, tx, {g: 0.54})
    with pytest.raises(DuplicateTransaction):
        attach_transaction(dag, tx, {g: 0.5})
    with pytest.raises(OrphanParent):
        attach_transaction(dag, Transaction(("nope", g), "h1", "", 1, 1, 0.8, 0.2, 2), {g: 0.5, "nope": 0.5})
    with pytest.raises(ValidationFailed):
        attach_transaction(dag, Transaction((g,), "h1", "", 1, 1, 0.8, 0.2, 2), {g: 0.5})
    with pytest.raises(ValidationFailed):
        attach_transaction(dag, Transaction((g, tx.id), "h1", "", 1, 1, 0.8, 0.2, 2), {g: 0.5})


def test_transaction_validation_and_serialization():
    with pytest.raises(ValueError):
        Transaction((), "x", "", 1, 1, 1.2, 0.5, 0)
    with pytest.raises(ValueError):
        Transaction((), "x", "", 1, 1, 0.5, -0.1, 0)
    tx = Transaction(("a", "b"), "h0", "ff", 10, 1, 0.5, 0.25, 3)
    assert Transaction.from_dict(tx.to_dict()).id == tx.id
    bad = dict(tx.to_dict(), id="0" * 64)
    with pytest.raises(ValueError):
        Transaction.from_dict(bad)


@given(st.lists(st.tuples(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6)), min_size=1, max_size=25))
def test_attach_keeps_topological_order(choices):
    dag = DagState.create()
    for k, (i, j) in enumerate(choices):
        ids = list(dag.transactions)
        add(dag, [ids[i % len(ids)], ids[j % len(ids)]], 0.3, 0.7, f"n{k}")
    order = {t: n for n, t in enumerate(dag.transactions)}
    for t, tx in dag.transactions.items():
        assert all(order[p] < order[t] for p in tx.parents)
    assert dag.tips == {t for t in dag.transactions if not dag.approvers(t)}


# --- confirmation ------------------------------------------------------------

def test_diamond_cumulative_weights_by_hand():
    dag, ids = build(DIAMOND)
    assert dag.cumulative_weight(ids["a"]) == pytest.approx(0.575, abs=1e-12)
    assert dag.cumulative_weight(ids["b"]) == pytest.approx(0.55, abs=1e-12)
    assert dag.cumulative_weight(ids["c"]) == 0.5
    assert dag.cumulative_weight(ids["g"]) == 1.0


def test_confirmation_subsets():
    dag, ids = build(DIAMOND, threshold=0.5)
    inv = {v: k for k, v in ids.items()}
    assert {inv[t] for t in confirm_transactions(dag)} == {"g", "a", "b", "c"}
    assert {inv[t] for t in confirm_transactions(dag, 0.56)} == {"g", "a"}
    # CW never exceeds 1 with weights and accuracies in [0, 1], so 2.0 confirms nothing
    assert confirm_transactions(dag, 2.0) == set()
    assert confirm_transactions(dag, 1e-12) == {t for t in dag.transactions if dag.transactions[t].weight > 0}


def test_fresh_ledger_confirms_nothing_above_genesis_weight():
    assert confirm_transactions(DagState.create(), 1.5) == set()


def test_confirmation_is_sticky():
    dag = DagState.create(threshold=0.5)
    g = dag.genesis_id
    a = add(dag, [g, g], 0.3, 0.9, "a")
    add(dag, [a, a], 0.9, 0.9, "b")
    assert a in confirm_transactions(dag)
    assert a in confirm_transactions(dag)
    assert confirm_transactions(dag, 0.95) == {g}          # query only
    assert a in dag.confirmed


# --- walks ---------------------------------------------------------------------

def test_heights_and_entry_point():
    dag, ids = build(LADDER)
    h = heights(dag)
    assert h[ids["g"]] == 0 and h[ids["e"]] == 3
    assert entry_point(dag, 10) == ids["g"]
    assert entry_point(dag, 1) in {ids["c"], ids["d"]}
    assert entry_point(dag, 1) == max([ids["c"], ids["d"]], key=dag.cumulative_weight)


def test_genesis_only():
    dag = DagState.create()
    assert tip_select(dag, WalkParams(), np.random.default_rng(0)) == (dag.genesis_id,) * 2


def test_line_graph_is_uniform():
    dag = DagState.create()
    g = dag.genesis_id
    kids = [add(dag, [g, g], 0.3, 0.8, f"k{i}") for i in range(3)]
    tips = TransitionTable(dag).walk_many(g, 30_000, np.random.default_rng(1), 10)
    freq = np.bincount(tips, minlength=len(dag))[1:] / tips.size
    assert np.allclose(freq, 1 / 3, atol=0.02)
    assert set(kids) == set(dag.tips)


def test_tip_select_prefers_distinct_tips():
    dag, ids = build(DIAMOND)
    rng = np.random.default_rng(3)
    for _ in range(50):
        tips = tip_select(dag, WalkParams(), rng)
        assert len(set(tips)) == 2 and set(tips) <= dag.tips


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_single_walks_follow_the_chain_law(name):
    dag, ids = build(FIXTURES[name])
    cw, children = oracle_cw(FIXTURES[name])
    law = tip_law(children, cw, "g")
    rng = np.random.default_rng(11)
    n = 4000
    hits = {}
    for _ in range(n):
        t = random_walk(dag, dag.genesis_id, rng)
        hits[t] = hits.get(t, 0) + 1
    for tip_name, p in law.items():
        assert abs(hits.get(ids[tip_name], 0) / n - p) < 0.04


def test_walk_timeout():
    from bcfl.errors import WalkTimeout
    dag, _ = build(LADDER)
    with pytest.raises(WalkTimeout):
        TransitionTable(dag).walk(dag.genesis_id, np.random.default_rng(0), 1)


# --- export ------------------------------------------------------------------

def test_json_round_trip_and_dot(tmp_path):
    dag, ids = build(DIAMOND)
    confirm_transactions(dag)
    back = dag_from_json(json.loads(json.dumps(dag_to_json(dag))))
    assert list(back.transactions) == list(dag.transactions)
    assert back.tips == dag.tips and back.confirmed == dag.confirmed
    assert back.cw_map() == dag.cw_map()
    dot = to_dot(dag)
    assert dot.startswith("digraph dag {") and dot.count("->") == 5
    assert f'"{ids["c"][:12]}" -> "{ids["a"][:12]}"' in dot


def test_event_hook_and_jsonl(tmp_path):
    seen = []
    dag = DagState.create(on_event=lambda ev, det: seen.append((ev, det)))
    add(dag, [dag.genesis_id] * 2, 0.3, 0.8, "a")
    assert seen[0][0] == "attach"
    path = tmp_path / "ev.jsonl"
    with open(path, "w") as fh:
        write_jsonl([{"event": e, **d} for e, d in seen], fh)
    assert json.loads(path.read_text().splitlines()[0])["issuer"] == "a"

from __future__ import annotations

import math

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from steplearn.fixtures import DATA_DIR, desk_tree7, ieee33_network, tree13
from steplearn.grid import (InvestmentPlan, ValidationError, count_plans, discount_factor,
                            enumerate_plans, load_network, load_tree, network_from_dict,
                            network_to_dict, save_network, save_tree, tree_from_dict,
                            tree_to_dict, validate_plan)
from steplearn.grid.io import ParseError
from steplearn.grid.plan import LEAD_TIME, PERSISTENCE, SINGLE_PAYMENT

TWO_BUS = {
    "name": "two-bus",
    "buses": [1, 2],
    "profiles": {"wind": [0.5], "solar": [0.0]},
    "lines": [{"id": "l1", "from": 1, "to": 2, "capacity": 10.0}],
    "generators": [{"id": "g1", "bus": 1, "kind": "thermal", "capacity": 10.0,
                    "marginal_cost": 5.0}],
    "loads": [{"id": "d2", "bus": 2, "profile": [8.0]}],
}


def _tree_doc(probs, parent="r"):
    nodes = [{"id": "r", "parent": None, "year": 0, "probability": 1.0}]
    nodes += [{"id": f"c{i}", "parent": parent, "year": 1, "probability": p}
              for i, p in enumerate(probs)]
    return {"nodes": nodes}


# -- networks -------------------------------------------------------------------

def test_ieee33_file_has_tie_line_candidate():
    net = load_network(DATA_DIR / "ieee33.network.yaml")
    cand = {ln.id: ln for ln in net.candidates}
    assert set(cand) == {33, 34, 35}
    ln = cand[35]
    assert (ln.from_bus, ln.to_bus, ln.capacity, ln.cost_per_mw) == (25, 29, 3.8, 100_000.0)
    assert net.horizon == 24


def test_two_bus_document_is_valid():
    net = network_from_dict(TWO_BUS)
    assert net.buses == (1, 2)
    assert net.horizon == 1
    assert net.candidates == ()


def test_dangling_bus_reference_rejected():
    doc = yaml.safe_load(yaml.safe_dump(TWO_BUS))
    doc["loads"][0]["bus"] = 99
    with pytest.raises(ValidationError, match="99"):
        network_from_dict(doc)


@pytest.mark.parametrize("field,value", [("capacity", -1.0), ("capacity", math.inf),
                                         ("marginal_cost", math.nan)])
def test_bad_generator_numbers_rejected(field, value):
    doc = yaml.safe_load(yaml.safe_dump(TWO_BUS))
    doc["generators"][0][field] = value
    with pytest.raises(ValidationError):
        network_from_dict(doc)


def test_profile_length_mismatch_rejected():
    doc = yaml.safe_load(yaml.safe_dump(TWO_BUS))
    doc["loads"][0]["profile"] = [8.0, 8.0]
    with pytest.raises(ValidationError):
        network_from_dict(doc)


def test_malformed_yaml_is_a_parse_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("buses: [1, 2\n")
    with pytest.raises(ParseError):
        load_network(p)


@pytest.mark.parametrize("make", [ieee33_network])
def test_network_round_trip(tmp_path, make):
    net = make()
    save_network(net, tmp_path / "n.yaml")
    again = load_network(tmp_path / "n.yaml")
    assert again == net
    assert network_to_dict(again) == network_to_dict(net)


# -- trees ------------------------------------------------------------------------

def test_three_children_tree_valid():
    tree = tree_from_dict(_tree_doc([0.4, 0.35, 0.25]))
    assert math.isclose(sum(nd.probability for nd in tree.leaves), 1.0)
    assert [nd.stage for nd in tree.nodes] == [0, 1, 1, 1]


def test_single_node_tree_valid():
    tree = tree_from_dict(_tree_doc([]))
    assert len(tree) == 1 and tree.is_leaf("r")


def test_children_exceeding_parent_rejected():
    with pytest.raises(ValidationError, match="sum"):
        tree_from_dict(_tree_doc([0.5, 0.6]))


@pytest.mark.parametrize("doc_patch,msg", [
    ({"reliability": 1.0}, "gamma"),
    ({"discount_rate": -1.5}, "exceed"),
    ({"voll": -1.0}, "voll"),
])
def test_tree_parameter_ranges(doc_patch, msg):
    doc = _tree_doc([1.0])
    doc.update(doc_patch)
    with pytest.raises(ValidationError, match=msg):
        tree_from_dict(doc)


def test_child_year_must_increase():
    doc = _tree_doc([1.0])
    doc["nodes"][1]["year"] = 0
    with pytest.raises(ValidationError, match="year"):
        tree_from_dict(doc)


def test_two_roots_rejected():
    doc = _tree_doc([1.0])
    doc["nodes"][1]["parent"] = None
    with pytest.raises(ValidationError, match="root"):
        tree_from_dict(doc)


@pytest.mark.parametrize("make", [desk_tree7, tree13])
def test_tree_round_trip_and_probability_identities(tmp_path, make):
    tree = make()
    save_tree(tree, tmp_path / "t.yaml")
    again = load_tree(tmp_path / "t.yaml")
    assert tree_to_dict(again) == tree_to_dict(tree)
    assert [nd.id for nd in again.nodes] == [nd.id for nd in tree.nodes]
    assert abs(sum(nd.probability for nd in again.leaves) - 1.0) <= 1e-9
    for nd in again.nodes:
        kids = again.children_of[nd.id]
        if kids:
            assert abs(sum(again.node(k).probability for k in kids) - nd.probability) <= 1e-9


def test_shipped_tree_files_match_builders():
    assert tree_to_dict(load_tree(DATA_DIR / "desk7.tree.yaml")) == tree_to_dict(desk_tree7())
    assert len(load_tree(DATA_DIR / "paths13.tree.yaml")) == 13


# -- discounting --------------------------------------------------------------------

def _node(prob, year):
    from steplearn.grid import TreeNode
    return TreeNode("x", None, 0, year, prob)


@pytest.mark.parametrize("prob,year,rate,expected", [
    (1.0, 0, 0.06, 1.0), (1.0, 0, 0.5, 1.0), (0.5, 10, 0.0, 0.5), (1.0, 1, 0.06, 1 / 1.06)])
def test_discount_factor(prob, year, rate, expected):
    assert discount_factor(_node(prob, year), rate) == pytest.approx(expected, abs=1e-12)


def test_discount_factor_rejects_rate_below_minus_one():
    with pytest.raises(ValueError):
        discount_factor(_node(1.0, 1), -1.0)


# -- plans ------------------------------------------------------------------------

def _lines():
    return (33, 34, 35)


def test_canonical_build_sequence_is_valid():
    tree = desk_tree7()
    new = np.zeros((len(tree), 1), dtype=np.int8)
    new[tree.index["R"], 0] = 1
    plan = InvestmentPlan.from_new(tree, (35,), new)
    assert plan.invest[tree.index["R"], 0] == 1
    for nd in tree.nodes:
        if nd.parent is not None:
            assert plan.built[tree.index[nd.id], 0] == 1
    assert validate_plan(plan, tree) == []


def test_persistence_violation_reported():
    tree = desk_tree7()
    new = np.zeros((len(tree), 1), dtype=np.int8)
    new[tree.index["R"], 0] = 1
    plan = InvestmentPlan.from_new(tree, (35,), new)
    built = plan.built.copy()
    built[tree.index["A2"], 0] = 0
    inv = plan.invest.copy()
    inv[tree.index["A2"], 0] = 0
    bad = InvestmentPlan(plan.node_ids, plan.line_ids, inv, built, plan.new)
    kinds = {v.kind for v in validate_plan(bad, tree)}
    assert PERSISTENCE in kinds


def test_single_payment_arithmetic_violation():
    tree = desk_tree7()
    plan = InvestmentPlan.from_new(tree, (35,), np.zeros((len(tree), 1)))
    i = tree.index["A1"]
    inv, built, new = (np.array(a) for a in (plan.invest, plan.built, plan.new))
    inv[i], built[i], new[i] = 1, 1, 1
    kinds = {v.kind for v in validate_plan(InvestmentPlan(plan.node_ids, (35,), inv, built, new),
                                           tree)}
    assert SINGLE_PAYMENT in kinds


def test_plan_count_matches_enumeration():
    tree = desk_tree7()
    plans = enumerate_plans(tree, (35,))
    assert len(plans) == count_plans(tree, 1)
    keys = {p.new.tobytes() for p in plans}
    assert len(keys) == len(plans)
    assert all(validate_plan(p, tree) == [] for p in plans)


@given(st.data())
def test_random_consistent_plans_pass_and_built_flips_fail(data):
    tree = desk_tree7()
    plans = enumerate_plans(tree, _lines())
    plan = plans[data.draw(st.integers(0, len(plans) - 1))]
    assert validate_plan(plan, tree) == []
    i = data.draw(st.integers(0, len(tree) - 1))
    k = data.draw(st.integers(0, 2))
    built = np.array(plan.built)
    built[i, k] ^= 1
    flipped = InvestmentPlan(plan.node_ids, plan.line_ids, plan.invest, built, plan.new)
    assert validate_plan(flipped, tree) != []


def test_lead_time_violation_kind():
    tree = desk_tree7()
    plan = InvestmentPlan.from_new(tree, (35,), np.zeros((len(tree), 1)))
    built = np.array(plan.built)
    inv = np.array(plan.invest)
    i = tree.index["B1"]
    built[i], inv[i] = 1, 1
    kinds = {v.kind for v in validate_plan(InvestmentPlan(plan.node_ids, (35,), inv, built,
                                                          plan.new), tree)}
    assert LEAD_TIME in kinds


def test_tree_survives_pickling():
    import pickle
    tree = tree13()
    again = pickle.loads(pickle.dumps(tree))
    assert tree_to_dict(again) == tree_to_dict(tree)
    assert dict(again.nodes[1].generator_multipliers) == dict(tree.nodes[1].generator_multipliers)
    with pytest.raises(TypeError):
        again.nodes[1].generator_multipliers["x"] = 1.0

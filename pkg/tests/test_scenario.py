import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dmarket import PricingPolicy, ScenarioError, validate_scenario
from d2dmarket.scenario import TIE_EPS, load_scenario, pi_structure, random_scenario

from conftest import scenario_a_doc, two_user_doc


def test_well_formed_single_user_catalog_is_accepted():
    s = validate_scenario(scenario_a_doc())
    assert (s.n_users, s.n_contents) == (1, 5)
    assert s.beta == 0.75 and s.price_cap == 1.0


def test_out_of_range_freshness_names_field_and_index():
    doc = scenario_a_doc()
    doc["freshness"] = [1.0, 0.95, 1.2, 0.85, 0.8]
    with pytest.raises(ScenarioError, match=r"freshness\[2\]"):
        validate_scenario(doc)


@pytest.mark.parametrize(
    "mutate, pattern",
    [
        (lambda d: d.update(sizes=[100, 100]), "sizes has 2"),
        (lambda d: d.update(sizes=[100, 0, 100, 100, 100]), r"sizes\[1\]"),
        (lambda d: d["users"][0].update(interests=[1, 1, 1]), "interests has 3"),
        (lambda d: d["users"][0].update(interests=[1, 1, -0.1, 1, 1]), r"interests\[2\]"),
        (lambda d: d["users"][0].update(offpeak_load=-1), "offpeak_load"),
        (lambda d: d.update(beta=0), "beta"),
        (lambda d: d.update(price_cap=-1), "price_cap"),
        (lambda d: d.update(connectivity=1.5), "connectivity"),
        (lambda d: d.pop("sizes"), "missing"),
        (lambda d: d.update(users=[]), "at least one user"),
    ],
)
def test_invalid_documents_are_rejected(mutate, pattern):
    doc = json.loads(json.dumps(scenario_a_doc()))
    mutate(doc)
    with pytest.raises(ScenarioError, match=pattern):
        validate_scenario(doc)


def test_connectivity_matrix_needs_zero_diagonal():
    doc = two_user_doc()
    doc["connectivity"] = [[0.5, 1.0], [1.0, 0.0]]
    with pytest.raises(ScenarioError, match="diagonal"):
        validate_scenario(doc)


def test_scalar_connectivity_fills_off_diagonal():
    s = validate_scenario(two_user_doc(0.4))
    assert s.omega.tolist() == [[0.0, 0.4], [0.4, 0.0]]


def test_equal_interests_break_ties_by_user_index_without_touching_pi():
    doc = two_user_doc()
    doc["users"][1]["interests"] = [1.0] * 5
    s = validate_scenario(doc)
    assert np.array_equal(s.pis.pi[0], s.pis.pi[1])
    assert np.all(s.pis.top_user == 0)
    assert np.allclose(s.pis.ordering[1] - s.pis.ordering[0], -TIE_EPS)


def test_pi_single_product():
    s = validate_scenario(
        {"sizes": [1], "freshness": [1.0], "users": [{"interests": [0.5]}], "beta": 1, "price_cap": 1}
    )
    assert s.pis.pi.tolist() == [[0.5]]
    assert s.pis.sorted_disconnected.tolist() == [1.0, 0.5]


def test_pi_products_multiply_freshness_and_interest():
    s = validate_scenario(
        {"sizes": [1, 1], "freshness": [0.9, 0.8], "users": [{"interests": [1.0, 0.5]}],
         "beta": 1, "price_cap": 1}
    )
    assert np.allclose(s.pis.pi, [[0.9, 0.4]])
    assert np.allclose(s.pis.sorted_disconnected, [1.0, 0.9, 0.4])


def test_two_user_structure_uses_per_content_maxima(two_users):
    pis = two_users.pis
    assert pis.top_user.tolist() == [0] * 5
    assert np.allclose(pis.sorted_connected, [1.0, 0.9])


def test_pi_structure_is_deterministic(two_users):
    a, b = pi_structure(two_users), pi_structure(two_users)
    for name in ("pi", "sorted_disconnected", "sorted_connected", "top_user"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pi_structure_invariants(seed):
    s = random_scenario(np.random.default_rng(seed), 4, 4)
    pis = s.pis
    for seq in (pis.sorted_disconnected, pis.sorted_connected):
        assert seq[0] == 1.0
        assert np.all(np.diff(seq) < 0)
        assert np.all((seq >= 0) & (seq <= 1))
    assert set(pis.sorted_connected[1:]) <= set(pis.sorted_disconnected)
    cols = np.arange(s.n_contents)
    assert np.all(pis.ordering[pis.top_user, cols][None, :] >= pis.ordering)


def test_policy_bounds():
    with pytest.raises(ScenarioError):
        PricingPolicy(0.5, 1.0, 1.5)
    with pytest.raises(ScenarioError):
        PricingPolicy(1.2, 1.0, 0.0).check(1.0)


def test_scenario_arrays_are_read_only(scenario_a):
    with pytest.raises(ValueError):
        scenario_a.sizes[0] = 1.0


def test_yaml_and_json_documents_load_alike(tmp_path):
    import yaml

    doc = two_user_doc(0.3)
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(doc))
    (tmp_path / "s.json").write_text(json.dumps({"scenario": doc}))
    a, b = load_scenario(tmp_path / "s.yaml"), load_scenario(tmp_path / "s.json")
    assert a.to_document() == b.to_document()

import math

import pytest

from hqnet.engine import ScenarioError
from hqnet.cli import rows_to_csv
from hqnet.scenarios import (COLUMNS, REGISTRY, ScenarioConfig, check_keys, header,
                             run_scenario, trial_seeds)


def _run(name, **kw):
    return run_scenario(ScenarioConfig(name, **kw))


def test_maintenance_cost_ratio_is_four():
    rows = _run("maintenance-cost")
    assert [r["param_value"] for r in rows] == [1, 2, 3, 4, 5, 6]
    assert all(r["ratio"] == 4 for r in rows)
    assert all(r["distributed_cost"] > r["hierarchical_cost"] for r in rows)


def test_control_overhead_linear():
    rows = _run("control-overhead", qps_values=(0, 500, 1000))
    loads = [r["control_load_bytes_per_s"] for r in rows]
    assert loads == [0, 150e6, 300e6]


def test_routing_cost_greedy_uses_five_pairs():
    rows = {r["series"]: r for r in _run("routing-cost", trials=1, sessions=20)}
    assert rows["greedy"]["pairs_consumed_mean"] == 5
    assert rows["slmp"]["quantum_link_count"] == 26


def test_rows_start_with_fixed_columns():
    rows = _run("routing-equivalent", trials=1, sessions=5)
    assert header(rows)[:len(COLUMNS)] == list(COLUMNS)
    assert header(rows)[len(COLUMNS)] == "series"
    assert {r["series"] for r in rows} == {"cer", "greedy", "qcast", "slmp"}


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_reruns_are_bit_identical(name):
    kw = {} if name in ("maintenance-cost", "control-overhead") else dict(trials=1, sessions=4)
    if name == "cer-integrated":
        kw.update(dephasing_std=(0.1,), loss_init_std=(0.05,), loss_noise_std=(0.003, 0.005))
    assert rows_to_csv(_run(name, seed=11, **kw)) == rows_to_csv(_run(name, seed=11, **kw))


def test_seed_changes_output():
    a = rows_to_csv(_run("routing-equivalent", seed=1, trials=1, sessions=20))
    b = rows_to_csv(_run("routing-equivalent", seed=2, trials=1, sessions=20))
    assert a != b


def test_trial_seeds_are_stable():
    s1, g1 = trial_seeds(5, "x", 0)
    s2, g2 = trial_seeds(5, "x", 0)
    assert s1 == s2 and g1.random() == g2.random()
    assert trial_seeds(5, "x", 1)[0] != s1
    assert trial_seeds(5, "y", 0)[0] != s1


@pytest.mark.parametrize("kw", [dict(trials=0), dict(sessions=0), dict(seed=-1),
                                dict(workers=0), dict(algorithms=("dijkstra",)),
                                dict(loss_init=1.5), dict(steps=1), dict(group_spread=0.3)])
def test_invalid_config(kw):
    with pytest.raises(ScenarioError):
        ScenarioConfig("routing-cost", **kw)


def test_unknown_scenario():
    with pytest.raises(ScenarioError):
        ScenarioConfig("teleport-party")


def test_check_keys():
    check_keys("routing-cost", ["trials", "algorithms"])
    with pytest.raises(ScenarioError, match="unknown key"):
        check_keys("routing-cost", ["colour"])
    with pytest.raises(ScenarioError, match="not used"):
        check_keys("maintenance-cost", ["algorithms"])


def test_distributed_scheme_rejected():
    with pytest.raises(ScenarioError):
        _run("routing-cost", scheme="dp-depd", trials=1)


def test_env_importance_rows():
    rows = _run("env-importance", trials=1, sessions=30)
    assert len(rows) == 9
    for r in rows:
        assert r["repeaters"] == (5 if r["series"] == "path-B" else 4)
        if r["series"] == "path-B":
            assert r["gap_from_path_B"] == 0


def test_epd_comparison_shape():
    rows = _run("epd-comparison", trials=1, sessions=20, memory_ratios=(1, 8))
    assert len(rows) == 6
    w = [r for r in rows if r["series"] == "wstate-cepd"]
    assert all(not math.isnan(r["gain_vs_dp-cepd_pct"]) for r in w)


def test_channel_vs_dephasing_endpoints():
    rows = _run("channel-vs-dephasing", trials=1, sessions=5, steps=3)
    cq = sorted(r["param_value"] for r in rows if r["param_name"] == "channel_quality")
    dp = sorted(r["param_value"] for r in rows if r["param_name"] == "dephasing_rate")
    assert cq[0] == pytest.approx(0.85) and cq[-1] == 1
    assert dp == pytest.approx([0, 0.075, 0.15])

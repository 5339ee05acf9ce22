import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqnet.control import CentralStateMatrix
from hqnet.routing import (
    NoPathFound, annotate, cer_route, greedy_route, has_consecutive_same_domain, path_score,
    qcast_route, score_repeater, slmp_route,
)
from hqnet.topology import Topology, build_dspt_dert, build_hierarchical_cellular

T = build_hierarchical_cellular(2)
DSPT, DERT = build_dspt_dert(T)


def _csm(link=None, swap=None):
    """Matrix whose windows hold the given success fractions (tenths)."""
    csm = CentralStateMatrix(T)
    for name, frac in (link or {}).items():
        for i in range(10):
            csm.update_link_state(name, i < round(frac * 10))
    for name, frac in (swap or {}).items():
        for i in range(10):
            csm.update_swap_rate(name, i < round(frac * 10))
    return csm


def test_score_repeater():
    assert score_repeater(0.9, 0.8) == pytest.approx(0.83)
    assert score_repeater(1, 1) == 1
    assert score_repeater(0, 1) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        score_repeater(1.2, 0)


def test_cer_equivalent_network_picks_shortest():
    res = cer_route(_csm(), DSPT, DERT, "U_A", "U_B")
    assert res.path.hops == 5
    five = [c for c in res.candidates if c.hops == 5]
    assert len(five) == 6
    assert res.candidates[0].hops == 5
    assert len(res.candidates) > 6  # replacement rounds widened the set


def test_cer_eliminates_consecutive_same_domain():
    # U_A, R_A, R_B all sit in domain A
    assert has_consecutive_same_domain(T, ("U_A", "R_A", "R_B", "R_F"))
    res = cer_route(_csm(), DSPT, DERT, "U_A", "U_B")
    for c in res.candidates:
        assert not has_consecutive_same_domain(T, c.path.devices)


def test_cer_keeps_discontinuous_same_domain():
    # domain B is visited by R_A, R_D and R_C, never three in a row
    devs = ("U_A", "R_A", "R_D", "R_H", "R_E", "R_C")
    assert not has_consecutive_same_domain(T, devs)
    assert has_consecutive_same_domain(T, ("R_A", "R_D", "R_C"))


def test_cer_avoids_degraded_repeater():
    base = {r: 0.9 for r in T.repeaters}
    base["R_D"] = 0.1
    res = cer_route(_csm(link=base, swap={r: 0.9 for r in T.repeaters}), DSPT, DERT, "U_A", "U_B")
    assert "R_D" not in res.path.devices
    assert res.path.hops == 5


def test_cer_excludes_maintained():
    csm = _csm()
    for r in ("R_A", "R_B"):
        csm.mark_maintain(r)
    with pytest.raises(NoPathFound):
        cer_route(csm, DSPT, DERT, "U_A", "U_B")


def test_cer_cache_matches_uncached():
    csm = _csm(link={"R_E": 0.3})
    cache = {}
    a = cer_route(csm, DSPT, DERT, "U_A", "U_B", cache=cache)
    b = cer_route(csm, DSPT, DERT, "U_A", "U_B", cache=cache)
    c = cer_route(csm, DSPT, DERT, "U_A", "U_B")
    assert a.path == b.path == c.path and len(cache) == 1


def test_path_score_definition():
    csm = _csm(link={"R_A": 0.5})
    devs = ("U_A", "R_A", "R_C", "R_E", "R_J", "U_B")
    want = sum(score_repeater(csm.swap_rate(d), csm.link_state(d)) for d in devs) / 5
    assert path_score(csm, devs) == pytest.approx(want)


def test_greedy():
    res = greedy_route(T, "U_A", "U_B")
    assert res.path.hops == 5 and res.consumption == 5
    assert greedy_route(T, "U_A", "U_A").path.devices == ()
    cut = Topology(T.mode, [d for d in T.devices.values() if d.id not in ("R_A", "R_B")],
                   [c for c in list(T.qchannels.values()) + list(T.cchannels.values())
                    if not {c.a, c.b} & {"R_A", "R_B"}])
    with pytest.raises(NoPathFound):
        greedy_route(cut, "U_A", "U_B")


def test_slmp():
    rng = np.random.default_rng(0)
    res = slmp_route(T, "U_A", "U_B", rng)
    assert res.path.devices == greedy_route(T, "U_A", "U_B").path.devices
    assert res.consumption == T.link_count()
    with pytest.raises(NoPathFound):
        slmp_route(T, "U_A", "U_B", rng, link_success=lambda a, b: 0.0)


def test_qcast():
    g = greedy_route(T, "U_A", "U_B")
    res = qcast_route(T, CentralStateMatrix(T), "U_A", "U_B")
    assert res.consumption == 5 and res.path.devices == g.path.devices
    seg = res.path.segments[2]
    forced = qcast_route(T, CentralStateMatrix(T), "U_A", "U_B", fail_segments=[seg])
    assert forced.used_detours == [seg]
    assert forced.consumption > 5
    a, b = seg
    devs = forced.path.devices
    assert devs.index(b) - devs.index(a) > 1  # the detour sits between the two ends


def test_qcast_mean_consumption():
    rng = np.random.default_rng(1)
    costs = [qcast_route(T, None, "U_A", "U_B", rng, lambda a, b: 0.98).consumption
             for _ in range(2000)]
    assert 5.0 <= np.mean(costs) <= 5.4


def test_route_time_ordering():
    rng = np.random.default_rng(2)
    times = [greedy_route(T, "U_A", "U_B").time_ms,
             qcast_route(T, CentralStateMatrix(T), "U_A", "U_B").time_ms,
             cer_route(_csm(), DSPT, DERT, "U_A", "U_B").time_ms,
             slmp_route(T, "U_A", "U_B", rng).time_ms]
    assert times == sorted(times) and len(set(times)) == 4


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from(T.repeaters), st.sampled_from([0.1, 0.5, 0.8, 1.0])),
       st.sampled_from(T.repeaters))
def test_cer_paths_valid(link, down):
    csm = _csm(link=link)
    csm.mark_maintain(down)
    res = cer_route(csm, DSPT, DERT, "U_A", "U_B")
    g = T.link_graph()
    for c in res.candidates:
        devs = c.path.devices
        assert devs[0] == "U_A" and devs[-1] == "U_B"
        assert down not in devs
        assert all(g.has_edge(a, b) for a, b in zip(devs, devs[1:]))
        assert c.score == pytest.approx(path_score(csm, devs))
    keys = [c.sort_key() for c in res.candidates]
    assert keys == sorted(keys)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from([0.2, 0.4, 0.6, 0.8, 1.0]), min_size=12, max_size=12))
def test_scale_invariance(fracs):
    """Halving every link and swap rate keeps CER's ordering."""
    full = dict(zip(T.repeaters, fracs))
    half = {r: f / 2 for r, f in full.items()}
    users = {"U_A": 1.0, "U_B": 1.0}
    a = cer_route(_csm(link={**full, **users}, swap={**full, **users}), DSPT, DERT, "U_A", "U_B")
    b = cer_route(_csm(link={**half, "U_A": 0.5, "U_B": 0.5},
                       swap={**half, "U_A": 0.5, "U_B": 0.5}), DSPT, DERT, "U_A", "U_B")
    assert [c.path.devices for c in a.candidates] == [c.path.devices for c in b.candidates]


def test_annotate_rejects_unshared():
    with pytest.raises(Exception):
        annotate(T, ("U_A", "U_B"))

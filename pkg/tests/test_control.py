import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqnet.control import (
    FIELDS, IDLE, MAINTAIN, OCCUPY, CentralStateMatrix, ControlError, RateWindow,
    ReservationFailure, report_lsm, reserve_memories,
)
from hqnet.routing import annotate, cer_route
from hqnet.topology import build_dspt_dert, build_hierarchical_cellular

T = build_hierarchical_cellular(2)
DSPT, DERT = build_dspt_dert(T)
PATH = ("U_A", "R_A", "R_C", "R_E", "R_J", "U_B")


@pytest.fixture
def csm():
    return CentralStateMatrix(T)


def test_report_roundtrip_and_order(csm):
    lsm = csm.lsm("A")
    before = csm.state_key()
    csm.report_lsm(lsm)
    assert csm.state_key() == before

    a, b = CentralStateMatrix(T), CentralStateMatrix(T)
    la, lb = csm.lsm("A"), csm.lsm("E")
    la.devices["R_A"].state = MAINTAIN
    lb.devices["R_D"].link_window.add(False)
    report_lsm(report_lsm(a, la), lb)
    report_lsm(report_lsm(b, lb), la)
    assert a.state_key() == b.state_key()


def test_report_maintain_excludes_from_routing(csm):
    lsm = csm.lsm("A")
    lsm.devices["R_A"].state = MAINTAIN
    csm.report_lsm(lsm)
    for c in cer_route(csm, DSPT, DERT, "U_A", "U_B").candidates:
        assert "R_A" not in c.path.devices


def test_report_unknown_domain(csm):
    lsm = csm.lsm("A")
    lsm.domain = "ZZ"
    with pytest.raises(ControlError):
        csm.report_lsm(lsm)


def test_reserve_complete_path(csm):
    cp = reserve_memories(csm, annotate(T, PATH), "s1")
    assert len(cp.segment_memories) == 5
    for lc, mems in cp.segment_memories:
        assert lc.startswith("LC_") and len(mems) == 2
    for r in PATH[1:-1]:
        assert len(cp.device_memories(PATH.index(r))) == 2
    assert cp.device_memories(0) == ("um_1",)
    # two domain segments served by one controller take four memories there
    assert len(csm.occupied("s1")) == 2 + 4 * 2 + 5 * 2
    assert "U_A[" in str(cp) and "um_1" in str(cp)


def test_reserve_all_or_nothing(csm):
    for m in csm["R_C"].memories:
        m.state = OCCUPY
        m.aim_communication = "other"
    before = csm.state_key()
    with pytest.raises(ReservationFailure) as err:
        csm.reserve_memories(annotate(T, PATH), "s1")
    assert err.value.device == "R_C"
    assert csm.state_key() == before


def test_reserve_contention_one_winner(csm):
    for m in csm["R_C"].memories[2:]:
        m.state = OCCUPY
    results = []

    def go(name):
        try:
            csm.reserve_memories(annotate(T, PATH), name)
            results.append(name)
        except ReservationFailure:
            pass

    threads = [threading.Thread(target=go, args=(f"s{i}",)) for i in range(2)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert len(results) == 1


def test_link_state_window(csm):
    assert csm.link_state("R_A") == 1.0
    for ok in [True] * 8 + [False] * 2:
        csm.update_link_state("R_A", ok)
    assert csm.link_state("R_A") == pytest.approx(0.8)
    for i in range(100):
        csm.update_link_state("R_B", i % 2 == 0)
    assert csm.link_state("R_B") == pytest.approx(0.5, abs=0.02)


def test_swap_rate(csm):
    assert csm.swap_rate("R_A") == 1.0
    for ok in [True] * 9 + [False]:
        csm.update_swap_rate("R_A", ok)
    assert csm.swap_rate("R_A") == pytest.approx(0.9)
    rng = np.random.default_rng(3)
    for _ in range(200):
        csm.update_swap_rate("R_B", rng.random() < 0.7)
    assert csm.swap_rate("R_B") == pytest.approx(0.7, abs=0.05)


def test_mark_maintain_and_release(csm):
    csm.mark_maintain("R_E")
    assert csm.maintained() == {"R_E"}
    best = cer_route(csm, DSPT, DERT, "U_A", "U_B")
    assert all("R_E" not in c.path.devices for c in best.candidates)
    with pytest.raises(ReservationFailure):
        csm.reserve_memories(annotate(T, PATH), "s1")
    csm.mark_normal("R_E")
    csm.reserve_memories(annotate(T, PATH), "s1")
    n = csm.release_memories("s1")
    assert n == 20
    assert csm.occupied() == []
    assert csm.release_memories("s1") == 0
    with pytest.raises(ControlError):
        csm.release_memories("never")
    with pytest.raises(ControlError):
        csm.mark_maintain("nope")


def test_set_pair_requires_occupied(csm):
    with pytest.raises(ControlError):
        csm.set_pair("U_A", "um_1", "R_A", "rm_1")
    cp = csm.reserve_memories(annotate(T, PATH), "s1")
    left, right = cp.endpoint_memories[0]
    csm.set_pair("U_A", left, "R_A", right)
    assert csm["U_A"].memory(left).aim_pair == f"R_A.{right}"
    csm.release_memories("s1")
    assert csm["U_A"].memory(left).aim_pair is None


def test_dump_has_all_fields(csm):
    lines = csm.dump().splitlines()
    for f in FIELDS:
        assert f in lines[0]
    assert len(lines) == 1 + len(csm.devices)


def test_rate_window_bounded():
    w = RateWindow(5)
    for _ in range(10):
        w.add(False)
    assert len(w) == 5 and w.value == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["reserve", "release"]), st.integers(0, 3)),
                max_size=30))
def test_conservation(ops):
    """Whatever the interleaving, releasing every session empties the matrix."""
    csm = CentralStateMatrix(T)
    opened = set()
    for op, k in ops:
        s = f"s{k}"
        if op == "reserve":
            before = csm.state_key()
            try:
                csm.reserve_memories(annotate(T, PATH), s)
                opened.add(s)
            except ReservationFailure:
                assert csm.state_key() == before
        elif s in opened:
            csm.release_memories(s)
        for d in csm.devices.values():
            for m in d.memories:
                assert (m.state == IDLE) == (m.aim_communication is None)
    for s in opened:
        csm.release_memories(s)
    assert csm.occupied() == []

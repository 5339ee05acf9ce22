import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqnet.distribution import (
    DP_CEPD, DP_DEPD, MIDPOINT_SOURCE, SENDER_RECEIVER, WSTATE, DistributionRequest,
    SchemeConfigError, SegmentModel, WStateComponents, distribute, distribute_chain,
    double_photon_cepd, depd_meet_in_middle, depd_midpoint_source, depd_sender_receiver,
    segment_model, success_prob, wstate_cepd, xor_prob,
)
from hqnet.noise import ComponentProbs, EnvParams, epr_distribution_prob
from hqnet.topology import build_distributed_cellular, build_hierarchical_cellular

REQ = DistributionRequest(WSTATE, "LC_A", (("x", "m1"), ("y", "m2")))


def _req(scheme):
    return DistributionRequest(scheme, "p", (("x", "m1"), ("y", "m2")))


def _freq(fn, n, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return sum(fn(rng, **kw).success for _ in range(n)) / n


def test_wstate_perfect_and_kernel_validated():
    res = wstate_cepd(REQ, SegmentModel(), np.random.default_rng(0), validate=True)
    assert res.success and res.werner == 1.0
    assert res.kernel_fidelity == pytest.approx(1.0, abs=1e-12)
    assert (res.ops, res.photons) == (5, 4)


def test_wstate_matches_product_formula():
    c = ComponentProbs(p_w=0.9, p_qchannel=0.95, p_bsm=0.9, p_p_swap=0.9, p_a_swap=0.9)
    comp = WStateComponents.from_probs(c)
    freq = _freq(lambda rng: wstate_cepd(REQ, comp, rng), 100_000, seed=1)
    assert freq == pytest.approx(epr_distribution_prob(c), abs=0.01)


def test_wstate_silent_fault_replayed_on_kernel():
    comp = WStateComponents(p_bsm=(0.0, 1.0))  # side a always takes a Z error
    res = wstate_cepd(REQ, comp, np.random.default_rng(0), op_fault="silent", validate=True)
    assert res.success and res.flipped
    assert res.kernel_fidelity == pytest.approx(0.0, abs=1e-12)


def test_wstate_residual_policy():
    freq = _freq(lambda rng: wstate_cepd(REQ, SegmentModel(), rng, residual_policy="fail"),
                 30_000, seed=2)
    assert freq == pytest.approx(4 / 9, abs=0.01)
    with pytest.raises(SchemeConfigError):
        wstate_cepd(REQ, SegmentModel(), np.random.default_rng(0), residual_policy="salvage")


@pytest.mark.parametrize("scheme,ops,photons", [(WSTATE, 11, 8), (DP_CEPD, 1, 4), (DP_DEPD, 3, 4)])
def test_two_segment_counters(scheme, ops, photons):
    c = distribute_chain(scheme, [SegmentModel()] * 2, np.random.default_rng(0))
    assert c.success and (c.ops, c.photons) == (ops, photons)


def test_counters_stop_at_failed_stage():
    res = double_photon_cepd(_req(DP_CEPD), SegmentModel(p_leg=(0.0, 1.0)),
                             np.random.default_rng(0))
    assert not res.success and res.failed_stage == "transmit"
    assert (res.ops, res.photons) == (0, 2)
    res = wstate_cepd(REQ, WStateComponents(p_w=0.0), np.random.default_rng(0))
    assert res.failed_stage == "prepare" and res.photons == 0


def test_double_photon_success_law():
    assert _freq(lambda rng: double_photon_cepd(_req(DP_CEPD), SegmentModel(), rng), 100) == 1
    p = 0.8
    m = SegmentModel(p_leg=(p, p))
    freq = _freq(lambda rng: double_photon_cepd(_req(DP_CEPD), m, rng), 100_000, seed=3)
    assert freq == pytest.approx(p * p, abs=0.01)


def test_sender_receiver_law():
    p = 0.7
    m = SegmentModel(p_leg=(p, p))
    freq = _freq(lambda rng: depd_sender_receiver(_req(SENDER_RECEIVER), m, rng), 100_000, 4)
    assert freq == pytest.approx(p, abs=0.01)
    assert depd_sender_receiver(_req(SENDER_RECEIVER), SegmentModel(),
                                np.random.default_rng(0)).photons == 1


def test_meet_in_middle_perfect():
    res = depd_meet_in_middle(_req(DP_DEPD), SegmentModel(), np.random.default_rng(0))
    assert res.success and res.werner == 1.0 and (res.ops, res.photons) == (1, 2)


def test_midpoint_source_counters():
    res = depd_midpoint_source(_req(MIDPOINT_SOURCE), SegmentModel(), np.random.default_rng(0))
    assert res.success and (res.ops, res.photons) == (2, 2)


@pytest.mark.parametrize("scheme", [WSTATE, DP_CEPD, SENDER_RECEIVER, DP_DEPD, MIDPOINT_SOURCE])
def test_closed_form_success(scheme):
    m = SegmentModel(p_leg=(0.9, 0.8), p_prep=0.95, dephasing=(0.05, 0.1, 0.02))
    freq = _freq(lambda rng: distribute(_req(scheme), m, rng), 50_000, seed=5)
    assert freq == pytest.approx(success_prob(scheme, m), abs=0.01)


def test_mixed_mode_carries_weight():
    m = SegmentModel(dephasing=(0.1, 0.2, 0.0))
    res = depd_midpoint_source(_req(MIDPOINT_SOURCE), m, np.random.default_rng(0),
                               op_fault="mixed")
    assert res.success and res.flip_prob == pytest.approx(xor_prob(0.1, 0.2))
    assert res.fidelity == pytest.approx(1 - xor_prob(0.1, 0.2))


def test_xor_prob():
    assert xor_prob(0, 0.3) == 0.3
    assert xor_prob(1, 0.3) == pytest.approx(0.7)
    assert xor_prob(0.5, 0.9) == pytest.approx(0.5)


def test_segment_model_modes():
    env = EnvParams(0.1, 0.01, 1e-4, 1e-5)
    h = build_hierarchical_cellular(2, env=env)
    m = segment_model(h, "U_A", "R_A", DP_CEPD)
    assert m.p_leg[0] == pytest.approx((1 - 1e-4) * 10 ** (-1e-5 * 100 / 10))
    assert m.flight_ms == (0.5, 0.5)
    d = build_distributed_cellular(2, env=env)
    with pytest.raises(SchemeConfigError):
        segment_model(d, "U_A", "R_AS", DP_CEPD)
    dm = segment_model(d, "U_A", "R_AS", DP_DEPD)
    assert dm.flight_ms == (0.25, 0.25)
    with pytest.raises(SchemeConfigError):
        segment_model(h, "U_A", "R_A", DP_DEPD)


def test_unknown_scheme():
    with pytest.raises(SchemeConfigError):
        DistributionRequest("teleporter", "p", (("x", "m"), ("y", "m")))
    with pytest.raises(SchemeConfigError):
        distribute(_req(DP_CEPD), SegmentModel(), np.random.default_rng(0), op_fault="loud")


probs = st.floats(0.05, 1)


@settings(max_examples=15, deadline=None)
@given(probs, probs, probs, probs, probs)
def test_wstate_product_law_any_setting(pw, pq, pb, pp, pa):
    c = ComponentProbs(pw, pq, pb, pp, pa)
    comp = WStateComponents.from_probs(c)
    n = 20_000
    freq = _freq(lambda rng: wstate_cepd(REQ, comp, rng), n, seed=6)
    p = epr_distribution_prob(c)
    assert abs(freq - p) <= 5 * math.sqrt(p * (1 - p) / n) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([WSTATE, DP_CEPD, DP_DEPD]), st.floats(0, 0.5), st.floats(0, 0.25),
       st.floats(0, 0.25))
def test_fidelity_monotone_in_noise(scheme, decay, deph, extra):
    """More memory decay or more dephasing never raises the delivered fidelity.

    Dephasing stays at or below 1/2, where a flip is never more likely than no flip.
    """
    def fid(dc, dp):
        m = SegmentModel(decay_per_ms=(dc, dc), dephasing=(dp, dp, dp))
        return distribute(_req(scheme), m, np.random.default_rng(0), op_fault="mixed").fidelity
    base = fid(decay, deph)
    assert fid(decay + extra, deph) <= base + 1e-12
    assert fid(decay, deph + extra) <= base + 1e-12

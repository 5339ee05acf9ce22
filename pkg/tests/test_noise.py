import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hqnet.noise import (
    ClampedNoiseWarning, ComponentProbs, EnvParams, NoiseParamError, channel_quality,
    channel_success_prob, decohere_fidelity, epr_distribution_prob, op_ratio, op_success_prob,
    step_probs, teleport_fidelity, wstate_param_map,
)

prob = st.floats(0, 1)


def test_channel_success_values():
    assert channel_success_prob(0, 0, 100) == 1.0
    # frozen from (1 - 1e-4) * 10 ** (-1e-5 * 100 / 10)
    assert channel_success_prob(0.0001, 1e-5, 100) == pytest.approx(0.99967, abs=1e-5)
    assert channel_success_prob(0, 0.2, 100) == pytest.approx(0.01)
    assert channel_success_prob(0, 0.2, 100) ** 4 == pytest.approx(1e-8)


@pytest.mark.parametrize("args", [(-0.1, 0, 100), (1.1, 0, 100), (0, -1, 100), (0, 0, 0)])
def test_channel_success_rejects(args):
    with pytest.raises(NoiseParamError):
        channel_success_prob(*args)


def test_epr_distribution_worked_example():
    c = ComponentProbs(p_w=0.9, p_qchannel=0.95, p_bsm=0.9, p_p_swap=0.9, p_a_swap=0.9)
    assert epr_distribution_prob(c) == pytest.approx(0.81 * 0.9025 * 0.81 * 0.81 * 0.9, rel=1e-12)
    assert epr_distribution_prob(c) == pytest.approx(0.4317, abs=1e-4)
    assert epr_distribution_prob(ComponentProbs()) == 1.0


def test_epr_distribution_monte_carlo():
    c = ComponentProbs(p_w=0.9, p_qchannel=0.95, p_bsm=0.9, p_p_swap=0.9, p_a_swap=0.9)
    rng = np.random.default_rng(11)
    n = 100_000
    # one Bernoulli draw per physical event: 2 preparations, 2 photons, 2 BSMs, 2 photon swaps, 1 atom swap
    probs = np.array([c.p_w] * 2 + [c.p_qchannel] * 2 + [c.p_bsm] * 2 + [c.p_p_swap] * 2
                     + [c.p_a_swap])
    ok = (rng.random((n, probs.size)) < probs).all(axis=1)
    assert ok.mean() == pytest.approx(epr_distribution_prob(c), abs=0.01)


def test_channel_quality_values():
    assert channel_quality(0, 0) == 1.0
    assert channel_quality(0.2, 0.02) == 0.85
    assert channel_quality(1, 0.2) == 0.0


def test_channel_quality_clamps():
    with pytest.warns(ClampedNoiseWarning):
        assert channel_quality(0, 0.5) == channel_quality(0, 0.2)


def test_wstate_param_map_values():
    base = EnvParams(depolarizing_rate=0.1, dephasing_rate=0.01, loss_init=0.0001, loss_noise=1e-5)
    assert op_ratio(4) == 8
    mapped = wstate_param_map(base, 5, 4)
    assert mapped.depolarizing_rate == pytest.approx(0.02)
    assert abs(mapped.dephasing_rate - (1 - 0.99 ** 8)) < 1e-10
    assert mapped.dephasing_rate == pytest.approx(0.07726, abs=1e-5)
    assert mapped.loss_init == 1 - (1 - 0.0001) ** 2
    assert mapped.loss_init == pytest.approx(1.9999e-4, rel=1e-9)
    assert mapped.loss_noise == 2e-5


def test_op_ratio_bounds():
    assert op_ratio(1) == 11
    assert all(6 < op_ratio(h) <= 11 for h in range(1, 200))
    assert op_ratio(10 ** 6) == 7  # ceil of just over 6
    with pytest.raises(NoiseParamError):
        op_ratio(0)


def test_param_map_rejects_small_ratio():
    with pytest.raises(NoiseParamError):
        wstate_param_map(EnvParams(), 0.5, 4)


def test_param_map_degenerate_case():
    base = EnvParams(0.1, 0.01, 0.0, 0.0)
    mapped = wstate_param_map(base, 1, 10 ** 6)
    assert mapped.depolarizing_rate == base.depolarizing_rate
    assert mapped.dephasing_rate == pytest.approx(1 - 0.99 ** 7)
    assert mapped.loss_init == 0 and mapped.loss_noise == 0


def test_decohere():
    assert decohere_fidelity(0.9, 0, 0.1) == 0.9
    assert decohere_fidelity(1, 1e6, 0.1) == pytest.approx(0.25)
    assert decohere_fidelity(1, 1, 0.1) == pytest.approx(0.9286, abs=1e-4)
    with pytest.raises(NoiseParamError):
        decohere_fidelity(1, -1, 0.1)


def test_op_success():
    assert op_success_prob(0, 17) == 1
    assert op_success_prob(0.01, 8) == pytest.approx(0.92274, abs=1e-5)
    assert op_success_prob(1, 3) == 0


def test_env_validation():
    with pytest.raises(NoiseParamError):
        EnvParams(dephasing_rate=2)
    with pytest.raises(NoiseParamError):
        EnvParams(length_km=0)
    assert EnvParams().with_(loss_init=0.1).loss_init == 0.1


def test_teleport_fidelity_limits():
    assert teleport_fidelity(1, False, (0, 0, 1)) == 1
    assert teleport_fidelity(1, True, (1, 0, 0)) == 0
    assert teleport_fidelity(1, True, (0, 0, 1)) == 1  # Z leaves poles alone
    # uniform average over the sphere is (2F + 1)/3 with F = (3w + 1)/4
    w = 0.6
    avg = (teleport_fidelity(w, False, (1, 0, 0)) + teleport_fidelity(w, False, (0, 1, 0))
           + teleport_fidelity(w, False, (0, 0, 1))) / 3
    assert avg == pytest.approx((2 * (3 * w + 1) / 4 + 1) / 3)


@given(prob, prob, prob, prob, prob)
def test_component_outputs_in_range_and_monotone(a, b, c, d, e):
    base = ComponentProbs(a, b, c, d, e)
    p = epr_distribution_prob(base)
    assert 0 <= p <= 1
    assert all(0 <= s <= 1 for s in step_probs(base))
    for field in ("p_w", "p_qchannel", "p_bsm", "p_p_swap", "p_a_swap"):
        bumped = ComponentProbs(**{**base.__dict__, field: min(1.0, getattr(base, field) + 0.1)})
        assert epr_distribution_prob(bumped) >= p


@given(prob, st.floats(0, 0.2), prob, st.floats(0, 0.2))
def test_channel_quality_monotone(li1, ln1, li2, ln2):
    q = channel_quality(li1, ln1)
    assert 0 <= q <= 1
    if li1 <= li2 and ln1 <= ln2:
        assert channel_quality(li2, ln2) <= q + 1e-15


@given(prob, st.floats(0, 1e3), prob)
def test_decohere_stays_between(f0, t, rate):
    f = decohere_fidelity(f0, t, rate)
    assert min(f0, 0.25) - 1e-12 <= f <= max(f0, 0.25) + 1e-12


@given(prob, st.floats(1, 20), st.integers(1, 50))
def test_param_map_never_improves(deph, ratio, hops):
    base = EnvParams(0.1, deph, 0.01, 1e-3)
    m = wstate_param_map(base, ratio, hops)
    assert m.dephasing_rate >= deph - 1e-15
    assert m.loss_init >= base.loss_init
    assert m.depolarizing_rate <= base.depolarizing_rate
    assert math.isclose(m.dephasing_rate, 1 - (1 - deph) ** op_ratio(hops))

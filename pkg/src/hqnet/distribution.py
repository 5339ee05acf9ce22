"""Entanglement preparation and distribution schemes for a single segment.

Each scheme runs as a sequence of stochastic stages.  A stage either fails
(the attempt ends and the counters stop there) or passes on to the next one.
Local operations can be faulty in two ways, chosen by ``op_fault``:

``"heralded"``
    an operation succeeds with probability ``1 - dephasing`` and a failure
    ends the attempt (the product-of-stages success model);
``"silent"``
    the operation always completes but applies a ``Z`` error with
    probability ``dephasing``; the error is tracked as a Pauli-frame bit on
    the delivered pair;
``"mixed"``
    the operation applies the dephasing channel itself, so the pair ends up
    in a mixture of the two frames.  Nothing is sampled; ``flip_prob``
    carries the weight of the flipped frame.

Delivered pairs are Werner states: parameter ``werner`` (1 = perfect) plus the
frame bit ``flipped`` and the flipped-frame weight ``flip_prob`` (equal to the
bit under ``"silent"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernel as qk
from .noise import (ComponentProbs, channel_success_prob, fidelity_from_werner, step_probs)
from .topology import DISTRIBUTED, HIERARCHICAL, Topology, TopologyError, controller_id

WSTATE = "wstate-cepd"
DP_CEPD = "dp-cepd"
SENDER_RECEIVER = "depd-sender-receiver"
MEET_IN_MIDDLE = "depd-meet-in-middle"
MIDPOINT_SOURCE = "depd-midpoint-source"
SCHEMES = (WSTATE, DP_CEPD, SENDER_RECEIVER, MEET_IN_MIDDLE, MIDPOINT_SOURCE)
CENTRALIZED = (WSTATE, DP_CEPD)
DP_DEPD = MEET_IN_MIDDLE  # the double-photon distributed scheme used in comparisons

FIBRE_KM_PER_MS = 200.0
OP_MS = 0.01
PROCESSING_MS = 0.001


OP_FAULTS = ("heralded", "silent", "mixed")


def xor_prob(p: float, q: float) -> float:
    """Probability that exactly one of two independent events happens."""
    return p + q - 2.0 * p * q


class SchemeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Timing:
    fibre_km_per_ms: float = FIBRE_KM_PER_MS
    op_ms: float = OP_MS
    processing_ms: float = PROCESSING_MS

    def flight(self, km: float) -> float:
        return km / self.fibre_km_per_ms

    def message(self, km: float) -> float:
        return km / self.fibre_km_per_ms + self.processing_ms


@dataclass(frozen=True)
class SegmentModel:
    """Per-segment physical parameters.

    ``p_leg`` is the single-photon survival on the leg towards each endpoint
    (towards the midpoint for meet-in-the-middle, the full link for
    sender-receiver).  ``dephasing`` is ``(endpoint a, endpoint b,
    preparator)``; ``decay_per_ms`` is each endpoint memory's depolarizing
    rate per millisecond.
    """
    p_leg: tuple[float, float] = (1.0, 1.0)
    p_prep: float = 1.0
    dephasing: tuple[float, float, float] = (0.0, 0.0, 0.0)
    decay_per_ms: tuple[float, float] = (0.0, 0.0)
    flight_ms: tuple[float, float] = (0.5, 0.5)
    herald_ms: float = 0.501
    op_ms: float = OP_MS


@dataclass(frozen=True)
class WStateComponents:
    """Stage probabilities of W-state distribution, one value per side."""
    p_w: float = 1.0
    p_qchannel: tuple[float, float] = (1.0, 1.0)
    p_bsm: tuple[float, float] = (1.0, 1.0)
    p_p_swap: tuple[float, float] = (1.0, 1.0)
    p_a_swap: float = 1.0

    @classmethod
    def from_probs(cls, c: ComponentProbs) -> "WStateComponents":
        return cls(c.p_w, (c.p_qchannel,) * 2, (c.p_bsm,) * 2, (c.p_p_swap,) * 2, c.p_a_swap)

    @classmethod
    def from_model(cls, m: SegmentModel) -> "WStateComponents":
        da, db, dp = m.dephasing
        # both photons of one W-state share a channel
        return cls(m.p_prep, (m.p_leg[0] ** 2, m.p_leg[1] ** 2), (1 - da, 1 - db),
                   (1 - da, 1 - db), 1 - dp)

    def stage_probs(self) -> tuple[float, float, float, float]:
        return (self.p_w ** 2 * self.p_qchannel[0] * self.p_qchannel[1],
                self.p_bsm[0] * self.p_bsm[1],
                self.p_p_swap[0] * self.p_p_swap[1],
                self.p_a_swap)

    def success_prob(self) -> float:
        return math.prod(self.stage_probs())


@dataclass(frozen=True)
class DistributionRequest:
    scheme: str
    preparator: str
    endpoints: tuple[tuple[str, str], tuple[str, str]]  # ((device, memory), (device, memory))
    session: str = "-"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SchemeConfigError(f"unknown scheme {self.scheme!r}")


@dataclass
class DistributionResult:
    success: bool
    failed_stage: str | None
    elapsed_ms: float
    photons: int
    ops: int
    werner: float = 0.0
    flipped: bool = False
    flip_prob: float = 0.0
    pair: tuple[tuple[str, str], tuple[str, str]] | None = None
    kernel_fidelity: float | None = None
    faults: int = 0

    @property
    def fidelity(self) -> float:
        """Fidelity of the delivered pair with ``|Phi+>`` (0 when nothing was delivered)."""
        if not self.success:
            return 0.0
        f = fidelity_from_werner(self.werner)
        return (1.0 - self.flip_prob) * f + self.flip_prob * (1.0 - f) / 3.0


class _Run:
    """Stage bookkeeping shared by the scheme implementations."""

    def __init__(self, rng: np.random.Generator, op_fault: str):
        if op_fault not in OP_FAULTS:
            raise SchemeConfigError(f"op_fault must be one of {OP_FAULTS}, got {op_fault!r}")
        self.rng = rng
        self.mode = op_fault
        self.flip_prob = 0.0
        self.photons = 0
        self.ops = 0
        self.elapsed = 0.0
        self.flips = 0
        self.fault_log: list[str] = []

    def chance(self, p: float) -> bool:
        return p >= 1.0 or self.rng.random() < p

    def op(self, dephasing: float, where: str) -> bool:
        """One local operation; returns False when a heralded fault ends the attempt."""
        self.ops += 1
        if dephasing <= 0.0:
            return True
        if self.mode == "mixed":
            self.flip_prob = xor_prob(self.flip_prob, dephasing)
            return True
        hit = self.rng.random() < dephasing
        if hit and self.mode == "silent":
            self.flips += 1
            self.flip_prob = float(self.flips % 2)
            self.fault_log.append(where)
            return True
        return not hit

    def fail(self, stage: str, herald_ms: float) -> DistributionResult:
        return DistributionResult(False, stage, self.elapsed + herald_ms, self.photons,
                                  self.ops, faults=self.flips)

    def done(self, werner: float, pair) -> DistributionResult:
        return DistributionResult(True, None, self.elapsed, self.photons, self.ops,
                                  werner=werner, flipped=bool(self.flips % 2),
                                  flip_prob=self.flip_prob, pair=pair, faults=self.flips)


def _decay(m: SegmentModel, storage_a: float, storage_b: float) -> float:
    ra, rb = m.decay_per_ms
    return math.exp(-ra * storage_a - rb * storage_b)


# ---------------------------------------------------------------------------
# centralized schemes


def wstate_cepd(req: DistributionRequest, model: SegmentModel | WStateComponents,
                rng: np.random.Generator, *, op_fault: str = "heralded",
                residual_policy: str = "postselect", validate: bool = False) -> DistributionResult:
    """W-state distribution through a local controller.

    Step 1 prepares two W-states and sends both photons of each one towards
    an endpoint; step 2 converts each W-state into EPR pairs with a BSM at the
    endpoint; step 3 swaps the two photons at each endpoint; step 4 swaps the
    two controller atoms, leaving the endpoint atoms entangled.

    With ``residual_policy="postselect"`` the conversion keeps its two-EPR
    branch, so the attempt succeeds with exactly the product of stage
    probabilities.  ``"fail"`` drops the attempt on a residual outcome
    (probability 1/3 per side).
    """
    if residual_policy not in ("postselect", "fail"):
        raise SchemeConfigError(f"unknown residual policy {residual_policy!r}")
    if isinstance(model, WStateComponents):
        comp, m = model, SegmentModel()
    else:
        comp, m = WStateComponents.from_model(model), model
    run = _Run(rng, op_fault)
    da, db = (1 - comp.p_bsm[0], 1 - comp.p_bsm[1])

    # step 1
    run.elapsed += m.op_ms
    if not run.chance(comp.p_w ** 2):
        return run.fail("prepare", m.herald_ms)
    run.photons += 4
    run.elapsed += max(m.flight_ms)
    if not run.chance(comp.p_qchannel[0] * comp.p_qchannel[1]):
        return run.fail("transmit", m.herald_ms)
    # step 2
    run.elapsed += m.op_ms
    ok_a = run.op(da, "bsm-a")
    ok_b = run.op(db, "bsm-b")
    if not (ok_a and ok_b):
        return run.fail("bsm", m.herald_ms)
    if residual_policy == "fail":
        if rng.random() >= 2 / 3 or rng.random() >= 2 / 3:
            return run.fail("residual", m.herald_ms)
    stored_from = run.elapsed
    # step 3
    run.elapsed += m.op_ms
    ok_a = run.op(1 - comp.p_p_swap[0], "photon-swap-a")
    ok_b = run.op(1 - comp.p_p_swap[1], "photon-swap-b")
    if not (ok_a and ok_b):
        return run.fail("photon-swap", m.herald_ms)
    # step 4: endpoints report, the controller swaps and announces the result
    run.elapsed += m.herald_ms + m.op_ms
    if not run.op(1 - comp.p_a_swap, "atom-swap"):
        return run.fail("atom-swap", m.herald_ms)
    run.elapsed += m.herald_ms
    storage = run.elapsed - stored_from
    res = run.done(_decay(m, storage, storage), req.endpoints)
    if validate:
        res.kernel_fidelity = _replay_wstate(run.fault_log, rng)
    return res


def _replay_wstate(faults: Sequence[str], rng: np.random.Generator) -> float:
    """Statevector replay of a successful W-state run; returns the final pair fidelity."""
    reg = qk.StateRegister([f"{q}-{side}" for side in ("a", "b")
                            for q in ("p1", "p2", "lc", "atom")])
    for side in ("a", "b"):
        qk.prepare_w_state(reg, f"p1-{side}", f"p2-{side}", f"lc-{side}")
        qk.convert_w_to_epr(reg, (f"p1-{side}", f"p2-{side}", f"lc-{side}"), f"atom-{side}",
                            branch=qk.Conversion.TWO_EPR)
        if f"bsm-{side}" in faults:
            reg.apply("Z", f"atom-{side}")
    for side in ("a", "b"):
        qk.entanglement_swap(reg, (f"atom-{side}", f"p1-{side}"), (f"p2-{side}", f"lc-{side}"), rng)
        if f"photon-swap-{side}" in faults:
            reg.apply("Z", f"atom-{side}")
        for q in ("p1", "p2"):
            reg.release(f"{q}-{side}")
    # (atom-a, lc-a) and (lc-b, atom-b) now hold |Phi+>; swap at the controller
    qk.entanglement_swap(reg, ("atom-a", "lc-a"), ("lc-b", "atom-b"), rng)
    if "atom-swap" in faults:
        reg.apply("Z", "atom-b")
    return qk.fidelity(reg, ["atom-a", "atom-b"], qk.PHI_PLUS)


def double_photon_cepd(req: DistributionRequest, model: SegmentModel,
                       rng: np.random.Generator, *, op_fault: str = "heralded"
                       ) -> DistributionResult:
    """The controller prepares a photon pair and sends one photon to each endpoint."""
    run = _Run(rng, op_fault)
    run.elapsed += model.op_ms
    if not run.chance(model.p_prep):
        return run.fail("prepare", model.herald_ms)
    run.photons += 2
    ta, tb = model.flight_ms
    run.elapsed += max(ta, tb)
    if not run.chance(model.p_leg[0] * model.p_leg[1]):
        return run.fail("transmit", model.herald_ms)
    run.elapsed += model.herald_ms
    w = _decay(model, run.elapsed - ta - model.op_ms, run.elapsed - tb - model.op_ms)
    return run.done(w, req.endpoints)


# ---------------------------------------------------------------------------
# distributed schemes


def depd_sender_receiver(req: DistributionRequest, model: SegmentModel,
                         rng: np.random.Generator, *, op_fault: str = "heralded"
                         ) -> DistributionResult:
    """Endpoint a emits a photon entangled with its atom straight to endpoint b."""
    run = _Run(rng, op_fault)
    run.elapsed += model.op_ms
    if not run.chance(model.p_prep):
        return run.fail("prepare", model.herald_ms)
    run.photons += 1
    run.elapsed += model.flight_ms[0]
    if not run.chance(model.p_leg[0]):
        return run.fail("transmit", model.herald_ms)
    run.elapsed += model.herald_ms
    w = _decay(model, run.elapsed, model.herald_ms)
    return run.done(w, req.endpoints)


def depd_meet_in_middle(req: DistributionRequest, model: SegmentModel,
                        rng: np.random.Generator, *, op_fault: str = "heralded"
                        ) -> DistributionResult:
    """Both endpoints emit photons to the midpoint, which joins them with a BSM."""
    run = _Run(rng, op_fault)
    run.elapsed += model.op_ms
    if not run.chance(model.p_prep ** 2):
        return run.fail("prepare", model.herald_ms)
    run.photons += 2
    run.elapsed += max(model.flight_ms)
    if not run.chance(model.p_leg[0] * model.p_leg[1]):
        return run.fail("transmit", model.herald_ms)
    run.elapsed += model.op_ms
    if not run.op(model.dephasing[2], "midpoint-bsm"):
        return run.fail("bsm", model.herald_ms)
    run.elapsed += model.herald_ms
    w = _decay(model, run.elapsed, run.elapsed)
    return run.done(w, req.endpoints)


def depd_midpoint_source(req: DistributionRequest, model: SegmentModel,
                         rng: np.random.Generator, *, op_fault: str = "heralded"
                         ) -> DistributionResult:
    """The midpoint sends a photon pair; each endpoint absorbs its photon with a BSM."""
    run = _Run(rng, op_fault)
    run.elapsed += model.op_ms
    if not run.chance(model.p_prep ** 3):
        return run.fail("prepare", model.herald_ms)
    run.photons += 2
    run.elapsed += max(model.flight_ms)
    if not run.chance(model.p_leg[0] * model.p_leg[1]):
        return run.fail("transmit", model.herald_ms)
    run.elapsed += model.op_ms
    ok_a = run.op(model.dephasing[0], "bsm-a")
    ok_b = run.op(model.dephasing[1], "bsm-b")
    if not (ok_a and ok_b):
        return run.fail("bsm", model.herald_ms)
    run.elapsed += model.herald_ms
    w = _decay(model, run.elapsed, run.elapsed)
    return run.done(w, req.endpoints)


_IMPL = {
    WSTATE: wstate_cepd,
    DP_CEPD: double_photon_cepd,
    SENDER_RECEIVER: depd_sender_receiver,
    MEET_IN_MIDDLE: depd_meet_in_middle,
    MIDPOINT_SOURCE: depd_midpoint_source,
}


def distribute(req: DistributionRequest, model: SegmentModel, rng: np.random.Generator,
               **kw) -> DistributionResult:
    return _IMPL[req.scheme](req, model, rng, **kw)


def success_prob(scheme: str, model: SegmentModel, op_fault: str = "heralded") -> float:
    """Closed-form probability that one attempt of ``scheme`` delivers a pair."""
    pa, pb = model.p_leg
    da, db, dp = model.dephasing
    if op_fault != "heralded":
        da = db = dp = 0.0
    if scheme == WSTATE:
        return WStateComponents.from_model(replace(model, dephasing=(da, db, dp))).success_prob()
    if scheme == DP_CEPD:
        return model.p_prep * pa * pb
    if scheme == SENDER_RECEIVER:
        return model.p_prep * pa
    if scheme == MEET_IN_MIDDLE:
        return model.p_prep ** 2 * pa * pb * (1 - dp)
    if scheme == MIDPOINT_SOURCE:
        return model.p_prep ** 3 * pa * pb * (1 - da) * (1 - db)
    raise SchemeConfigError(f"unknown scheme {scheme!r}")


def nominal_latency(scheme: str, model: SegmentModel) -> float:
    """Duration of one attempt that runs every stage (the successful path)."""
    base = model.op_ms + max(model.flight_ms) + model.herald_ms
    if scheme == WSTATE:
        return base + 3 * model.op_ms + model.herald_ms
    if scheme == SENDER_RECEIVER:
        return model.op_ms + model.flight_ms[0] + model.herald_ms
    if scheme in (MEET_IN_MIDDLE, MIDPOINT_SOURCE):
        return base + model.op_ms
    return base


# ---------------------------------------------------------------------------
# topology -> segment parameters


def segment_model(t: Topology, a: str, b: str, scheme: str, domain: str | None = None,
                  timing: Timing = Timing(), rate_time_unit_ms: float = 1.0) -> SegmentModel:
    """Physical parameters of the segment between devices ``a`` and ``b``.

    Depolarizing rates are given per ``rate_time_unit_ms`` of simulated time.
    """
    dev_a, dev_b = t[a], t[b]
    decay = (dev_a.env.depolarizing_rate / rate_time_unit_ms,
             dev_b.env.depolarizing_rate / rate_time_unit_ms)
    if scheme in CENTRALIZED:
        if t.mode != HIERARCHICAL:
            raise SchemeConfigError(f"{scheme} needs a hierarchical topology")
        if domain is None:
            shared = t.shared_domains(a, b)
            if not shared:
                raise SchemeConfigError(f"{a} and {b} share no domain")
            domain = shared[0]
        lc = controller_id(domain)
        try:
            ca, cb = t.qchannel(lc, a), t.qchannel(lc, b)
        except TopologyError as exc:
            raise SchemeConfigError(str(exc)) from None
        legs = tuple(channel_success_prob(c.env.loss_init, c.env.loss_noise, c.length_km)
                     for c in (ca, cb))
        flights = (timing.flight(ca.length_km), timing.flight(cb.length_km))
        herald = max(timing.message(ca.length_km), timing.message(cb.length_km))
        d_prep = t[lc].env.dephasing_rate
    else:
        if t.mode != DISTRIBUTED:
            raise SchemeConfigError(f"{scheme} needs a distributed topology")
        try:
            ch = t.qchannel(a, b)
        except TopologyError as exc:
            raise SchemeConfigError(str(exc)) from None
        e = ch.env
        if scheme == SENDER_RECEIVER:
            p = channel_success_prob(e.loss_init, e.loss_noise, ch.length_km)
            legs = (p, p)
            flights = (timing.flight(ch.length_km),) * 2
            herald = timing.message(ch.length_km)
        else:
            half = ch.length_km / 2
            p = channel_success_prob(e.loss_init, e.loss_noise, half)
            legs = (p, p)
            flights = (timing.flight(half),) * 2
            herald = timing.message(half)
        d_prep = (dev_a.env.dephasing_rate + dev_b.env.dephasing_rate) / 2
    return SegmentModel(p_leg=legs, p_prep=1.0,
                        dephasing=(dev_a.env.dephasing_rate, dev_b.env.dephasing_rate, d_prep),
                        decay_per_ms=decay, flight_ms=flights, herald_ms=herald,
                        op_ms=timing.op_ms)


# ---------------------------------------------------------------------------
# instrumented chains


@dataclass
class ChainCounters:
    ops: int = 0
    photons: int = 0
    success: bool = True
    stages: list[str | None] = field(default_factory=list)


def distribute_chain(scheme: str, models: Sequence[SegmentModel], rng: np.random.Generator,
                     swap_dephasing: Sequence[float] | None = None, **kw) -> ChainCounters:
    """Distribute every segment of a chain once, then swap at each interior node."""
    out = ChainCounters()
    for k, m in enumerate(models):
        req = DistributionRequest(scheme, f"prep-{k}", ((f"n{k}", "m"), (f"n{k + 1}", "m")))
        r = distribute(req, m, rng, **kw)
        out.ops += r.ops
        out.photons += r.photons
        out.stages.append(r.failed_stage)
        if not r.success:
            out.success = False
            return out
    swaps = len(models) - 1
    deph = list(swap_dephasing) if swap_dephasing is not None else [0.0] * swaps
    for d in deph[:swaps]:
        out.ops += 1
        if d > 0 and rng.random() < d:
            out.success = False
            out.stages.append("swap")
            return out
    return out


def eq_product(c: ComponentProbs) -> float:
    return math.prod(step_probs(c))

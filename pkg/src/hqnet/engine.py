"""Discrete-event simulation of end-to-end quantum communication sessions.

A session walks through the states

    Requested -> Routing -> Reserving -> Preparing -> Distributing
              -> Swapping -> Teleporting -> Succeeded | Failed

(intra-domain sessions skip Routing and Reserving).  Two timers govern the
quantum stages: ``t_d`` bounds one round of segment distribution and ``t_st``
bounds swapping plus teleportation.  Expired rounds are retried on the same
path; past the retry limit the implicated repeaters go into maintenance and
the session is rerouted (inter-domain) or fails (intra-domain).

Pairs are tracked as Werner parameters with a Z-frame weight (see
:mod:`hqnet.distribution`).  With ``oracle=True`` every delivery is replayed
through the statevector kernel instead of the closed-form payload fidelity.

Clock unit: milliseconds.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

import networkx as nx
import numpy as np

from . import kernel as qk
from .control import (RETRY_LIMIT, CentralStateMatrix, CompletePath, ControlError,
                      PathMiddle, ReservationFailure)
from .distribution import (DP_CEPD, OP_FAULTS, SCHEMES, DistributionRequest, Timing, distribute,
                           nominal_latency, segment_model, success_prob, xor_prob)
from .noise import teleport_fidelity
from .routing import (NoPathFound, RouteResult, annotate, cer_route, greedy_route, qcast_route,
                      slmp_route)
from .topology import HIERARCHICAL, USER, Topology, build_dspt_dert

# Depolarizing rates are quoted per this many milliseconds of simulated time.
RATE_TIME_UNIT_MS = 3.0

REQUESTED, ROUTING, RESERVING, PREPARING, DISTRIBUTING = (
    "Requested", "Routing", "Reserving", "Preparing", "Distributing")
SWAPPING, TELEPORTING, SUCCEEDED, FAILED = "Swapping", "Teleporting", "Succeeded", "Failed"
STATES = (REQUESTED, ROUTING, RESERVING, PREPARING, DISTRIBUTING, SWAPPING, TELEPORTING,
          SUCCEEDED, FAILED)
TERMINAL = (SUCCEEDED, FAILED)

ALLOWED_TRANSITIONS = frozenset({
    (REQUESTED, ROUTING), (REQUESTED, PREPARING), (REQUESTED, FAILED),
    (ROUTING, RESERVING), (ROUTING, FAILED),
    (RESERVING, PREPARING), (RESERVING, ROUTING), (RESERVING, FAILED),
    (PREPARING, DISTRIBUTING),
    (DISTRIBUTING, SWAPPING), (DISTRIBUTING, TELEPORTING), (DISTRIBUTING, PREPARING),
    (DISTRIBUTING, ROUTING), (DISTRIBUTING, FAILED),
    (SWAPPING, TELEPORTING), (SWAPPING, PREPARING), (SWAPPING, ROUTING), (SWAPPING, FAILED),
    (TELEPORTING, SUCCEEDED), (TELEPORTING, PREPARING), (TELEPORTING, ROUTING),
    (TELEPORTING, FAILED),
})

ROUTING_ALGORITHMS = ("cer", "greedy", "qcast", "slmp")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Fault:
    """Injected fault, active on ``[start_ms, end_ms)``.

    kinds: ``outage`` (distribution attempts touching ``target`` fail),
    ``delay`` (classical messages touching ``target`` take ``extra_ms``
    longer; ``target="*"`` hits every message), ``swap-fail`` (swaps at
    ``target`` fail), ``reject`` (user ``target`` refuses requests).
    """
    kind: str
    target: str
    start_ms: float = 0.0
    end_ms: float = math.inf
    extra_ms: float = 0.0

    def active(self, now: float, *devices: str) -> bool:
        return (self.start_ms <= now < self.end_ms
                and (self.target == "*" or self.target in devices))


FAULT_KINDS = ("outage", "delay", "swap-fail", "reject")


@dataclass(frozen=True)
class EngineConfig:
    scheme: str = DP_CEPD
    routing: str = "cer"
    sessions: int = 1
    concurrency: int = 1
    src: str = "U_A"
    dst: str = "U_B"
    op_fault: str = "mixed"
    rate_time_unit_ms: float = RATE_TIME_UNIT_MS
    retry_limit: int = RETRY_LIMIT
    max_reroutes: int = 3
    recursion_n: int = 2
    t_d_factor: float = 3.0
    t_st_factor: float = 2.0
    maintain_ms: float = 200.0
    calibration_probes: int = 0
    fixed_path: tuple[str, ...] | None = None  # bypasses routing when set
    oracle: bool = False
    faults: tuple[Fault, ...] = ()
    timing: Timing = Timing()
    trace: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ScenarioError(f"unknown scheme {self.scheme!r}")
        if self.routing not in ROUTING_ALGORITHMS:
            raise ScenarioError(f"unknown routing algorithm {self.routing!r}")
        if self.sessions < 0 or self.concurrency < 1:
            raise ScenarioError("sessions must be >= 0 and concurrency >= 1")
        if self.op_fault not in OP_FAULTS:
            raise ScenarioError(f"unknown op_fault {self.op_fault!r}")
        if self.fixed_path is not None and (
                len(self.fixed_path) < 2 or self.fixed_path[0] != self.src
                or self.fixed_path[-1] != self.dst):
            raise ScenarioError("fixed_path must run from src to dst")
        for f in self.faults:
            if f.kind not in FAULT_KINDS:
                raise ScenarioError(f"unknown fault kind {f.kind!r}")


# ---------------------------------------------------------------------------
# session bookkeeping


@dataclass
class Chunk:
    """An entangled pair between two path positions, possibly built by swaps."""
    werner: float
    flip_prob: float  # weight of the Z-flipped frame
    t_ref: float
    rate: float  # combined depolarizing rate of the two memories (per ms)
    factors: list[float] = field(default_factory=list)  # for the kernel replay

    def age_to(self, now: float) -> None:
        if now > self.t_ref:
            f = math.exp(-self.rate * (now - self.t_ref))
            self.werner *= f
            self.factors.append(f)
            self.t_ref = now


@dataclass
class Session:
    id: str
    src: str
    dst: str
    state: str = REQUESTED
    intra: bool = False
    path: CompletePath | None = None
    candidates: list[PathMiddle] = field(default_factory=list)
    attempt: int = 0
    retries: int = 0
    reroutes: int = 0
    t_d: float | None = None
    t_st: float | None = None
    segments: list[Chunk | None] = field(default_factory=list)
    chunk: Chunk | None = None
    swaps_done: int = 0
    reports: int = 0
    bsm_done: bool = False
    payload: np.ndarray | None = None
    consumed: int = 0
    route_time_ms: float = 0.0
    swap_faults: int = 0
    history: list[tuple[float, str]] = field(default_factory=list)
    stamps: dict[str, float] = field(default_factory=dict)
    fidelity: float | None = None
    reason: str = ""
    user_memories: tuple[str, str] = ("um_1", "um_1")
    excluded: set[str] = field(default_factory=set)


@dataclass
class Metrics:
    fidelities: list[float] = field(default_factory=list)
    sessions: int = 0
    succeeded: int = 0
    failed: int = 0
    elapsed_ms: float = 0.0
    pairs_consumed: list[int] = field(default_factory=list)
    route_times: list[float] = field(default_factory=list)
    stage_failures: Counter = field(default_factory=Counter)
    swap_fault_free: list[bool] = field(default_factory=list)
    transitions: Counter = field(default_factory=Counter)

    @property
    def fidelity_mean(self) -> float:
        return float(np.mean(self.fidelities)) if self.fidelities else float("nan")

    @property
    def fidelity_stderr(self) -> float:
        n = len(self.fidelities)
        if n < 2:
            return float("nan")
        return float(np.std(self.fidelities, ddof=1) / math.sqrt(n))

    @property
    def throughput_qps(self) -> float:
        """Delivered qubits per second of simulated time."""
        if self.elapsed_ms <= 0:
            return 0.0
        return self.succeeded / (self.elapsed_ms / 1000.0)

    @property
    def success_rate(self) -> float:
        return self.succeeded / self.sessions if self.sessions else float("nan")

    @property
    def pairs_consumed_mean(self) -> float:
        return float(np.mean(self.pairs_consumed)) if self.pairs_consumed else float("nan")

    @property
    def route_time_ms_mean(self) -> float:
        return float(np.mean(self.route_times)) if self.route_times else float("nan")


@dataclass
class RunResult:
    metrics: Metrics
    trace: list[str]
    sessions: list[Session]
    csm: CentralStateMatrix

    def trace_hash(self) -> str:
        return hashlib.sha256("\n".join(self.trace).encode()).hexdigest()


# ---------------------------------------------------------------------------


class Engine:
    def __init__(self, topology: Topology, config: EngineConfig, seed: int,
                 csm: CentralStateMatrix | None = None):
        self.t = topology
        self.cfg = config
        self.rng = np.random.default_rng(seed)
        self.csm = csm if csm is not None else CentralStateMatrix(topology)
        self.now = 0.0
        self._queue: list[tuple[float, int, str, str, int, Any]] = []
        self._seq = 0
        self.trace: list[str] = []
        self.sessions: dict[str, Session] = {}
        self.metrics = Metrics()
        self._issued = 0
        self._models: dict[tuple, Any] = {}
        for s, d in ((config.src, config.dst),):
            for u in (s, d):
                if u not in topology or topology[u].kind != USER:
                    raise ScenarioError(f"{u!r} is not a user of the topology")
        if config.routing == "cer" and topology.mode != HIERARCHICAL:
            raise ScenarioError("centralized routing needs a hierarchical topology")
        self.coordinator = topology.central_controller or config.src
        memo = topology.memo
        if topology.mode == HIERARCHICAL and "tables" not in memo:
            memo["tables"] = build_dspt_dert(topology)
        self._tables = memo.get("tables")
        lat_key = ("latency", config.timing)
        if lat_key not in memo:
            memo[lat_key] = self._classical_latencies()
        self._latency = memo[lat_key]
        self._cer_cache: dict = memo.setdefault("cer", {})

    # -- infrastructure ------------------------------------------------------------

    def _classical_latencies(self) -> dict[str, dict[str, float]]:
        g = nx.Graph()
        g.add_nodes_from(self.t.devices)
        tm = self.cfg.timing
        for ch in list(self.t.cchannels.values()) + list(self.t.qchannels.values()):
            g.add_edge(ch.a, ch.b, weight=tm.message(ch.length_km))
        return dict(nx.all_pairs_dijkstra_path_length(g))

    def msg(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        try:
            base = self._latency[a][b]
        except KeyError:
            raise ScenarioError(f"no classical route {a} -> {b}") from None
        extra = sum(f.extra_ms for f in self.cfg.faults
                    if f.kind == "delay" and f.active(self.now, a, b))
        return base + extra

    def log(self, device: str, event: str, detail: str = "") -> None:
        if self.cfg.trace:
            self.trace.append(f"{self.now:.6f} | {device} | {event} | {detail}")

    def schedule(self, delay: float, kind: str, sid: str, token: int, data: Any = None) -> None:
        heapq.heappush(self._queue, (self.now + delay, self._seq, kind, sid, token, data))
        self._seq += 1

    def goto(self, s: Session, state: str, detail: str = "") -> None:
        edge = (s.state, state)
        if edge not in ALLOWED_TRANSITIONS:
            raise AssertionError(f"illegal transition {edge} in {s.id}")
        self.metrics.transitions[edge] += 1
        self.log(s.id, "state", f"{s.state}->{state}" + (f" {detail}" if detail else ""))
        s.state = state
        s.history.append((self.now, state))
        s.stamps.setdefault(state, self.now)

    def model(self, a: str, b: str, domain: str | None):
        key = (a, b, domain)
        m = self._models.get(key)
        if m is None:
            m = segment_model(self.t, a, b, self.cfg.scheme, domain, self.cfg.timing,
                              self.cfg.rate_time_unit_ms)
            self._models[key] = m
        return m

    def link_success(self, a: str, b: str) -> float:
        doms = self.t.shared_domains(a, b) if self.t.mode == HIERARCHICAL else (None,)
        return success_prob(self.cfg.scheme, self.model(a, b, doms[0] if doms else None),
                            self.cfg.op_fault)

    # -- main loop -------------------------------------------------------------------

    def run(self) -> RunResult:
        if self.cfg.calibration_probes:
            self.calibrate(self.cfg.calibration_probes)
        for _ in range(min(self.cfg.concurrency, self.cfg.sessions)):
            self._start_next()
        while self._queue:
            when, _, kind, sid, token, data = heapq.heappop(self._queue)
            self.now = when
            handler = getattr(self, f"_on_{kind}")
            handler(self.sessions.get(sid), token, data)
        self.metrics.elapsed_ms = self.now
        return RunResult(self.metrics, self.trace, list(self.sessions.values()), self.csm)

    def calibrate(self, probes: int) -> None:
        """Seed the link and swap statistics with probe attempts on every link."""
        g = self.t.link_graph()
        for a, b in sorted(tuple(sorted(e)) for e in g.edges):
            p = self.link_success(a, b)
            for _ in range(probes):
                ok = bool(self.rng.random() < p)
                self.csm.update_link_state(a, ok)
                self.csm.update_link_state(b, ok)
        for r in self.t.repeaters:
            d = self.t[r].env.dephasing_rate
            for _ in range(probes):
                self.csm.update_swap_rate(r, bool(self.rng.random() >= d))

    def _start_next(self) -> None:
        if self._issued >= self.cfg.sessions:
            return
        sid = f"s{self._issued}"
        self._issued += 1
        s = Session(sid, self.cfg.src, self.cfg.dst)
        s.history.append((self.now, REQUESTED))
        s.stamps[REQUESTED] = self.now
        s.payload = qk.random_qubit(self.rng)
        self.sessions[sid] = s
        self.metrics.sessions += 1
        s.intra = bool(set(self.t[s.src].domains) & set(self.t[s.dst].domains))
        self.log(s.src, "request", f"session={sid} dst={s.dst} intra={int(s.intra)}")
        mem = self.csm.reserve_user_memory(s.src, sid)
        if mem is None:
            self._fail(s, "source has no idle memory")
            return
        s.user_memories = (mem, s.user_memories[1])
        relay = self._relay(s)
        self.schedule(relay, "request_at_dst", sid, s.attempt)

    def _relay(self, s: Session) -> float:
        """One-way request latency src -> (controllers) -> dst."""
        if s.intra or self.t.mode != HIERARCHICAL:
            return self.msg(s.src, s.dst)
        return self.msg(s.src, self.coordinator) + self.msg(self.coordinator, s.dst)

    def _finish(self, s: Session) -> None:
        try:
            self.csm.release_memories(s.id)
        except ControlError:  # the session never reserved anything
            pass
        self.metrics.pairs_consumed.append(s.consumed)
        self._start_next()

    def _fail(self, s: Session, reason: str) -> None:
        s.reason = reason
        self.metrics.stage_failures[s.state] += 1
        self.goto(s, FAILED, reason)
        self.metrics.failed += 1
        self._finish(s)

    def _stale(self, s: Session | None, token: int, *states: str) -> bool:
        return s is None or s.state in TERMINAL or token != s.attempt or (
            bool(states) and s.state not in states)

    # -- handshake -------------------------------------------------------------------

    def _on_request_at_dst(self, s, token, data):
        if self._stale(s, token, REQUESTED):
            return
        rejected = any(f.kind == "reject" and f.active(self.now, s.dst) for f in self.cfg.faults)
        mem = None if rejected else self.csm.reserve_user_memory(s.dst, s.id)
        self.log(s.dst, "reply", f"session={s.id} accept={int(mem is not None)}")
        if self.t.mode == HIERARCHICAL and not s.intra:
            self.schedule(self.msg(s.dst, self.coordinator), "reply_at_coord", s.id, token, mem)
        else:
            self.schedule(self._relay(s), "reply_at_src", s.id, token, mem)

    def _on_reply_at_coord(self, s, token, mem):
        if self._stale(s, token, REQUESTED):
            return
        if mem is None:
            self._fail(s, "destination busy or rejected")
            return
        if self.cfg.routing == "cer":
            # the central controller routes as soon as the acceptance passes it
            s.user_memories = (s.user_memories[0], mem)
            self.goto(s, ROUTING)
            self._route(s)
        else:
            self.schedule(self.msg(self.coordinator, s.src), "reply_at_src", s.id, token, mem)

    def _on_reply_at_src(self, s, token, mem):
        if self._stale(s, token, REQUESTED):
            return
        if mem is None:
            self._fail(s, "destination busy or rejected")
            return
        s.user_memories = (s.user_memories[0], mem)
        if s.intra:
            dom = sorted(set(self.t[s.src].domains) & set(self.t[s.dst].domains))[0]
            mid = PathMiddle((s.src, s.dst), (dom if self.t.mode == HIERARCHICAL else None,),
                             s.user_memories)
            try:
                s.path = self.csm.reserve_memories(mid, s.id)
            except ReservationFailure as exc:
                self._fail(s, f"reservation: {exc}")
                return
            self.goto(s, PREPARING, "intra-domain")
            self.schedule(self._setup_latency(s.src, s.path), "start", s.id, s.attempt)
        else:
            self.goto(s, ROUTING)
            self._route(s)

    # -- routing & reservation ---------------------------------------------------------

    def _route(self, s: Session) -> None:
        alg = self.cfg.routing
        self.log(self.coordinator, "route", f"session={s.id} alg={alg}")
        exclude = self.csm.maintained() | s.excluded
        t = self.t
        try:
            if self.cfg.fixed_path is not None:
                res = RouteResult(annotate(t, self.cfg.fixed_path), len(self.cfg.fixed_path) - 1,
                                  0.0)
                cands = [res.path]
            elif alg == "cer":
                dspt, dert = self._tables
                res = cer_route(self.csm, dspt, dert, s.src, s.dst, self.cfg.recursion_n,
                                cache=self._cer_cache)
                cands = [c.path for c in res.candidates]
            else:
                view = _without(t, exclude)
                if alg == "greedy":
                    res = greedy_route(view, s.src, s.dst)
                elif alg == "qcast":
                    res = qcast_route(view, self.csm, s.src, s.dst, self.rng, self.link_success)
                else:
                    res = slmp_route(view, s.src, s.dst, self.rng, self.link_success)
                    s.consumed += int(res.consumption)
                if res.path is None:
                    raise NoPathFound("recovery exhausted")
                cands = [res.path]
        except NoPathFound as exc:
            self.metrics.route_times.append(0.0)
            self._fail(s, f"no path: {exc}")
            return
        s.route_time_ms += res.time_ms
        self.metrics.route_times.append(res.time_ms)
        s.candidates = [PathMiddle(c.devices, c.segment_domains, s.user_memories) for c in cands]
        self.schedule(res.compute_ms, "routed", s.id, s.attempt)

    def _preparators(self, path: CompletePath) -> list[str]:
        return sorted({lc for lc, _ in path.segment_memories if lc is not None}
                      or set(path.devices))

    def _setup_latency(self, origin: str, path: CompletePath) -> float:
        return max(self.msg(origin, p) for p in self._preparators(path))

    def _on_routed(self, s, token, data):
        if self._stale(s, token, ROUTING):
            return
        self.goto(s, RESERVING)
        for cand in s.candidates:
            try:
                s.path = self.csm.reserve_memories(cand, s.id)
            except ReservationFailure as exc:
                self.log(self.coordinator, "reserve-fail", f"session={s.id} {exc}")
                continue
            self.log(self.coordinator, "reserve", f"session={s.id} path={s.path}")
            if self.cfg.routing == "cer":
                # reservation round trip through the local controllers
                delay = 2 * self._setup_latency(self.coordinator, s.path)
            else:
                delay = 0.0
            self.schedule(delay, "reserved", s.id, s.attempt)
            return
        self._fail(s, "no candidate path could be reserved")

    def _on_reserved(self, s, token, data):
        if self._stale(s, token, RESERVING):
            return
        self.goto(s, PREPARING)
        origin = self.coordinator if self.cfg.routing == "cer" else s.src
        self.schedule(self._setup_latency(origin, s.path), "start", s.id, s.attempt)

    def _on_start(self, s, token, data):
        if self._stale(s, token, PREPARING):
            return
        self._prepare(s, fresh=True)

    # -- distribution ----------------------------------------------------------------

    def _prepare(self, s: Session, fresh: bool) -> None:
        """Enter Distributing: (re)start every segment that holds no pair."""
        path = s.path.middle
        if fresh:
            s.segments = [None] * path.hops
        s.attempt += 1
        s.chunk, s.swaps_done, s.reports, s.bsm_done = None, 0, 0, False
        s.t_st = None
        self.goto(s, DISTRIBUTING)
        window = max(nominal_latency(self.cfg.scheme, self.model(a, b, d))
                     for (a, b), d in zip(path.segments, path.segment_domains))
        s.t_d = self.now + self.cfg.t_d_factor * window
        self.log(s.id, "timer-set", f"t_d deadline={s.t_d:.6f} attempt={s.attempt}")
        self.schedule(s.t_d - self.now, "t_d", s.id, s.attempt)
        for k, seg in enumerate(s.segments):
            if seg is None:
                self._attempt_segment(s, k)

    def _attempt_segment(self, s: Session, k: int) -> None:
        path = s.path
        a, b = path.devices[k], path.devices[k + 1]
        dom = path.middle.segment_domains[k]
        m = self.model(a, b, dom)
        ends = path.endpoint_memories[k]
        req = DistributionRequest(self.cfg.scheme, f"LC_{dom}" if dom else a,
                                  ((a, ends[0]), (b, ends[1])), s.id)
        res = distribute(req, m, self.rng, op_fault=self.cfg.op_fault)
        if res.success and any(f.kind == "outage" and f.active(self.now, a, b)
                               for f in self.cfg.faults):
            res.success, res.failed_stage = False, "outage"
        self.log(req.preparator, "distribute",
                 f"session={s.id} attempt={s.attempt} segment={k} {a}-{b}")
        self.schedule(res.elapsed_ms, "segment_result", s.id, s.attempt, (k, res))

    def _on_segment_result(self, s, token, data):
        if self._stale(s, token, DISTRIBUTING):
            return
        k, res = data
        a, b = s.path.devices[k], s.path.devices[k + 1]
        self.csm.update_link_state(a, res.success)
        self.csm.update_link_state(b, res.success)
        if not res.success:
            self.metrics.stage_failures[f"distribution:{res.failed_stage}"] += 1
            self.log(a, "distribute-fail",
                     f"session={s.id} attempt={s.attempt} segment={k} stage={res.failed_stage}")
            self._attempt_segment(s, k)
            return
        s.consumed += 1
        rate = self.model(a, b, s.path.middle.segment_domains[k]).decay_per_ms
        s.segments[k] = Chunk(res.werner, res.flip_prob, self.now, rate[0] + rate[1],
                              [res.werner])
        ea, eb = s.path.endpoint_memories[k]
        self.csm.set_pair(a, ea, b, eb)
        self.log(a, "pair-ready", f"session={s.id} attempt={s.attempt} segment={k} {a}-{b}")
        if all(c is not None for c in s.segments):
            s.t_d = None
            if len(s.segments) == 1:
                s.chunk = s.segments[0]
                self._start_st_timer(s)
                self.goto(s, TELEPORTING)
                self._begin_teleport(s)
            else:
                self.goto(s, SWAPPING)
                self._start_st_timer(s)
                self._begin_swaps(s)

    def _on_t_d(self, s, token, data):
        if self._stale(s, token, DISTRIBUTING):
            return
        self.log(s.id, "timer-expired", f"t_d attempt={s.attempt}")
        missing = [k for k, c in enumerate(s.segments) if c is None]
        implicated = sorted({d for k in missing for d in s.path.devices[k:k + 2]
                             if self.t[d].kind != USER})
        self._retry(s, implicated, "t_d expired")

    def _retry(self, s: Session, implicated: list[str], why: str) -> None:
        s.retries += 1
        if s.retries <= self.cfg.retry_limit:
            self.goto(s, PREPARING, f"retry {s.retries}: {why}")
            self._prepare(s, fresh=False)
            return
        for d in implicated:
            self.csm.mark_maintain(d)
            self.log(d, "maintain", f"session={s.id}")
            self.schedule(self.cfg.maintain_ms, "restore", "", 0, d)
        if s.intra or s.reroutes >= self.cfg.max_reroutes:
            s.attempt += 1
            self._fail(s, f"retry limit exceeded: {why}")
            return
        s.reroutes += 1
        s.retries = 0
        s.attempt += 1
        s.excluded |= set(implicated)
        self.csm.release_memories(s.id)
        mems = (self.csm.reserve_user_memory(s.src, s.id),
                self.csm.reserve_user_memory(s.dst, s.id))
        if None in mems:
            self._fail(s, "user memory lost during reroute")
            return
        s.user_memories = mems
        self.goto(s, ROUTING, f"reroute after {why}")
        self._route(s)

    def _on_restore(self, s, token, device):
        self.csm.mark_normal(device)
        self.log(device, "restore", "")

    # -- swapping ----------------------------------------------------------------------

    def _start_st_timer(self, s: Session) -> None:
        devs = s.path.devices
        reps = devs[1:-1]
        op = self.cfg.timing.op_ms
        swap_part = 0.0
        if reps:
            swap_part = (max(self.msg(self.coordinator, r) for r in reps) + len(reps) * op
                         + max(self.msg(r, self.coordinator) for r in reps))
        tele = (self.msg(self.coordinator, s.src) + op + self.msg(s.src, self.coordinator)
                + self.msg(self.coordinator, s.dst) + op)
        s.t_st = self.now + self.cfg.t_st_factor * (swap_part + tele)
        self.log(s.id, "timer-set", f"t_st deadline={s.t_st:.6f} attempt={s.attempt}")
        self.schedule(s.t_st - self.now, "t_st", s.id, s.attempt)

    def _begin_swaps(self, s: Session) -> None:
        op = self.cfg.timing.op_ms
        s.chunk = s.segments[0]
        for i, r in enumerate(s.path.devices[1:-1]):
            self.schedule(self.msg(self.coordinator, r) + i * op, "swap", s.id, s.attempt, i)

    def _on_swap(self, s, token, i):
        if self._stale(s, token, SWAPPING):
            return
        if i != s.swaps_done:  # an earlier swap is still pending; keep path order
            self.schedule(self.cfg.timing.op_ms, "swap", s.id, token, i)
            return
        r = s.path.devices[i + 1]
        right = s.segments[i + 1]
        s.chunk.age_to(self.now)
        right.age_to(self.now)
        fault, flip = self._dephase(r)
        forced = any(f.kind == "swap-fail" and f.active(self.now, r) for f in self.cfg.faults)
        self.log(r, "swap", f"session={s.id} attempt={s.attempt} index={i} fault={int(fault)}")
        if forced or (fault and self.cfg.op_fault == "heralded"):
            self.csm.update_swap_rate(r, False)
            self.metrics.stage_failures["swap"] += 1
            s.segments[i] = s.segments[i + 1] = None
            for k in range(i):
                s.segments[k] = None  # the accumulated pair is consumed by the failed BSM
            s.t_st = None
            self._retry(s, [r], "swap failed")
            return
        self.csm.update_swap_rate(r, not fault)
        s.swap_faults += int(fault)
        left = s.chunk
        s.chunk = Chunk(left.werner * right.werner,
                        xor_prob(xor_prob(left.flip_prob, right.flip_prob), flip),
                        self.now, 0.0, left.factors + right.factors)
        # rate of the new pair: the outer memories of the joined pairs
        a = s.path.devices[0]
        b = s.path.devices[i + 2]
        s.chunk.rate = self._rate(a) + self._rate(b)
        s.swaps_done += 1
        self.schedule(self.msg(r, self.coordinator), "swap_report", s.id, s.attempt, i)

    def _dephase(self, device: str) -> tuple[bool, float]:
        """One operation at ``device``: (sampled fault, weight of the Z flip it adds).

        The sampled fault feeds the statistics and heralded failures; under
        ``op_fault="mixed"`` the pair itself takes the dephasing channel.
        """
        d = self.t[device].env.dephasing_rate
        fault = bool(d > 0 and self.rng.random() < d)
        return fault, d if self.cfg.op_fault == "mixed" else float(fault)

    def _rate(self, device: str) -> float:
        return self.t[device].env.depolarizing_rate / self.cfg.rate_time_unit_ms

    def _on_swap_report(self, s, token, i):
        if self._stale(s, token, SWAPPING):
            return
        s.reports += 1
        if s.reports == len(s.path.devices) - 2:
            self.csm.set_flags(s.path.devices[1:-1], swapping_state=True)
            self.goto(s, TELEPORTING)
            self._begin_teleport(s)

    # -- teleportation -------------------------------------------------------------------

    def _begin_teleport(self, s: Session) -> None:
        self.schedule(self.msg(self.coordinator, s.src) if len(s.path.devices) > 2 else 0.0,
                      "bsm", s.id, s.attempt)

    def _on_bsm(self, s, token, data):
        if self._stale(s, token, TELEPORTING):
            return
        s.chunk.age_to(self.now)
        fault, flip = self._dephase(s.src)
        s.chunk.flip_prob = xor_prob(s.chunk.flip_prob, flip)
        s.bsm_done = True
        # the source memory is free from here on; only the far half decays
        s.chunk.rate = self._rate(s.dst)
        self.log(s.src, "teleport-bsm", f"session={s.id} attempt={s.attempt} fault={int(fault)}")
        if self.t.mode == HIERARCHICAL and not s.intra:
            delay = self.msg(s.src, self.coordinator) + self.msg(self.coordinator, s.dst)
        else:
            delay = self.msg(s.src, s.dst)
        self.schedule(delay, "correction", s.id, s.attempt)

    def _on_correction(self, s, token, data):
        if self._stale(s, token, TELEPORTING):
            return
        s.chunk.age_to(self.now)
        fault, flip = self._dephase(s.dst)
        s.chunk.flip_prob = xor_prob(s.chunk.flip_prob, flip)
        self.log(s.dst, "correction", f"session={s.id} attempt={s.attempt} fault={int(fault)}")
        bloch = _bloch(s.payload)
        if self.cfg.oracle:
            s.fidelity = self._oracle_fidelity(s)
        else:
            q = s.chunk.flip_prob
            s.fidelity = ((1 - q) * teleport_fidelity(s.chunk.werner, False, bloch)
                          + q * teleport_fidelity(s.chunk.werner, True, bloch))
        self.metrics.fidelities.append(s.fidelity)
        self.metrics.swap_fault_free.append(s.swap_faults == 0)
        self.csm.set_flags([s.src, s.dst], teleportation_state=True)
        self.goto(s, SUCCEEDED, f"fidelity={s.fidelity:.6f}")
        self.metrics.succeeded += 1
        s.t_st = None
        self._finish(s)

    def _on_t_st(self, s, token, data):
        if self._stale(s, token, SWAPPING, TELEPORTING):
            return
        self.log(s.id, "timer-expired", f"t_st attempt={s.attempt}")
        if s.bsm_done:
            s.attempt += 1
            self._fail(s, "target qubit broken")
            return
        s.segments = [None] * s.path.middle.hops
        reps = [d for d in s.path.devices[1:-1]]
        self._retry(s, reps, "t_st expired")

    # -- kernel replay ---------------------------------------------------------------------

    def _oracle_fidelity(self, s: Session) -> float:
        """Replay the delivery on the statevector kernel with sampled Pauli noise."""
        rng = self.rng
        reg = qk.StateRegister(["payload", "a", "b"])
        qk.load_qubit(reg, "payload", s.payload)
        qk.prepare_bell(reg, "a", "b")
        factors = s.chunk.factors
        for f in factors:
            if rng.random() >= f:
                pauli = int(rng.integers(4))
                if pauli in (1, 3):
                    reg.apply("X", "b")
                if pauli in (2, 3):
                    reg.apply("Z", "b")
        if rng.random() < s.chunk.flip_prob:
            reg.apply("Z", "b")
        far, _ = qk.teleport(reg, "payload", ("a", "b"), rng, check=False)
        return qk.fidelity(reg, [far], s.payload)


def _bloch(psi: np.ndarray) -> tuple[float, float, float]:
    a, b = psi
    x = 2 * (np.conj(a) * b).real
    y = 2 * (np.conj(a) * b).imag
    z = abs(a) ** 2 - abs(b) ** 2
    return float(x), float(y), float(z)


def _without(t: Topology, exclude: set[str]) -> Topology:
    if not exclude:
        return t
    keep = [d for d in t.devices.values() if d.id not in exclude]
    ids = {d.id for d in keep}
    chans = [c for c in list(t.qchannels.values()) + list(t.cchannels.values())
             if c.a in ids and c.b in ids]
    return Topology(t.mode, keep, chans)


def run(topology: Topology, config: EngineConfig, seed: int,
        csm: CentralStateMatrix | None = None) -> RunResult:
    return Engine(topology, config, seed, csm).run()


def transition_relation(trace: list[str]) -> set[tuple[str, str]]:
    """Observed state edges, parsed back out of a trace."""
    edges = set()
    for line in trace:
        parts = [p.strip() for p in line.split("|", 3)]
        if len(parts) == 4 and parts[2] == "state":
            a, _, b = parts[3].split(" ", 1)[0].partition("->")
            edges.add((a, b))
    return edges

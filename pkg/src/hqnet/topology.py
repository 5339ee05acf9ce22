"""Devices, domains and channels, plus the cellular layout builders.

Geometry: a cellular layout with ``rings`` r is a square grid of
``(2r - 1) x (2r - 1)`` cells, two length units per cell side.  Cell ``(i, j)``
(row, column) spans ``x in [2j, 2j + 2]``, ``y in [2i, 2i + 2]``.  In the
hierarchical layout every cell is a domain with a local controller at its
centre and one edge repeater on each shared border; in the distributed layout
every cell carries four repeaters arranged as a diamond.  Both layouts place
the two users ``U_A`` and ``U_B`` at the same coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator

import networkx as nx

from .noise import EnvParams

USER, REPEATER, EDGE, LOCAL_CTRL, CENTRAL_CTRL = (
    "user", "repeater", "edge-repeater", "local-controller", "central-controller")
KINDS = (USER, REPEATER, EDGE, LOCAL_CTRL, CENTRAL_CTRL)
HIERARCHICAL, DISTRIBUTED = "hierarchical", "distributed"

DEFAULT_LENGTH_KM = 100.0
MEMORY_SLOTS = {USER: 2, REPEATER: 4, EDGE: 4, LOCAL_CTRL: 8, CENTRAL_CTRL: 0}
MEMORY_PREFIX = {USER: "um", REPEATER: "rm", EDGE: "rm", LOCAL_CTRL: "cm", CENTRAL_CTRL: "xm"}
BYTES_PER_COMMUNICATION = 300_000


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class MemorySlot:
    name: str
    kind: str = "optical"  # or "atomic"


@dataclass(frozen=True)
class Device:
    id: str
    kind: str
    domains: tuple[str, ...] = ()
    memories: tuple[MemorySlot, ...] = ()
    pos: tuple[float, float] = (0.0, 0.0)
    env: EnvParams = field(default_factory=EnvParams)
    preparator: bool = False

    @property
    def is_controller(self) -> bool:
        return self.kind in (LOCAL_CTRL, CENTRAL_CTRL)


@dataclass(frozen=True)
class Channel:
    a: str
    b: str
    quantum: bool
    env: EnvParams = field(default_factory=EnvParams)

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))

    @property
    def length_km(self) -> float:
        return self.env.length_km


def letters(i: int) -> str:
    """0 -> A, 25 -> Z, 26 -> AA (spreadsheet column labels)."""
    s = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        s = chr(65 + r) + s
    return s


def controller_id(domain: str) -> str:
    return f"LC_{domain}"


def _memories(kind: str, mem_kind: str) -> tuple[MemorySlot, ...]:
    pre = MEMORY_PREFIX[kind]
    return tuple(MemorySlot(f"{pre}_{k + 1}", mem_kind) for k in range(MEMORY_SLOTS[kind]))


class Topology:
    """Immutable device/channel graph.  Build with the ``build_*`` helpers."""

    def __init__(self, mode: str, devices: Iterable[Device], channels: Iterable[Channel]):
        if mode not in (HIERARCHICAL, DISTRIBUTED):
            raise TopologyError(f"unknown mode {mode!r}")
        self.mode = mode
        self.devices: dict[str, Device] = {}
        for d in devices:
            if d.kind not in KINDS:
                raise TopologyError(f"device {d.id}: unknown kind {d.kind!r}")
            if d.id in self.devices:
                raise TopologyError(f"duplicate device {d.id}")
            self.devices[d.id] = d
        self.qchannels: dict[frozenset, Channel] = {}
        self.cchannels: dict[frozenset, Channel] = {}
        for ch in channels:
            for end in (ch.a, ch.b):
                if end not in self.devices:
                    raise TopologyError(f"channel {ch.a}-{ch.b}: unknown device {end}")
            (self.qchannels if ch.quantum else self.cchannels)[ch.key] = ch
        self.domains: dict[str, tuple[str, ...]] = {}
        members: dict[str, list[str]] = {}
        for d in self.devices.values():
            for dom in d.domains:
                members.setdefault(dom, []).append(d.id)
        self.domains = {k: tuple(sorted(v)) for k, v in sorted(members.items())}
        self._link_graph: nx.Graph | None = None
        # derived data that consumers may cache; valid because the topology never changes
        self.memo: dict = {}

    # -- lookups ---------------------------------------------------------------

    def __getitem__(self, device_id: str) -> Device:
        try:
            return self.devices[device_id]
        except KeyError:
            raise TopologyError(f"unknown device {device_id!r}") from None

    def __contains__(self, device_id: str) -> bool:
        return device_id in self.devices

    def of_kind(self, *kinds: str) -> list[str]:
        return sorted(d.id for d in self.devices.values() if d.kind in kinds)

    @property
    def users(self) -> list[str]:
        return self.of_kind(USER)

    @property
    def repeaters(self) -> list[str]:
        return self.of_kind(REPEATER, EDGE)

    @property
    def central_controller(self) -> str | None:
        cc = self.of_kind(CENTRAL_CTRL)
        return cc[0] if cc else None

    def domain_names(self) -> list[str]:
        return [d for d in self.domains if controller_id(d) in self.devices]

    def members(self, domain: str) -> tuple[str, ...]:
        """Non-controller devices of ``domain``."""
        return tuple(m for m in self.domains.get(domain, ()) if not self.devices[m].is_controller)

    def shared_domains(self, a: str, b: str) -> tuple[str, ...]:
        da, db = self[a].domains, self[b].domains
        return tuple(sorted(set(da) & set(db)))

    def qchannel(self, a: str, b: str) -> Channel:
        try:
            return self.qchannels[frozenset((a, b))]
        except KeyError:
            raise TopologyError(f"no quantum channel {a}-{b}") from None

    def cchannel(self, a: str, b: str) -> Channel:
        key = frozenset((a, b))
        ch = self.cchannels.get(key) or self.qchannels.get(key)
        if ch is None:
            raise TopologyError(f"no classical channel {a}-{b}")
        return ch

    def domain_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.domain_names())
        for d in self.devices.values():
            if d.kind == EDGE:
                for x, y in itertools.combinations(sorted(d.domains), 2):
                    g.add_edge(x, y)
        return g

    def link_graph(self) -> nx.Graph:
        """Graph of device pairs that can share an entanglement pair directly."""
        if self._link_graph is None:
            g = nx.Graph()
            g.add_nodes_from(self.users + self.repeaters)
            if self.mode == HIERARCHICAL:
                for dom in self.domain_names():
                    for x, y in itertools.combinations(self.members(dom), 2):
                        g.add_edge(x, y)
            else:
                for ch in self.qchannels.values():
                    if not (self[ch.a].is_controller or self[ch.b].is_controller):
                        g.add_edge(ch.a, ch.b)
            self._link_graph = g
        return self._link_graph

    def neighbours(self, device_id: str) -> list[str]:
        return sorted(self.link_graph().neighbors(device_id))

    def link_count(self) -> int:
        return self.link_graph().number_of_edges()

    # -- derived copies ----------------------------------------------------------

    def with_env(self, device_env: Callable[[Device], EnvParams] | None = None,
                 channel_env: Callable[[Channel], EnvParams] | None = None) -> "Topology":
        devs = [replace(d, env=device_env(d)) if device_env else d for d in self.devices.values()]
        chans = []
        for ch in itertools.chain(self.qchannels.values(), self.cchannels.values()):
            if channel_env is not None and ch.quantum:
                ch = replace(ch, env=channel_env(ch))
            chans.append(ch)
        return Topology(self.mode, devs, chans)

    def with_uniform_env(self, env: EnvParams) -> "Topology":
        return self.with_env(lambda d: env.with_(length_km=d.env.length_km),
                             lambda ch: env.with_(length_km=ch.env.length_km))

    def with_memory_kind(self, kind: str) -> "Topology":
        devs = [replace(d, memories=tuple(replace(m, kind=kind) for m in d.memories))
                if d.kind in (USER, REPEATER, EDGE) else d for d in self.devices.values()]
        return Topology(self.mode, devs,
                        itertools.chain(self.qchannels.values(), self.cchannels.values()))

    def __repr__(self) -> str:
        return (f"Topology({self.mode}, {len(self.devices)} devices, "
                f"{len(self.qchannels)} quantum / {len(self.cchannels)} classical channels)")


# ---------------------------------------------------------------------------
# builders


def _cell_center(i: int, j: int) -> tuple[float, float]:
    return (2.0 * j + 1.0, 2.0 * i + 1.0)


def _user_positions(rings: int) -> tuple[tuple[float, float], tuple[float, float]]:
    side = 2 * rings - 1
    ax, ay = _cell_center(0, 0)
    bx, by = _cell_center(side - 1, side - 1)
    return (ax, ay + 0.8), (bx, by - 0.8)


def _check_rings(rings: int) -> int:
    if not isinstance(rings, int) or rings < 1:
        raise TopologyError(f"rings must be an integer >= 1, got {rings!r}")
    return 2 * rings - 1


def build_hierarchical_cellular(rings: int, length_km: float = DEFAULT_LENGTH_KM,
                                env: EnvParams | None = None,
                                memory_kind: str = "optical") -> Topology:
    side = _check_rings(rings)
    env = (env or EnvParams()).with_(length_km=length_km)
    names = {(i, j): letters(i * side + j) for i in range(side) for j in range(side)}
    devices: list[Device] = []
    channels: list[Channel] = []

    cx, cy = _cell_center((side - 1) / 2, (side - 1) / 2)  # type: ignore[arg-type]
    devices.append(Device("CC", CENTRAL_CTRL, (), (), (cx, cy), env))
    for (i, j), dom in names.items():
        lc = controller_id(dom)
        devices.append(Device(lc, LOCAL_CTRL, (dom,), _memories(LOCAL_CTRL, "atomic"),
                              _cell_center(i, j), env, preparator=True))
        channels.append(Channel(lc, "CC", False, env))

    borders = []
    for (i, j) in sorted(names, key=lambda c: c[0] * side + c[1]):
        for di, dj in ((0, 1), (1, 0)):
            if (i + di, j + dj) in names:
                borders.append(((i, j), (i + di, j + dj)))
    borders.sort(key=lambda b: (b[0][0] * side + b[0][1], b[1][0] * side + b[1][1]))
    for k, (c1, c2) in enumerate(borders):
        rid = f"R_{letters(k)}"
        p1, p2 = _cell_center(*c1), _cell_center(*c2)
        devices.append(Device(rid, EDGE, (names[c1], names[c2]), _memories(EDGE, memory_kind),
                              ((p1[0] + p2[0]) / 2, (p1[1] + p2[1]) / 2), env))

    pa, pb = _user_positions(rings)
    devices.append(Device("U_A", USER, (names[0, 0],), _memories(USER, memory_kind), pa, env))
    devices.append(Device("U_B", USER, (names[side - 1, side - 1],),
                          _memories(USER, memory_kind), pb, env))

    for d in devices:
        if d.kind in (USER, EDGE, REPEATER):
            for dom in d.domains:
                channels.append(Channel(d.id, controller_id(dom), True, env))
                channels.append(Channel(d.id, controller_id(dom), False, env))
    return Topology(HIERARCHICAL, devices, channels)


_DIAMOND = {"N": (0.0, -0.5), "E": (0.5, 0.0), "S": (0.0, 0.5), "W": (-0.5, 0.0)}


def build_distributed_cellular(rings: int, length_km: float = DEFAULT_LENGTH_KM,
                               env: EnvParams | None = None,
                               memory_kind: str = "optical") -> Topology:
    side = _check_rings(rings)
    env = (env or EnvParams()).with_(length_km=length_km)
    devices: list[Device] = []
    channels: list[Channel] = []

    def rid(i: int, j: int, d: str) -> str:
        return f"R_{letters(i * side + j)}{d}"

    def link(a: str, b: str) -> None:
        channels.append(Channel(a, b, True, env))
        channels.append(Channel(a, b, False, env))

    for i in range(side):
        for j in range(side):
            cx, cy = _cell_center(i, j)
            for d, (dx, dy) in _DIAMOND.items():
                devices.append(Device(rid(i, j, d), REPEATER, (letters(i * side + j),),
                                      _memories(REPEATER, memory_kind), (cx + dx, cy + dy),
                                      env, preparator=True))
            for a, b in (("N", "E"), ("E", "S"), ("S", "W"), ("W", "N")):
                link(rid(i, j, a), rid(i, j, b))
            if j + 1 < side:
                link(rid(i, j, "E"), rid(i, j + 1, "W"))
            if i + 1 < side:
                link(rid(i, j, "S"), rid(i + 1, j, "N"))

    pa, pb = _user_positions(rings)
    last = side - 1
    devices.append(Device("U_A", USER, (letters(0),), _memories(USER, memory_kind), pa, env))
    devices.append(Device("U_B", USER, (letters(last * side + last),),
                          _memories(USER, memory_kind), pb, env))
    link("U_A", rid(0, 0, "S"))
    link("U_B", rid(last, last, "N"))
    return Topology(DISTRIBUTED, devices, channels)


def build_parallel_chains(repeater_counts: Iterable[int], length_km: float = DEFAULT_LENGTH_KM,
                          env: EnvParams | None = None,
                          memory_kind: str = "optical") -> Topology:
    """Hierarchical layout with independent repeater chains between two users.

    Chain ``k`` with ``n`` repeaters gives a route of ``n + 1`` segments:
    ``U_A (S) r1 (k1) r2 ... rn (T) U_B``.
    """
    env = (env or EnvParams()).with_(length_km=length_km)
    devices = [Device("CC", CENTRAL_CTRL, (), (), (0.0, 0.0), env)]
    channels: list[Channel] = []
    doms = {"S", "T"}
    for k, n in enumerate(repeater_counts):
        if n < 1:
            raise TopologyError("each chain needs at least one repeater")
        chain = ["S"] + [f"P{letters(k)}{m}" for m in range(1, n)] + ["T"]
        doms.update(chain)
        for m in range(n):
            devices.append(Device(f"R_{letters(k)}{m + 1}", EDGE, (chain[m], chain[m + 1]),
                                  _memories(EDGE, memory_kind), (float(m + 1), float(k)), env))
    for dom in sorted(doms):
        lc = controller_id(dom)
        devices.append(Device(lc, LOCAL_CTRL, (dom,), _memories(LOCAL_CTRL, "atomic"),
                              (0.0, 0.0), env, preparator=True))
        channels.append(Channel(lc, "CC", False, env))
    devices.append(Device("U_A", USER, ("S",), _memories(USER, memory_kind), (0.0, 0.0), env))
    devices.append(Device("U_B", USER, ("T",), _memories(USER, memory_kind), (9.0, 0.0), env))
    for d in devices:
        if d.kind in (USER, EDGE):
            for dom in d.domains:
                channels.append(Channel(d.id, controller_id(dom), True, env))
                channels.append(Channel(d.id, controller_id(dom), False, env))
    return Topology(HIERARCHICAL, devices, channels)


# ---------------------------------------------------------------------------
# domain tables


DomainHop = tuple[str, str]


def build_dspt_dert(t: Topology) -> tuple[dict[tuple[str, str], list[tuple[DomainHop, ...]]],
                                         dict[tuple[str, str], list[str]]]:
    """Domain shortest-path table and domain edge-repeater table.

    ``dspt[(a, b)]`` lists every tied-shortest domain route as a sequence of
    domain hops; ``dspt[(a, a)] == [()]``.  Unreachable pairs map to ``[]``.
    """
    if t.mode != HIERARCHICAL:
        raise TopologyError("domain tables need a hierarchical topology")
    g = t.domain_graph()
    doms = sorted(g.nodes)
    dspt: dict[tuple[str, str], list[tuple[DomainHop, ...]]] = {}
    for a in doms:
        lengths = nx.single_source_shortest_path_length(g, a)
        for b in doms:
            if a == b:
                dspt[a, b] = [()]
            elif b not in lengths:
                dspt[a, b] = []
            else:
                seqs = sorted(tuple(p) for p in nx.all_shortest_paths(g, a, b))
                dspt[a, b] = [tuple(zip(p, p[1:])) for p in seqs]
    dert: dict[tuple[str, str], list[str]] = {}
    for d in t.devices.values():
        if d.kind == EDGE:
            for x, y in itertools.permutations(d.domains, 2):
                dert.setdefault((x, y), []).append(d.id)
    for k in dert:
        dert[k].sort()
    return dspt, dert


# ---------------------------------------------------------------------------
# cost models


def maintenance_cost(t: Topology) -> int:
    """One unit per entanglement preparator."""
    return sum(1 for d in t.devices.values() if d.preparator)


def control_plane_load(concurrent_qps: float) -> float:
    """Classical bytes/s the control plane handles at the given offered load."""
    if concurrent_qps < 0:
        raise TopologyError("qps must be >= 0")
    return BYTES_PER_COMMUNICATION * concurrent_qps


# ---------------------------------------------------------------------------
# line-oriented text format


def _fmt_env(e: EnvParams) -> str:
    return ",".join(repr(float(v)) for v in
                    (e.depolarizing_rate, e.dephasing_rate, e.loss_init, e.loss_noise, e.length_km))


def _parse_env(s: str) -> EnvParams:
    vals = [float(v) for v in s.split(",")]
    if len(vals) != 5:
        raise TopologyError(f"env needs 5 values, got {s!r}")
    return EnvParams(*vals)


def dumps(t: Topology) -> str:
    lines = [f"topology {t.mode}"]
    for d in sorted(t.devices.values(), key=lambda d: d.id):
        mems = ",".join(f"{m.kind}:{m.name}" for m in d.memories) or "-"
        doms = ",".join(d.domains) or "-"
        lines.append(f"device {d.id} {d.kind} domains={doms} pos={d.pos[0]!r},{d.pos[1]!r} "
                     f"memories={mems} env={_fmt_env(d.env)} preparator={int(d.preparator)}")
    for kind, chans in (("qchannel", t.qchannels), ("cchannel", t.cchannels)):
        for ch in sorted(chans.values(), key=lambda c: (c.a, c.b)):
            lines.append(f"{kind} {ch.a} {ch.b} env={_fmt_env(ch.env)}")
    return "\n".join(lines) + "\n"


def _fields(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep:
            raise TopologyError(f"line {lineno}: expected key=value, got {tok!r}")
        out[key] = val
    return out


def loads(text: str) -> Topology:
    mode = None
    devices: list[Device] = []
    channels: list[Channel] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "topology":
                mode = tok[1]
            elif tok[0] == "device":
                f = _fields(tok[3:], lineno)
                mems = () if f["memories"] == "-" else tuple(
                    MemorySlot(name, kind) for kind, name in
                    (m.split(":", 1) for m in f["memories"].split(",")))
                doms = () if f["domains"] == "-" else tuple(f["domains"].split(","))
                x, y = (float(v) for v in f["pos"].split(","))
                devices.append(Device(tok[1], tok[2], doms, mems, (x, y), _parse_env(f["env"]),
                                      bool(int(f.get("preparator", "0")))))
            elif tok[0] in ("qchannel", "cchannel"):
                f = _fields(tok[3:], lineno)
                channels.append(Channel(tok[1], tok[2], tok[0] == "qchannel",
                                        _parse_env(f["env"])))
            else:
                raise TopologyError(f"line {lineno}: unknown record {tok[0]!r}")
        except (KeyError, IndexError, ValueError) as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"line {lineno}: malformed record: {exc}") from None
    if mode is None:
        raise TopologyError("missing 'topology <mode>' header")
    return Topology(mode, devices, channels)


def iter_segments(path: Iterable[str]) -> Iterator[tuple[str, str]]:
    p = list(path)
    return zip(p, p[1:])

"""Central and local state matrices, memory reservation and path notation."""
from __future__ import annotations

import copy
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .topology import CENTRAL_CTRL, LOCAL_CTRL, Topology, controller_id

IDLE, OCCUPY = "idle", "occupy"
NORMAL, MAINTAIN = "normal", "maintain"
STAT_WINDOW = 50
RETRY_LIMIT = 3

FIELDS = ("DomainName", "DeviceName", "DeviceState", "MemoryName", "MemoryState", "AimPair",
          "AimCommunication", "AimNode", "DistributionState", "PreparationState",
          "SwappingState", "TeleportationState", "LinkState", "SwappingSuccessRate")


class ControlError(ValueError):
    pass


class ReservationFailure(RuntimeError):
    def __init__(self, device: str, needed: int, idle: int):
        super().__init__(f"{device}: needs {needed} idle memories, has {idle}")
        self.device = device
        self.needed = needed
        self.idle = idle


class RateWindow:
    """Success fraction over the last ``size`` events; 1.0 before any event."""

    def __init__(self, size: int = STAT_WINDOW):
        self._events: deque[bool] = deque(maxlen=size)

    def add(self, success: bool) -> float:
        self._events.append(bool(success))
        return self.value

    @property
    def value(self) -> float:
        if not self._events:
            return 1.0
        return sum(self._events) / len(self._events)

    def __len__(self) -> int:
        return len(self._events)


@dataclass
class MemoryRecord:
    name: str
    state: str = IDLE
    aim_pair: str | None = None
    aim_communication: str | None = None

    def clear(self) -> None:
        self.state, self.aim_pair, self.aim_communication = IDLE, None, None


@dataclass
class DeviceRecord:
    domain: str
    name: str
    state: str = NORMAL
    aim_node: str | None = None
    distribution_state: bool = False
    preparation_state: bool = False
    swapping_state: bool = False
    teleportation_state: bool = False
    memories: list[MemoryRecord] = field(default_factory=list)
    link_window: RateWindow = field(default_factory=RateWindow, repr=False, compare=False)
    swap_window: RateWindow = field(default_factory=RateWindow, repr=False, compare=False)

    @property
    def link_state(self) -> float:
        return self.link_window.value

    @property
    def swapping_success_rate(self) -> float:
        return self.swap_window.value

    def idle(self) -> list[MemoryRecord]:
        return [m for m in self.memories if m.state == IDLE]

    def memory(self, name: str) -> MemoryRecord:
        for m in self.memories:
            if m.name == name:
                return m
        raise ControlError(f"{self.name} has no memory {name!r}")

    def rows(self) -> list[tuple]:
        head = (self.domain, self.name, self.state)
        tail = (self.aim_node or "-", int(self.distribution_state), int(self.preparation_state),
                int(self.swapping_state), int(self.teleportation_state),
                round(self.link_state, 4), round(self.swapping_success_rate, 4))
        mems = self.memories
        cols = (";".join(m.name for m in mems) or "-",
                ";".join(m.state for m in mems) or "-",
                ";".join(m.aim_pair or "-" for m in mems) or "-",
                ";".join(m.aim_communication or "-" for m in mems) or "-")
        return [head + cols + tail]

    def snapshot_key(self) -> tuple:
        return (self.rows(), tuple(self.link_window._events), tuple(self.swap_window._events))


@dataclass
class LocalStateMatrix:
    domain: str
    devices: dict[str, DeviceRecord]


# ---------------------------------------------------------------------------
# path notation


@dataclass(frozen=True)
class PathMiddle:
    """Route as chosen by a routing algorithm, before any reservation.

    ``segment_domains[k]`` is the domain whose controller serves the segment
    between ``devices[k]`` and ``devices[k + 1]`` (``None`` for distributed
    links).  Only the users' memories are known at this point.
    """
    devices: tuple[str, ...]
    segment_domains: tuple[str | None, ...] = ()
    user_memories: tuple[str, str] = ("um_1", "um_1")

    def __post_init__(self):
        if self.devices and len(self.segment_domains) != len(self.devices) - 1:
            raise ControlError("need one domain annotation per segment")

    @property
    def hops(self) -> int:
        return max(len(self.devices) - 1, 0)

    @property
    def repeaters(self) -> tuple[str, ...]:
        return self.devices[1:-1]

    @property
    def segments(self) -> list[tuple[str, str]]:
        return list(zip(self.devices, self.devices[1:]))

    def __str__(self) -> str:
        parts = []
        n = len(self.devices)
        for k, dev in enumerate(self.devices):
            ctrl = [self.segment_domains[s] for s in (k - 1, k) if 0 <= s < n - 1]
            tags = [controller_id(d) for d in ctrl if d is not None]
            if k == 0:
                tags.append(self.user_memories[0])
            elif k == n - 1:
                tags.append(self.user_memories[1])
            parts.append(f"{dev}[{','.join(tags)}]")
        return " -> ".join(parts)


@dataclass(frozen=True)
class CompletePath:
    middle: PathMiddle
    session: str
    # per segment: (controller id or None, controller memories)
    segment_memories: tuple[tuple[str | None, tuple[str, ...]], ...]
    # per segment: (memory at left end, memory at right end)
    endpoint_memories: tuple[tuple[str, str], ...]

    @property
    def devices(self) -> tuple[str, ...]:
        return self.middle.devices

    def device_memories(self, k: int) -> tuple[str, ...]:
        out = []
        if k > 0:
            out.append(self.endpoint_memories[k - 1][1])
        if k < len(self.endpoint_memories):
            out.append(self.endpoint_memories[k][0])
        return tuple(out)

    def __str__(self) -> str:
        parts = []
        n = len(self.devices)
        for k, dev in enumerate(self.devices):
            tags = []
            for s in (k - 1, k):
                if 0 <= s < n - 1 and self.segment_memories[s][0] is not None:
                    lc, mems = self.segment_memories[s]
                    tags.append(f"{lc}({','.join(mems)})")
            tags.extend(self.device_memories(k))
            parts.append(f"{dev}[{','.join(tags)}]")
        return " -> ".join(parts)


# ---------------------------------------------------------------------------


class CentralStateMatrix:
    """Global device table owned by the central controller.

    Mutations take a lock so that concurrent callers are serialized; readers
    wanting a consistent view should use :meth:`snapshot`.
    """

    def __init__(self, topology: Topology, controller_memories_per_segment: int = 2):
        self.topology = topology
        self.per_segment = controller_memories_per_segment
        self.devices: dict[str, DeviceRecord] = {}
        self.tree: dict[str, list[str]] = {}
        self._sessions: set[str] = set()
        self._lock = threading.RLock()
        for dev in topology.devices.values():
            if dev.kind == CENTRAL_CTRL:
                continue
            self.devices[dev.id] = DeviceRecord(
                domain=dev.domains[0] if dev.domains else "-", name=dev.id,
                memories=[MemoryRecord(m.name) for m in dev.memories])
            for dom in dev.domains:
                self.tree.setdefault(dom, []).append(dev.id)
        for dom in self.tree:
            self.tree[dom].sort()

    # -- lookups ---------------------------------------------------------------

    def __getitem__(self, name: str) -> DeviceRecord:
        try:
            return self.devices[name]
        except KeyError:
            raise ControlError(f"unknown device {name!r}") from None

    def available(self, name: str) -> bool:
        return self[name].state == NORMAL

    def maintained(self) -> set[str]:
        return {n for n, r in self.devices.items() if r.state == MAINTAIN}

    def link_state(self, name: str) -> float:
        return self[name].link_state

    def swap_rate(self, name: str) -> float:
        return self[name].swapping_success_rate

    def snapshot(self) -> "CentralStateMatrix":
        with self._lock:
            clone = copy.copy(self)
            clone.devices = copy.deepcopy(self.devices)
            clone.tree = {k: list(v) for k, v in self.tree.items()}
            clone._sessions = set(self._sessions)
            clone._lock = threading.RLock()
            return clone

    def occupied(self, session: str | None = None) -> list[tuple[str, str]]:
        return sorted((d.name, m.name) for d in self.devices.values() for m in d.memories
                      if m.state == OCCUPY and (session is None or m.aim_communication == session))

    # -- local state matrices ------------------------------------------------------

    def lsm(self, domain: str) -> LocalStateMatrix:
        if domain not in self.tree:
            raise ControlError(f"unknown domain {domain!r}")
        with self._lock:
            return LocalStateMatrix(domain, {n: copy.deepcopy(self.devices[n])
                                             for n in self.tree[domain]})

    def report_lsm(self, lsm: LocalStateMatrix) -> "CentralStateMatrix":
        if lsm.domain not in self.tree:
            raise ControlError(f"unknown domain {lsm.domain!r}")
        unknown = set(lsm.devices) - set(self.tree[lsm.domain])
        if unknown:
            raise ControlError(f"devices {sorted(unknown)} are not in domain {lsm.domain}")
        with self._lock:
            for name, rec in lsm.devices.items():
                self.devices[name] = copy.deepcopy(rec)
        return self

    # -- statistics -----------------------------------------------------------------

    def update_link_state(self, name: str, success: bool) -> float:
        with self._lock:
            return self[name].link_window.add(success)

    def update_swap_rate(self, name: str, success: bool) -> float:
        with self._lock:
            return self[name].swap_window.add(success)

    def mark_maintain(self, name: str) -> None:
        with self._lock:
            self[name].state = MAINTAIN

    def mark_normal(self, name: str) -> None:
        with self._lock:
            self[name].state = NORMAL

    # -- reservation --------------------------------------------------------------------

    def reserve_user_memory(self, user: str, session: str) -> str | None:
        with self._lock:
            idle = self[user].idle()
            if not idle:
                return None
            idle[0].state, idle[0].aim_communication = OCCUPY, session
            self._sessions.add(session)
            return idle[0].name

    def reserve_memories(self, path: PathMiddle, session: str) -> CompletePath:
        """Occupy every memory the path needs, or nothing at all."""
        devs = path.devices
        if len(devs) < 2:
            raise ControlError("a path needs at least two devices")
        with self._lock:
            demand: dict[str, int] = {}
            for k, dom in enumerate(path.segment_domains):
                if dom is not None:
                    lc = controller_id(dom)
                    demand[lc] = demand.get(lc, 0) + self.per_segment
            for r in path.repeaters:
                demand[r] = demand.get(r, 0) + 2
            user_mems = []
            for user, mem in ((devs[0], path.user_memories[0]), (devs[-1], path.user_memories[1])):
                rec = self[user].memory(mem)
                if rec.state == OCCUPY and rec.aim_communication != session:
                    raise ReservationFailure(user, 1, len(self[user].idle()))
                user_mems.append(rec)
            for name in sorted(demand):
                rec = self[name]
                if rec.state == MAINTAIN:
                    raise ReservationFailure(name, demand[name], 0)
                idle = len(rec.idle())
                if idle < demand[name]:
                    raise ReservationFailure(name, demand[name], idle)

            def take(name: str, n: int) -> tuple[str, ...]:
                got = self[name].idle()[:n]
                for m in got:
                    m.state, m.aim_communication = OCCUPY, session
                return tuple(m.name for m in got)

            for rec in user_mems:
                rec.state, rec.aim_communication = OCCUPY, session
            seg_mems = []
            for dom in path.segment_domains:
                if dom is None:
                    seg_mems.append((None, ()))
                else:
                    lc = controller_id(dom)
                    seg_mems.append((lc, take(lc, self.per_segment)))
            rep_mems = {r: take(r, 2) for r in path.repeaters}
            ends = []
            for k in range(path.hops):
                left = path.user_memories[0] if k == 0 else rep_mems[devs[k]][1]
                right = (path.user_memories[1] if k == path.hops - 1
                         else rep_mems[devs[k + 1]][0])
                ends.append((left, right))
            self._sessions.add(session)
            return CompletePath(path, session, tuple(seg_mems), tuple(ends))

    def set_pair(self, a: str, mem_a: str, b: str, mem_b: str) -> None:
        """Record that two occupied memories now hold one entangled pair."""
        with self._lock:
            ra, rb = self[a].memory(mem_a), self[b].memory(mem_b)
            if ra.state != OCCUPY or rb.state != OCCUPY:
                raise ControlError("pairs can only be recorded on occupied memories")
            ra.aim_pair, rb.aim_pair = f"{b}.{mem_b}", f"{a}.{mem_a}"

    def clear_pair(self, a: str, mem_a: str) -> None:
        with self._lock:
            self[a].memory(mem_a).aim_pair = None

    def release_memories(self, session: str) -> int:
        """Return every memory of ``session`` to idle.  Repeated calls are no-ops."""
        with self._lock:
            if session not in self._sessions:
                raise ControlError(f"unknown session {session!r}")
            n = 0
            for rec in self.devices.values():
                for m in rec.memories:
                    if m.aim_communication == session:
                        m.clear()
                        n += 1
                if rec.aim_node is not None and n:
                    rec.aim_node = None
            return n

    def set_flags(self, names: Iterable[str], **flags: bool) -> None:
        with self._lock:
            for n in names:
                rec = self[n]
                for k, v in flags.items():
                    setattr(rec, k, v)

    # -- debugging ------------------------------------------------------------------------

    def dump(self) -> str:
        rows = [FIELDS]
        for name in sorted(self.devices):
            rows.extend(self.devices[name].rows())
        rows = [tuple(str(c) for c in r) for r in rows]
        widths = [max(len(r[i]) for r in rows) for i in range(len(FIELDS))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                         for r in rows) + "\n"

    def state_key(self) -> tuple:
        """Hashable summary used to compare matrices in tests."""
        return tuple((n, self.devices[n].snapshot_key()) for n in sorted(self.devices))


def report_lsm(csm: CentralStateMatrix, lsm: LocalStateMatrix) -> CentralStateMatrix:
    return csm.report_lsm(lsm)


def reserve_memories(csm: CentralStateMatrix, path: PathMiddle, session: str) -> CompletePath:
    return csm.reserve_memories(path, session)


def segment_domain_choices(t: Topology, a: str, b: str) -> Sequence[str]:
    doms = t.shared_domains(a, b)
    return [d for d in doms if controller_id(d) in t.devices
            and t[controller_id(d)].kind == LOCAL_CTRL]

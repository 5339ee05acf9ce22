"""Path selection: centralized evaluated routing plus three baseline algorithms.

Route time is reported by a deterministic cost model rather than wall-clock
time, so results do not depend on the host.  Each algorithm counts the
elementary steps it performs and the classical round trips it needs:

* one step costs ``STEP_MS``;
* one classical hop (controller to controller, or device to device) costs
  ``CLASSICAL_HOP_MS`` (100 km of fibre plus processing).
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import networkx as nx
import numpy as np

from .control import CentralStateMatrix, PathMiddle
from .noise import ROUTING_WEIGHTS
from .topology import DomainHop, Topology, TopologyError

STEP_MS = 1e-4
CLASSICAL_HOP_MS = 0.5 + 0.001
DEFAULT_RECURSION = 2

LinkProb = Callable[[str, str], float]


class NoPathFound(RuntimeError):
    pass


def score_repeater(swap_rate: float, link_state: float) -> float:
    for v in (swap_rate, link_state):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"rate {v!r} outside [0, 1]")
    w_swap, w_link = ROUTING_WEIGHTS
    return w_swap * swap_rate + w_link * link_state


@dataclass(frozen=True)
class ScoredPath:
    path: PathMiddle
    score: float
    hops: int

    def sort_key(self) -> tuple:
        return (-round(self.score, 12), self.hops, self.path.devices)


@dataclass
class RouteResult:
    path: PathMiddle | None
    consumption: float
    time_ms: float
    compute_ms: float = -1.0  # time spent before any path is known; defaults to time_ms
    candidates: list[ScoredPath] = field(default_factory=list)
    detours: dict[tuple[str, str], tuple[str, ...] | None] = field(default_factory=dict)
    used_detours: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.compute_ms < 0:
            self.compute_ms = self.time_ms

    @property
    def delivered(self) -> bool:
        return self.path is not None


# ---------------------------------------------------------------------------
# helpers


def annotate(t: Topology, devices: Sequence[str], user_memories=("um_1", "um_1")) -> PathMiddle:
    """Attach the serving domain (or ``None`` for direct links) to every segment."""
    doms: list[str | None] = []
    for a, b in zip(devices, devices[1:]):
        if t.mode == "distributed":
            doms.append(None)
            continue
        shared = t.shared_domains(a, b)
        if not shared:
            raise TopologyError(f"{a} and {b} share no domain")
        doms.append(shared[0])
    return PathMiddle(tuple(devices), tuple(doms), tuple(user_memories))


def _bfs(adj: Callable[[str], Iterable[str]], src: str, dst: str,
         allowed: Callable[[str], bool] = lambda n: True) -> tuple[list[str] | None, int]:
    """Minimum-hop path, lexicographic tie-break through sorted neighbour order."""
    if src == dst:
        return [src], 1
    parent = {src: None}
    queue = deque([src])
    steps = 0
    while queue:
        node = queue.popleft()
        for nb in sorted(adj(node)):
            steps += 1
            if nb in parent or (nb != dst and not allowed(nb)):
                continue
            parent[nb] = node
            if nb == dst:
                path = [dst]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1], steps
            queue.append(nb)
    return None, steps


def has_consecutive_same_domain(t: Topology, devices: Sequence[str]) -> bool:
    for a, b, c in zip(devices, devices[1:], devices[2:]):
        if set(t[a].domains) & set(t[b].domains) & set(t[c].domains):
            return True
    return False


def path_score(csm: CentralStateMatrix, devices: Sequence[str]) -> float:
    """Summed device scores over the segment count.

    The end users are scored like repeaters, so ``n`` equally good devices
    give ``n / (n - 1)`` times the device score: every extra hop costs score.
    """
    if len(devices) < 2:
        raise ValueError("a path needs two devices")
    total = sum(score_repeater(csm.swap_rate(d), csm.link_state(d)) for d in devices)
    return total / (len(devices) - 1)


# ---------------------------------------------------------------------------
# centralized evaluated routing


def _seed_paths(t: Topology, dspt, dert, src: str, dst: str) -> list[tuple[str, ...]]:
    d_src, d_dst = t[src].domains[0], t[dst].domains[0]
    routes: list[tuple[DomainHop, ...]] = dspt.get((d_src, d_dst), [])
    seeds = []
    for route in routes:
        choices = [dert.get(hop, []) for hop in route]
        for reps in itertools.product(*choices):
            seeds.append((src, *reps, dst))
    return seeds


def _replacements(t: Topology, path: tuple[str, ...], k: int,
                  ok: Callable[[str], bool]) -> Iterator:
    """Paths with ``path[k]`` swapped for two neighbouring repeaters."""
    nbr = t.neighbours
    p, r, q = path[k - 1], path[k], path[k + 1]
    on_path = set(path)
    near_r = set(nbr(r))
    for x in nbr(p):
        if x in on_path or not ok(x) or t[x].kind == "user":
            continue
        for y in nbr(x):
            if y in on_path or y == x or not ok(y) or t[y].kind == "user":
                continue
            if q not in t.link_graph()[y]:
                continue
            if x in near_r or y in near_r:
                yield path[:k] + (x, y) + path[k + 1:]


def _expand(t: Topology, dspt, dert, src: str, dst: str, recursion_n: int,
            ok: Callable[[str], bool]) -> tuple[list[PathMiddle], int]:
    steps = 0
    seeds = _seed_paths(t, dspt, dert, src, dst)
    candidates: set[tuple[str, ...]] = set(seeds)
    previous = sorted(seeds)
    for _ in range(recursion_n):
        current: set[tuple[str, ...]] = set()
        for path in previous:
            for k in range(1, len(path) - 1):
                for new in _replacements(t, path, k, ok):
                    steps += 1
                    if new not in candidates:
                        current.add(new)
        if not current:
            break
        candidates |= current
        previous = sorted(current)
    valid = []
    for devs in sorted(candidates):
        steps += len(devs)
        if has_consecutive_same_domain(t, devs) or not all(ok(d) for d in devs):
            continue
        valid.append(annotate(t, devs))
    return valid, steps


def cer_route(csm: CentralStateMatrix, dspt, dert, src: str, dst: str,
              recursion_n: int = DEFAULT_RECURSION, cache: dict | None = None) -> RouteResult:
    """Candidates from the domain tables, widened by repeater replacement, then scored.

    Candidate enumeration depends only on which devices are unavailable, so
    a caller may pass ``cache`` (a dict it owns) to reuse it between calls.
    """
    t = csm.topology

    def ok(n: str) -> bool:
        return csm.available(n)

    if cache is None:
        paths, steps = _expand(t, dspt, dert, src, dst, recursion_n, ok)
    else:
        down = frozenset(csm.maintained())
        key = (src, dst, recursion_n, down)
        if key not in cache:
            cache[key] = _expand(t, dspt, dert, src, dst, recursion_n, ok)
        paths, steps = cache[key]

    scored = [ScoredPath(mid, path_score(csm, mid.devices), mid.hops) for mid in paths]
    scored.sort(key=ScoredPath.sort_key)
    # request to the central controller, then the reservation round trip
    # through the local controllers
    compute_ms = steps * STEP_MS
    time_ms = 3 * CLASSICAL_HOP_MS + compute_ms
    if not scored:
        raise NoPathFound(f"no valid candidate path {src} -> {dst}")
    best = scored[0]
    return RouteResult(best.path, best.path.hops, time_ms, compute_ms, candidates=scored)


def cer_candidates(csm, dspt, dert, src, dst, recursion_n=DEFAULT_RECURSION) -> list[ScoredPath]:
    return cer_route(csm, dspt, dert, src, dst, recursion_n).candidates


# ---------------------------------------------------------------------------
# baselines


def greedy_route(t: Topology, src: str, dst: str) -> RouteResult:
    if src == dst:
        return RouteResult(PathMiddle(()), 0, 0.0)
    g = t.link_graph()
    devs, steps = _bfs(lambda n: g[n], src, dst, lambda n: t[n].kind != "user")
    if devs is None:
        raise NoPathFound(f"{src} and {dst} are disconnected")
    mid = annotate(t, devs)
    return RouteResult(mid, mid.hops, steps * STEP_MS)


def slmp_route(t: Topology, src: str, dst: str, rng: np.random.Generator,
               link_success: LinkProb | None = None) -> RouteResult:
    """Distribute on every link first, then route over the links that succeeded."""
    g = t.link_graph()
    edges = sorted(tuple(sorted(e)) for e in g.edges)
    draws = rng.random(len(edges))
    up: dict[str, set[str]] = {n: set() for n in g.nodes}
    for (a, b), u in zip(edges, draws):
        p = 1.0 if link_success is None else link_success(a, b)
        if u < p:
            up[a].add(b)
            up[b].add(a)
    devs, steps = _bfs(lambda n: up[n], src, dst, lambda n: t[n].kind != "user")
    # one distribution round with its herald, then link-state flooding
    # across the network diameter
    reach = g.subgraph(nx.node_connected_component(g, src))
    flood_hops = nx.diameter(reach) if reach.number_of_nodes() > 1 else 0
    time_ms = (2 + flood_hops) * CLASSICAL_HOP_MS + (steps + len(edges)) * STEP_MS
    if devs is None:
        raise NoPathFound(f"{src} and {dst} disconnected after link sampling")
    return RouteResult(annotate(t, devs), len(edges), time_ms)


def qcast_route(t: Topology, csm: CentralStateMatrix | None, src: str, dst: str,
                rng: np.random.Generator | None = None,
                link_success: LinkProb | None = None,
                fail_segments: Iterable[tuple[str, str]] = ()) -> RouteResult:
    """Resource-aware shortest path plus one precomputed detour per segment.

    A segment fails with probability ``1 - link_success(a, b)`` (or when
    listed in ``fail_segments``); the detour is then spliced in.  Consumption
    is the primary segment count plus the extra segments the detours add.
    """
    g = t.link_graph()

    def ok(n: str) -> bool:
        if t[n].kind == "user":
            return False
        if csm is None:
            return True
        return len(csm[n].idle()) >= 2

    devs, steps = _bfs(lambda n: g[n], src, dst, ok)
    if devs is None:
        raise NoPathFound(f"{src} and {dst} are disconnected")
    primary = tuple(devs)
    detours: dict[tuple[str, str], tuple[str, ...] | None] = {}
    for a, b in zip(primary, primary[1:]):
        banned = set(primary) - {a, b}

        def adj(n: str, a=a, b=b) -> Iterable[str]:
            return (m for m in g[n] if {n, m} != {a, b})

        alt, s = _bfs(adj, a, b, lambda n, banned=banned: ok(n) and n not in banned)
        steps += s
        detours[a, b] = tuple(alt) if alt else None

    forced = {tuple(s) for s in fail_segments} | {tuple(reversed(s)) for s in fail_segments}
    final: list[str] = [primary[0]]
    used = []
    consumption = len(primary) - 1
    delivered = True
    for a, b in zip(primary, primary[1:]):
        failed = (a, b) in forced
        if not failed and link_success is not None and rng is not None:
            failed = rng.random() >= link_success(a, b)
        if failed:
            alt = detours[a, b]
            if alt is None:
                delivered = False
                final.append(b)
                continue
            used.append((a, b))
            consumption += len(alt) - 2
            final.extend(alt[1:])
        else:
            final.append(b)
    # computed locally from neighbour knowledge; no controller round trip
    time_ms = steps * STEP_MS
    path = annotate(t, final) if delivered else None
    return RouteResult(path, consumption, time_ms, detours=detours, used_detours=used)


ALGORITHMS = ("cer", "greedy", "qcast", "slmp")

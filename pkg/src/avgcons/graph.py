"""Directed graphs and per-round communication schedules.

Edge convention, used throughout the package: the pair ``(u, v)`` means
that v receives what u sends.  Every graph carries a self-loop at each
node (an agent always hears itself); constructors add the loops
implicitly rather than requiring callers to list them.

A :class:`DynamicSchedule` assigns one graph to every round t >= 1.  The
assignment is a pure function of (schedule seed, t): the sequence is
fixed before any protocol randomness is drawn, i.e. the adversary
choosing the topology is oblivious to the agents' coin flips.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from functools import cached_property
from itertools import product as iproduct
from typing import Iterable, Optional

from .seeds import stable_seed

# Exhaustive subset checks (c-in-connectivity) are capped at this size.
MAX_SUBSET_CHECK_N = 20


@dataclass(frozen=True)
class DirectedGraph:
    """Immutable directed graph on nodes 0..n-1 with mandatory self-loops."""

    n: int
    edges: frozenset[tuple[int, int]]

    @cached_property
    def in_neighbor_lists(self) -> tuple[tuple[int, ...], ...]:
        """For each node v, the sorted tuple of u with (u, v) in edges."""
        ins: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            ins[v].append(u)
        return tuple(tuple(sorted(vs)) for vs in ins)

    @cached_property
    def out_neighbor_lists(self) -> tuple[tuple[int, ...], ...]:
        outs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            outs[u].append(v)
        return tuple(tuple(sorted(vs)) for vs in outs)

    def to_json(self) -> dict:
        """JSON form; self-loops are omitted and restored on read."""
        plain = sorted((u, v) for u, v in self.edges if u != v)
        return {"n": self.n, "edges": [[u, v] for u, v in plain]}


def make_graph(n: int, edges: Iterable[tuple[int, int]] = ()) -> DirectedGraph:
    """Build a graph from an edge list, adding all self-loops.

    Raises ValueError if any endpoint falls outside [0, n).
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    es = set()
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
        es.add((u, v))
    es.update((u, u) for u in range(n))
    return DirectedGraph(n, frozenset(es))


def graph_from_json(obj: dict) -> DirectedGraph:
    return make_graph(int(obj["n"]), [(int(u), int(v)) for u, v in obj["edges"]])


def loops_only(n: int) -> DirectedGraph:
    return make_graph(n, ())


def ring_graph(n: int) -> DirectedGraph:
    """Directed cycle 0 -> 1 -> ... -> n-1 -> 0, plus loops."""
    return make_graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> DirectedGraph:
    return make_graph(n, iproduct(range(n), range(n)))


def product(g: DirectedGraph, h: DirectedGraph) -> DirectedGraph:
    """Graph product: (u, w) present iff some v has (u, v) in g and (v, w) in h.

    Composes one-round reachability: a two-round relay through any
    intermediate node.  Both factors carrying self-loops guarantees the
    result does too.
    """
    if g.n != h.n:
        raise ValueError(f"node count mismatch: {g.n} != {h.n}")
    h_out = h.out_neighbor_lists
    es = set()
    for u in range(g.n):
        for v in g.out_neighbor_lists[u]:
            for w in h_out[v]:
                es.add((u, w))
    return DirectedGraph(g.n, frozenset(es))


def is_strongly_connected(g: DirectedGraph) -> bool:
    """True iff every ordered node pair is joined by a directed path."""
    if g.n == 1:
        return True
    return _reaches_all(g.out_neighbor_lists, 0) and _reaches_all(g.in_neighbor_lists, 0)


def _reaches_all(adj: tuple[tuple[int, ...], ...], start: int) -> bool:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(adj)


def is_complete(g: DirectedGraph) -> bool:
    return len(g.edges) == g.n * g.n


def is_c_in_connected(g: DirectedGraph, c: int) -> bool:
    """True iff every non-empty S has >= min(c, |V\\S|) in-neighbors outside S.

    An in-neighbor of S is a node w outside S with an edge into S.
    Checked by exhaustive subset enumeration, so n is capped at
    MAX_SUBSET_CHECK_N.
    """
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    if g.n > MAX_SUBSET_CHECK_N:
        raise ValueError(f"subset enumeration capped at n={MAX_SUBSET_CHECK_N}, got {g.n}")
    ins = g.in_neighbor_lists
    for mask in range(1, 1 << g.n):
        members = [v for v in range(g.n) if mask >> v & 1]
        outside = g.n - len(members)
        need = min(c, outside)
        if need == 0:
            continue
        feeders = {u for v in members for u in ins[v] if not (mask >> u & 1)}
        if len(feeders) < need:
            return False
    return True


def random_strongly_connected(n: int, rng: random.Random) -> DirectedGraph:
    """Random strongly connected self-looped graph.

    A random Hamiltonian cycle certifies strong connectivity; k extra
    random edges, k drawn uniformly from [0, n], vary the topology.
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    perm = list(range(n))
    rng.shuffle(perm)
    edges = {(perm[i], perm[(i + 1) % n]) for i in range(n)}
    for _ in range(rng.randint(0, n)):
        edges.add((rng.randrange(n), rng.randrange(n)))
    # Hot path of the schedule generators: endpoints are valid by
    # construction, so skip make_graph's validation pass.
    edges.update((u, u) for u in range(n))
    return DirectedGraph(n, frozenset(edges))


def random_c_in_connected(n: int, c: int, rng: random.Random) -> DirectedGraph:
    """Random graph passing is_c_in_connected(., c), by generate-and-check.

    Starts from a random Hamiltonian cycle (already 1-in-connected) and
    adds random edges at increasing density until the subset check
    passes.  Falls back to the complete graph if rejection somehow keeps
    failing; at the supported sizes this is unreachable in practice.
    c may exceed n-1: the requirement saturates at |V \\ S| in-neighbors.
    """
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    for attempt in range(60):
        perm = list(range(n))
        rng.shuffle(perm)
        edges = {(perm[i], perm[(i + 1) % n]) for i in range(n)}
        p = min(0.95, 0.15 * c + 0.05 * attempt)
        for u in range(n):
            for v in range(n):
                if u != v and rng.random() < p:
                    edges.add((u, v))
        g = make_graph(n, edges)
        if is_c_in_connected(g, c):
            return g
    return complete_graph(n)


@dataclass(frozen=True)
class DynamicSchedule:
    """Round -> graph mapping, fixed ahead of time and lazily evaluated.

    kind is one of "fixed", "csc", "delayed", "c_connected", "blocking".
    Re-querying any round returns an identical graph; nothing about the
    mapping depends on protocol randomness.
    """

    kind: str
    n: int
    seed: int = 0
    delay: Optional[int] = None
    c: Optional[int] = None
    ell: Optional[int] = None
    graph: Optional[DirectedGraph] = None

    @cached_property
    def _key_prefix(self):
        # Pre-hashed (kind, n, seed) so the per-round key derivation only
        # has to absorb t; equal to stable_seed(kind, n, seed, t).
        h = hashlib.sha256()
        for p in (self.kind, self.n, self.seed):
            h.update(repr(p).encode("utf-8"))
            h.update(b"\x1f")
        return h

    def round_key(self, t: int) -> int:
        h = self._key_prefix.copy()
        h.update(repr(t).encode("utf-8"))
        h.update(b"\x1f")
        return int.from_bytes(h.digest()[:8], "little", signed=False)

    def graph_at(self, t: int) -> DirectedGraph:
        if t < 1:
            raise ValueError(f"rounds start at 1, got {t}")
        if self.kind == "fixed":
            assert self.graph is not None
            return self.graph
        if self.kind == "csc":
            return random_strongly_connected(self.n, random.Random(self.round_key(t)))
        if self.kind == "c_connected":
            return random_c_in_connected(self.n, self.c, random.Random(self.round_key(t)))
        if self.kind == "delayed":
            return self._delayed_graph(t)
        if self.kind == "blocking":
            return complete_graph(self.n) if t % 2 == 0 else loops_only(self.n)
        raise ValueError(f"unknown schedule kind {self.kind!r}")

    def _delayed_graph(self, t: int) -> DirectedGraph:
        # One fixed random Hamiltonian cycle, its edges dealt out with
        # period T.  Any T consecutive rounds then cover the whole cycle,
        # and since all graphs have self-loops the window product
        # contains the union of the window's graphs: strongly connected.
        rng = random.Random(stable_seed(self.kind, self.n, self.seed))
        perm = list(range(self.n))
        rng.shuffle(perm)
        cycle = [(perm[i], perm[(i + 1) % self.n]) for i in range(self.n)]
        slot = (t - 1) % self.delay
        return make_graph(self.n, cycle[slot :: self.delay])

    def to_json(self) -> dict:
        params: dict = {}
        if self.delay is not None:
            params["delay"] = self.delay
        if self.c is not None:
            params["c"] = self.c
        if self.ell is not None:
            params["ell"] = self.ell
        if self.graph is not None:
            params["graph"] = self.graph.to_json()
        return {"kind": self.kind, "n": self.n, "seed": self.seed, "params": params}


def schedule_from_json(obj: dict) -> DynamicSchedule:
    kind, n, seed = obj["kind"], int(obj["n"]), int(obj.get("seed", 0))
    params = obj.get("params", {})
    if kind == "fixed":
        return schedule_fixed(graph_from_json(params["graph"]))
    if kind == "csc":
        return schedule_csc_random(n, seed)
    if kind == "delayed":
        return schedule_delayed(n, int(params["delay"]), seed)
    if kind == "c_connected":
        return schedule_c_connected(n, int(params["c"]), seed)
    if kind == "blocking":
        return schedule_blocking_adversary(n, int(params["ell"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


def schedule_fixed(g: DirectedGraph) -> DynamicSchedule:
    """The same graph in every round."""
    return DynamicSchedule(kind="fixed", n=g.n, graph=g)


def schedule_csc_random(n: int, seed: int) -> DynamicSchedule:
    """A fresh random strongly connected graph each round."""
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    return DynamicSchedule(kind="csc", n=n, seed=seed)


def schedule_delayed(n: int, delay: int, seed: int) -> DynamicSchedule:
    """Every window of `delay` consecutive rounds has a strongly connected
    product; individual rounds generally do not (except delay=1)."""
    if n < 1 or delay < 1:
        raise ValueError(f"need n >= 1 and delay >= 1, got n={n}, delay={delay}")
    return DynamicSchedule(kind="delayed", n=n, seed=seed, delay=delay)


def schedule_c_connected(n: int, c: int, seed: int) -> DynamicSchedule:
    """Every round's graph is c-in-connected (denser than plain csc)."""
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    return DynamicSchedule(kind="c_connected", n=n, seed=seed, c=c)


def schedule_blocking_adversary(n: int, ell: int) -> DynamicSchedule:
    """Alternates loops-only (odd rounds) and complete (even rounds).

    Every 2-round window product is complete, yet against a protocol that
    rotates through an even number ell of vector entries, the entries hit
    on odd rounds only ever see the loops-only graph and never mix.  The
    parity argument needs ell even.
    """
    if ell < 2 or ell % 2 != 0:
        raise ValueError(f"ell must be even and >= 2, got {ell}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return DynamicSchedule(kind="blocking", n=n, ell=ell)

"""Protocol graphs: dotted-complete graphs, hidden role partitions, line graphs.

Vertex ids in a dotted-complete graph on ``M`` primary vertices are
``0..M-1`` for the primaries, followed by one added vertex per pair
``(i, j)``, ``i < j``, in lexicographic pair order.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import qsim

COMPUTATION = "computation"
TRAP1 = "trap1"
TRAP2 = "trap2"
DUMMY = "dummy"
UNASSIGNED = "unassigned"
TRAP_ROLES = (TRAP1, TRAP2)
ROLES = (COMPUTATION, TRAP1, TRAP2, DUMMY, UNASSIGNED)


class GraphError(ValueError):
    pass


@dataclass
class ProtocolGraph:
    vertices: list[int]
    edges: list[tuple[int, int]]
    origin: dict[int, str]
    role: dict[int, str] = field(default_factory=dict)
    # added vertex -> the primary pair it subdivides
    bridges: dict[int, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise GraphError(f"self-loop on {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        self.edges = sorted(seen)
        for v in self.vertices:
            self.role.setdefault(v, UNASSIGNED)
        self._adj = {v: set() for v in self.vertices}
        for a, b in self.edges:
            self._adj[a].add(b)
            self._adj[b].add(a)

    def neighbours(self, v: int) -> list[int]:
        return sorted(self._adj[v])

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    @property
    def primaries(self) -> list[int]:
        return [v for v in self.vertices if self.origin[v] == "primary"]

    @property
    def added(self) -> list[int]:
        return [v for v in self.vertices if self.origin[v] == "added"]

    def with_roles(self, roles: dict[int, str]) -> "ProtocolGraph":
        return ProtocolGraph(list(self.vertices), list(self.edges), dict(self.origin),
                             dict(roles), dict(self.bridges))

    def to_json(self) -> str:
        return json.dumps({
            "vertices": self.vertices,
            "edges": [list(e) for e in self.edges],
            "origin": {str(v): o for v, o in self.origin.items()},
            "roles": {str(v): r for v, r in self.role.items()},
            "bridges": {str(v): list(p) for v, p in self.bridges.items()},
        })

    @classmethod
    def from_json(cls, text: str) -> "ProtocolGraph":
        obj = json.loads(text)
        return cls(
            vertices=list(obj["vertices"]),
            edges=[tuple(e) for e in obj["edges"]],
            origin={int(k): v for k, v in obj["origin"].items()},
            role={int(k): v for k, v in obj.get("roles", {}).items()},
            bridges={int(k): tuple(v) for k, v in obj.get("bridges", {}).items()},
        )


def dotted_complete(N: int) -> ProtocolGraph:
    """Complete graph K_N with every edge subdivided by a new vertex."""
    if N < 2:
        raise GraphError("dotted-complete graph needs N >= 2")
    vertices = list(range(N))
    origin = {v: "primary" for v in vertices}
    edges, bridges = [], {}
    nxt = N
    for i, j in itertools.combinations(range(N), 2):
        vertices.append(nxt)
        origin[nxt] = "added"
        bridges[nxt] = (i, j)
        edges += [(i, nxt), (j, nxt)]
        nxt += 1
    return ProtocolGraph(vertices, edges, origin, bridges=bridges)


def protocol_qubit_count(N: int) -> int:
    """3N(3N + 1)/2, the vertex count of the dotted graph on 3N primaries."""
    if N < 1:
        raise GraphError("N must be >= 1")
    return 3 * N * (3 * N + 1) // 2


def padded_size(N: int) -> int:
    return N + 1 if N % 2 else N


@dataclass(frozen=True)
class Partition:
    roles: dict[int, str]
    seed: int
    computation_edges: tuple[tuple[int, int], ...]

    def vertices_with(self, role: str) -> list[int]:
        return sorted(v for v, r in self.roles.items() if r == role)

    @property
    def traps(self) -> list[int]:
        return sorted(v for v, r in self.roles.items() if r in TRAP_ROLES)

    @property
    def dummies(self) -> list[int]:
        return self.vertices_with(DUMMY)

    def dummy_neighbour_counts(self, graph: ProtocolGraph) -> dict[int, int]:
        return {t: sum(self.roles[u] == DUMMY for u in graph.neighbours(t)) for t in self.traps}

    def has_odd_parity_trap(self, graph: ProtocolGraph) -> bool:
        return any(c % 2 for c in self.dummy_neighbour_counts(graph).values())

    def validate(self, graph: ProtocolGraph, require_odd_trap: bool = True) -> None:
        """Raise ``GraphError`` if any partition invariant fails."""
        if set(self.roles) != set(graph.vertices):
            raise GraphError("roles do not cover the vertex set")
        prim = graph.primaries
        counts = {r: sum(self.roles[v] == r for v in prim) for r in (COMPUTATION, TRAP1, TRAP2)}
        if len(set(counts.values())) != 1 or sum(counts.values()) != len(prim):
            raise GraphError(f"primary vertices are not split evenly: {counts}")
        for t in self.traps:
            if any(self.roles[u] != DUMMY for u in graph.neighbours(t)):
                raise GraphError(f"trap {t} has a non-dummy neighbour")
        if require_odd_trap and not self.has_odd_parity_trap(graph):
            raise GraphError("no trap has an odd number of dummy neighbours")


def hidden_partition(graph: ProtocolGraph, seed: int, computation_edges=None) -> Partition:
    """Uniformly 3-colour the primaries and break the dotted graph accordingly.

    Computation primaries are linked into a path in ascending id order unless
    ``computation_edges`` lists pairs of computation *ranks* (0..N-1) to keep.
    An added vertex stays a computation qubit only when both endpoints are
    computation vertices joined in the target graph; every other added vertex
    is a dummy.
    """
    prim = graph.primaries
    if len(prim) % 3 or len(prim) < 3 or len(graph.added) != len(prim) * (len(prim) - 1) // 2:
        raise GraphError("graph is not a dotted-complete graph on 3N primaries")
    for v in graph.added:
        if graph.degree(v) != 2:
            raise GraphError(f"added vertex {v} does not have degree 2")
    N = len(prim) // 3
    rng = np.random.default_rng(seed)
    perm = [prim[i] for i in rng.permutation(len(prim))]
    comp = sorted(perm[:N])
    roles = {v: COMPUTATION for v in comp}
    roles.update({v: TRAP1 for v in perm[N:2 * N]})
    roles.update({v: TRAP2 for v in perm[2 * N:]})
    if computation_edges is None:
        ranked = [(k, k + 1) for k in range(N - 1)]
    else:
        ranked = [tuple(sorted(e)) for e in computation_edges]
    target = {(comp[a], comp[b]) for a, b in ranked}
    for v in graph.added:
        a, b = graph.bridges[v]
        keep = (min(a, b), max(a, b)) in target
        roles[v] = COMPUTATION if keep else DUMMY
    return Partition(roles, int(seed), tuple(sorted(target)))


def build_graph_state(plan: ProtocolGraph, vertex_states: dict) -> qsim.QuantumRegister:
    """Tensor the per-vertex states (ascending vertex id) and apply CZ per edge."""
    order = sorted(plan.vertices)
    if len(order) > qsim.STATEVECTOR_CAP:
        raise qsim.CapacityError(f"{len(order)} qubits exceeds the statevector cap")
    pos = {v: i for i, v in enumerate(order)}
    vecs = []
    for v in order:
        s = vertex_states[v]
        vecs.append(s.data if isinstance(s, qsim.QuantumRegister) else np.asarray(s, dtype=complex))
    reg = qsim.tensor(*vecs)
    for a, b in plan.edges:
        reg = qsim.apply_cz(reg, pos[a], pos[b])
    return reg


def line_graph(n: int, trap: int | None = None, seed: int | None = None) -> ProtocolGraph:
    """Path on ``n`` vertices with one isolated trap and dummy insulation.

    The trap position is ``trap`` if given, else uniform from ``seed``.
    Path neighbours of the trap are dummies; the rest are computation.
    """
    if n < 2:
        raise GraphError("line graph needs n >= 2")
    if trap is None:
        trap = int(np.random.default_rng(seed).integers(n))
    if not 0 <= trap < n:
        raise GraphError("trap position out of range")
    roles = {v: COMPUTATION for v in range(n)}
    roles[trap] = TRAP1
    for u in (trap - 1, trap + 1):
        if 0 <= u < n:
            roles[u] = DUMMY
    return ProtocolGraph(list(range(n)), [(i, i + 1) for i in range(n - 1)],
                         {v: "primary" for v in range(n)}, roles)

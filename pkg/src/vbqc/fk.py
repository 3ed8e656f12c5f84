"""Single-prover verifiable blind computation with traps.

The verifier sends one qubit per graph vertex, the prover entangles them
with CZ along the public graph and measures each qubit at the angle the
verifier streams to it.  The verifier accepts iff every trap reports its
expected outcome.

Computation subgraphs are unions of paths ("wires").  Along a wire the
one-way-model flow is used: qubit ``k`` picks up an X byproduct from qubit
``k-1`` and a Z byproduct from qubit ``k-2``.  Angles are carried as grid
indices (``k * pi/4``) modulo 8.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import graphs, qsim
from .graphs import COMPUTATION, DUMMY, TRAP_ROLES
from .stats import Estimate, estimate, split_seed

ACCEPT = "accept"
REJECT = "reject"
LOCAL_ROTATION = "local-rotation"
# full-register cross-check of the calibrated distance below this size
VERIFY_QUBITS = 12
ENV_CORRELATED = "env-correlated"


class ProtocolAbort(Exception):
    """The prover sent a malformed message."""


def soundness_bound(d: int) -> float:
    """(2/3)^ceil(2d/5)."""
    if d < 1:
        raise ValueError("security parameter must be >= 1")
    return (2 / 3) ** math.ceil(2 * d / 5)


# ---------------------------------------------------------------------------
# measurement order, wires and the target computation


def measurement_order(graph: graphs.ProtocolGraph) -> list[int]:
    """Public, role-independent order.

    Dotted graphs: each primary ``k`` followed by the added vertices bridging
    it to higher primaries.  Other graphs: ascending vertex id.
    """
    if not graph.bridges:
        return sorted(graph.vertices)
    by_low: dict[int, list[int]] = {}
    for v, (a, b) in graph.bridges.items():
        by_low.setdefault(min(a, b), []).append(v)
    order = []
    for p in sorted(graph.primaries):
        order.append(p)
        order += sorted(by_low.get(p, []), key=lambda v: max(graph.bridges[v]))
    return order


def computation_wires(graph: graphs.ProtocolGraph, roles: dict, order: Sequence[int]) -> list[list[int]]:
    """Connected computation components, each a path listed in measurement order."""
    pos = {v: i for i, v in enumerate(order)}
    comp = {v for v in graph.vertices if roles[v] == COMPUTATION}
    seen, wires = set(), []
    for start in sorted(comp, key=pos.get):
        if start in seen:
            continue
        stack, members = [start], []
        seen.add(start)
        while stack:
            v = stack.pop()
            members.append(v)
            for u in graph.neighbours(v):
                if u in comp and u not in seen:
                    seen.add(u)
                    stack.append(u)
        members.sort(key=pos.get)
        for a, b in zip(members, members[1:]):
            if b not in graph.neighbours(a):
                raise graphs.GraphError("computation component is not a path in measurement order")
        wires.append(members)
    return wires


def wire_output_probability(phi: Sequence[int]) -> float:
    """Probability that the decoded last outcome of an ideal wire is 0.

    Exact branch enumeration on a path graph state with |+> inputs.
    """
    L = len(phi)
    reg = qsim.tensor(*[qsim.plus_vector(0)] * L) if L > 1 else qsim.plus_theta(0)
    for k in range(L - 1):
        reg = qsim.apply_cz(reg, k, k + 1)
    p0 = 0.0
    for outcomes in np.ndindex(*(2,) * L):
        amp = reg.data.reshape((2,) * L) if L > 1 else reg.data
        psi = amp
        for k in range(L):
            sx = outcomes[k - 1] if k >= 1 else 0
            sz = outcomes[k - 2] if k >= 2 else 0
            ang = ((-1) ** sx * phi[k] + 4 * sz + 4 * outcomes[k]) % 8
            psi = np.tensordot(qsim.plus_vector(ang).conj(), psi, axes=(0, 0))
        if outcomes[-1] == 0:
            p0 += float(abs(psi) ** 2)
    return p0


@functools.lru_cache(maxsize=None)
def canonical_wire_angles(L: int, computation_seed: int) -> tuple[tuple[int, ...], int]:
    """Grid angles for a wire of length ``L`` whose output bit is deterministic.

    Returns ``(angles, ideal_output_bit)``.
    """
    rng = np.random.default_rng(split_seed(computation_seed, 1000 + L))
    for _ in range(10_000):
        phi = tuple(int(x) for x in rng.integers(8, size=L))
        p0 = wire_output_probability(phi)
        if p0 > 1 - 1e-9:
            return phi, 0
        if p0 < 1e-9:
            return phi, 1
    raise RuntimeError(f"no deterministic wire of length {L} found")


# ---------------------------------------------------------------------------
# secrets


@dataclass
class VerifierSecrets:
    graph: graphs.ProtocolGraph            # public structure
    roles: dict[int, str]
    theta: dict[int, int]                  # non-dummy qubits
    r: dict[int, int]                      # non-dummy qubits
    dummy_values: dict[int, int]
    dummy_delta: dict[int, int]            # uniformly random angles sent for dummies
    trap_bits: dict[int, int]              # trap angle = trap_bit * pi
    phi: dict[int, int]                    # computation angles
    wires: list[list[int]]
    ideal_output: tuple[int, ...]
    order: list[int]
    seed: int | None = None

    def __post_init__(self):
        for v, t in self.theta.items():
            if not 0 <= t < 8:
                raise ValueError(f"theta for {v} off the grid")
        if any(b not in (0, 1) for b in list(self.r.values()) + list(self.trap_bits.values())):
            raise ValueError("r bits and trap bits must be 0 or 1")

    @property
    def traps(self) -> list[int]:
        return sorted(v for v, r in self.roles.items() if r in TRAP_ROLES)

    @property
    def n_qubits(self) -> int:
        return len(self.graph.vertices)

    def dummy_parity(self, v: int) -> int:
        return sum(self.dummy_values[u] for u in self.graph.neighbours(v) if self.roles[u] == DUMMY) % 2

    def ideal_vectors(self) -> dict[int, np.ndarray]:
        out = {}
        for v in self.graph.vertices:
            if self.roles[v] == DUMMY:
                out[v] = np.eye(2, dtype=complex)[self.dummy_values[v]]
            else:
                out[v] = qsim.plus_vector(self.theta[v])
        return out


def _sample_common(graph, roles, rng, computation_seed, seed) -> VerifierSecrets:
    order = measurement_order(graph)
    wires = computation_wires(graph, roles, order)
    phi, ideal = {}, []
    for w in wires:
        angles, bit = canonical_wire_angles(len(w), computation_seed)
        phi.update(zip(w, angles))
        ideal.append(bit)
    theta, r, dummy_values, dummy_delta, trap_bits = {}, {}, {}, {}, {}
    for v in order:
        if roles[v] == DUMMY:
            dummy_values[v] = int(rng.integers(2))
            dummy_delta[v] = int(rng.integers(8))
        else:
            theta[v] = int(rng.integers(8))
            r[v] = int(rng.integers(2))
            if roles[v] in TRAP_ROLES:
                trap_bits[v] = int(rng.integers(2))
    return VerifierSecrets(graph, dict(roles), theta, r, dummy_values, dummy_delta, trap_bits,
                           phi, wires, tuple(ideal), order, seed)


@dataclass(frozen=True)
class FKSetup:
    """Family of protocol instances from which fresh secrets are drawn.

    ``kind="dotted"`` uses the dotted-complete graph on ``3N`` primaries
    (``size = N``, padded to even ``N`` when ``pad``); ``kind="line"`` uses
    the single-trap path on ``size`` vertices.
    """

    kind: str = "dotted"
    size: int = 1
    pad: bool = False
    computation_seed: int = 0

    @property
    def effective_size(self) -> int:
        if self.kind == "dotted" and self.pad:
            return graphs.padded_size(self.size)
        return self.size

    def base_graph(self) -> graphs.ProtocolGraph:
        if self.kind == "dotted":
            return graphs.dotted_complete(3 * self.effective_size)
        if self.kind == "line":
            return graphs.line_graph(self.size, trap=0)
        raise ValueError(f"unknown setup kind {self.kind!r}")

    @property
    def n_qubits(self) -> int:
        if self.kind == "dotted":
            return graphs.protocol_qubit_count(self.effective_size)
        return self.size

    def sample_secrets(self, seed: int) -> VerifierSecrets:
        rng = np.random.default_rng(seed)
        if self.kind == "dotted":
            graph = graphs.dotted_complete(3 * self.effective_size)
            part = graphs.hidden_partition(graph, int(rng.integers(2**63)))
            roles = part.roles
        else:
            graph = graphs.line_graph(self.size, seed=int(rng.integers(2**63)))
            roles = graph.role
        return _sample_common(graph, roles, rng, self.computation_seed, seed)

    def secrets_for_roles(self, roles: dict, seed: int) -> VerifierSecrets:
        graph = self.base_graph()
        return _sample_common(graph, roles, np.random.default_rng(seed), self.computation_seed, seed)


# ---------------------------------------------------------------------------
# inputs


Label = "int | str"


@dataclass
class FKInput:
    """Input handed to the prover as independent blocks.

    Each block is ``(labels, state)``: ``labels`` are vertex ids, or strings
    ``"env:<v>"`` for environment qubits that travel with the input.  A
    ``state`` is a statevector over the labels (big-endian) or, for single
    qubits, possibly a 2x2 density matrix.
    """

    blocks: list[tuple[tuple, np.ndarray]]

    @property
    def vertex_labels(self) -> list[int]:
        return sorted(l for labels, _ in self.blocks for l in labels if isinstance(l, (int, np.integer)))

    def reduced_blocks(self) -> dict[int, np.ndarray]:
        """Per-vertex reduced density matrix (environment traced out)."""
        out = {}
        for labels, state in self.blocks:
            verts = [i for i, l in enumerate(labels) if not isinstance(l, str)]
            if len(verts) != 1:
                raise ValueError("reduced_blocks expects one vertex per block")
            if state.ndim == 2:
                out[labels[verts[0]]] = state
                continue
            reg = qsim.QuantumRegister(state)
            env = [i for i in range(len(labels)) if i not in verts]
            out[labels[verts[0]]] = (qsim.partial_trace(reg, env) if env else reg.as_density()).data
        return out

    def reduced_register(self) -> qsim.QuantumRegister:
        red = self.reduced_blocks()
        return qsim.tensor(*[red[v] for v in sorted(red)])

    def joint_register(self) -> qsim.QuantumRegister:
        """Full pure state over sorted vertices followed by environment labels."""
        labels, vec = [], np.ones(1, dtype=complex)
        for ls, st in self.blocks:
            if st.ndim != 1:
                raise ValueError("joint register needs pure blocks")
            labels += list(ls)
            vec = np.kron(vec, st)
        verts = sorted(l for l in labels if not isinstance(l, str))
        envs = sorted(l for l in labels if isinstance(l, str))
        perm = [labels.index(l) for l in verts + envs]
        n = len(labels)
        vec = np.transpose(vec.reshape((2,) * n), perm).reshape(-1)
        return qsim.QuantumRegister(vec)


def ideal_input(secrets: VerifierSecrets) -> FKInput:
    vecs = secrets.ideal_vectors()
    return FKInput([((v,), vecs[v]) for v in sorted(vecs)])


def prepare_input(secrets: VerifierSecrets) -> qsim.QuantumRegister:
    """Product of |+_theta> (computation, trap) and |0>/|1> (dummy), ascending vertex id."""
    if secrets.n_qubits > qsim.STATEVECTOR_CAP:
        raise qsim.CapacityError(f"{secrets.n_qubits} qubits exceeds the statevector cap")
    vecs = secrets.ideal_vectors()
    return qsim.tensor(*[vecs[v] for v in sorted(vecs)])


def _orth(v: np.ndarray) -> np.ndarray:
    return np.array([-np.conj(v[1]), np.conj(v[0])])


def _product_distance(ideal: Sequence[np.ndarray], actual: Sequence[np.ndarray]) -> float:
    ov = 1.0
    for a, b in zip(ideal, actual):
        ov *= abs(np.vdot(a, b)) ** 2
    return math.sqrt(max(0.0, 1.0 - ov))


def _bisect(f, target: float, hi: float) -> float:
    """Largest x in [0, hi] with f(x) <= target, f nondecreasing."""
    lo = 0.0
    if f(hi) <= target:
        return hi
    for _ in range(80):
        mid = (lo + hi) / 2
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class DeviatedInput:
    input: FKInput
    epsilon: float           # requested
    distance: float          # measured trace distance of the reduced input to the ideal
    mode: str
    parameter: float         # rotation angle or per-qubit mixing weight


def deviate_input(ideal: FKInput, epsilon: float, mode: str = LOCAL_ROTATION, seed: int = 0) -> DeviatedInput:
    """Move the ideal product input to trace distance ``epsilon``.

    ``local-rotation`` tilts every qubit towards its orthogonal state by a
    common angle with a random phase; ``env-correlated`` entangles every
    qubit with an environment qubit, ``sqrt(1-e)|psi>|0> + sqrt(e)|psi_perp>|1>``,
    and the environment is handed to the prover.  The common parameter is
    calibrated by bisection against the exact distance.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    labels = [ls[0] for ls, _ in ideal.blocks]
    vecs = [st for _, st in ideal.blocks]
    K = len(vecs)
    if mode == LOCAL_ROTATION:
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=K))

        def rotated(a):
            return [math.cos(a / 2) * v + math.sin(a / 2) * ph * _orth(v) for v, ph in zip(vecs, phases)]

        a = _bisect(lambda a: _product_distance(vecs, rotated(a)), epsilon, math.pi)
        new = rotated(a)
        dev = FKInput([((l,), v) for l, v in zip(labels, new)])
        dist = _product_distance(vecs, new)
        if K <= VERIFY_QUBITS:
            dist = qsim.trace_distance(qsim.tensor(*vecs), qsim.tensor(*new))
        return DeviatedInput(dev, epsilon, dist, mode, a)
    if mode == ENV_CORRELATED:
        max_eps = 1 - 0.5 ** K
        if epsilon > max_eps + 1e-12:
            raise ValueError(f"epsilon {epsilon} unreachable by env-correlated mixing (max {max_eps:.4g})")

        def dist_of(eta):
            return 1 - (1 - eta) ** K

        eta = _bisect(dist_of, epsilon, 0.5)
        blocks = []
        for l, v in zip(labels, vecs):
            joint = math.sqrt(1 - eta) * np.kron(v, [1, 0]) + math.sqrt(eta) * np.kron(_orth(v), [0, 1])
            blocks.append(((l, f"env:{l}"), joint.astype(complex)))
        dev = FKInput(blocks)
        if K <= qsim.DENSITY_CAP:
            dist = qsim.trace_distance(dev.reduced_register(), qsim.tensor(*vecs))
        else:
            dist = dist_of(eta)
        return DeviatedInput(dev, epsilon, dist, mode, eta)
    raise ValueError(f"unknown deviation mode {mode!r}")


# ---------------------------------------------------------------------------
# prover workspace


class LiveState:
    """Labelled statevector that grows as blocks are loaded and shrinks on measurement."""

    def __init__(self):
        self.labels: list = []
        self.psi = np.ones((), dtype=complex)

    def __contains__(self, label) -> bool:
        return label in self.labels

    def load(self, labels: Sequence, vec: np.ndarray) -> None:
        k = len(labels)
        self.psi = np.multiply.outer(self.psi, np.asarray(vec, dtype=complex).reshape((2,) * k))
        self.labels += list(labels)
        if len(self.labels) > qsim.STATEVECTOR_CAP:
            raise qsim.CapacityError(f"live register exceeds {qsim.STATEVECTOR_CAP} qubits")

    def apply(self, U: np.ndarray, labels: Sequence) -> None:
        k = len(labels)
        axes = [self.labels.index(l) for l in labels]
        U = np.asarray(U, dtype=complex).reshape((2,) * (2 * k))
        out = np.tensordot(U, self.psi, axes=(list(range(k, 2 * k)), axes))
        self.psi = np.moveaxis(out, list(range(k)), axes)

    def cz(self, a, b) -> None:
        i, j = self.labels.index(a), self.labels.index(b)
        idx = [slice(None)] * self.psi.ndim
        idx[i] = 1
        idx[j] = 1
        self.psi[tuple(idx)] *= -1

    def measure(self, label, u0: np.ndarray, rng: np.random.Generator) -> int:
        """Project ``label`` onto {u0, u0_perp}; outcome 0 means u0.  Removes the qubit."""
        ax = self.labels.index(label)
        psi = np.moveaxis(self.psi, ax, 0)
        u1 = _orth(u0)
        rest0 = np.tensordot(u0.conj(), psi, axes=(0, 0))
        p0 = float(np.vdot(rest0, rest0).real)
        total = float(np.vdot(psi, psi).real)
        if rng.random() < p0 / total:
            bit, rest, p = 0, rest0, p0
        else:
            rest = np.tensordot(u1.conj(), psi, axes=(0, 0))
            bit, p = 1, float(np.vdot(rest, rest).real)
        if p <= 0:
            raise qsim.QsimError("sampled a zero-probability branch")
        self.psi = rest / math.sqrt(p)
        del self.labels[ax]
        return bit

    def measure_xy(self, label, delta, rng) -> int:
        if isinstance(delta, (int, np.integer)):
            u0 = qsim.plus_vector(int(delta))
        else:
            u0 = np.array([1, np.exp(1j * delta)]) / math.sqrt(2)
        return self.measure(label, u0, rng)


@dataclass(frozen=True)
class PublicInfo:
    """Everything the prover is allowed to know."""

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    order: tuple[int, ...]


# ---------------------------------------------------------------------------
# prover strategies


class ProverStrategy:
    """Honest prover; subclasses override hooks to deviate.

    Hooks see the public graph, the received blocks and the angle stream;
    never the verifier's secrets.
    """

    name = "honest"
    full_register = False       # entangle everything before the first measurement
    uses_environment = False    # keeps environment qubits instead of discarding them

    def start(self, public: PublicInfo, rng: np.random.Generator) -> None:
        pass

    def receive(self, blocks, public: PublicInfo, rng):
        return blocks

    def after_entangle(self, state: LiveState, public: PublicInfo, rng) -> None:
        pass

    def before_measure(self, state: LiveState, v: int, delta: int, rng) -> None:
        pass

    def measure(self, state: LiveState, v: int, delta: int, rng) -> int:
        return state.measure_xy(v, delta, rng)

    def report(self, v: int, bit: int, rng):
        return bit

    def describe(self) -> dict:
        return {"name": self.name}


Honest = ProverStrategy


class ReflectAll(ProverStrategy):
    """Apply the XY-plane reflection to every received qubit."""

    name = "reflect-all"

    def receive(self, blocks, public, rng):
        out = []
        for labels, st in blocks:
            if st.ndim == 2:
                st = st.conj()
                xs = qsim.X
                out.append((labels, xs @ st @ xs))
                continue
            k = len(labels)
            vec = st.conj().reshape((2,) * k)
            for i, l in enumerate(labels):
                if not isinstance(l, str):
                    vec = np.flip(vec, axis=i)
            out.append((labels, vec.reshape(-1).copy()))
        return out


class FlipTrapsRandomly(ProverStrategy):
    """Apply Z to each qubit with probability ``q`` just before measuring it."""

    name = "flip-traps-randomly"

    def __init__(self, q: float = 1.0):
        self.q = q

    def before_measure(self, state, v, delta, rng):
        if rng.random() < self.q:
            state.apply(qsim.Z, [v])

    def describe(self):
        return {"name": self.name, "q": self.q}


class UnitaryDeviation(ProverStrategy):
    """A fixed unitary on the prover's register, applied after entangling.

    ``targets`` are positions in the sorted vertex list (default: all).
    """

    name = "unitary-deviation"
    full_register = True

    def __init__(self, U: np.ndarray, targets: Sequence[int] | None = None, label: str = ""):
        self.U = np.asarray(U, dtype=complex)
        self.targets = None if targets is None else tuple(targets)
        self.label = label

    def after_entangle(self, state, public, rng):
        verts = sorted(public.vertices)
        tg = range(len(verts)) if self.targets is None else self.targets
        state.apply(self.U, [verts[i] for i in tg])

    def operator(self, n: int) -> np.ndarray:
        """The full ``2**n`` matrix (sorted vertex order)."""
        tg = list(range(n)) if self.targets is None else list(self.targets)
        reg_ops = np.eye(1 << n, dtype=complex)
        cols = [qsim.apply_unitary(qsim.QuantumRegister(reg_ops[:, i]), self.U, tg).data for i in range(1 << n)]
        return np.array(cols).T

    def describe(self):
        return {"name": self.name, "label": self.label, "targets": self.targets}


class RandomPauli(ProverStrategy):
    """Apply one Pauli to a single uniformly chosen qubit (chosen from the prover's own tape)."""

    name = "random-pauli"

    def __init__(self, pauli: str = "Z"):
        self.pauli = pauli
        self._target = None

    def start(self, public, rng):
        self._target = sorted(public.vertices)[int(rng.integers(len(public.vertices)))]

    def before_measure(self, state, v, delta, rng):
        if v == self._target:
            state.apply(qsim.PAULIS[self.pauli], [v])

    def mixture(self, n: int) -> list[tuple[float, UnitaryDeviation]]:
        return [(1 / n, UnitaryDeviation(qsim.PAULIS[self.pauli], [i])) for i in range(n)]

    def describe(self):
        return {"name": self.name, "pauli": self.pauli}


def rz(angle: float) -> np.ndarray:
    return np.diag([1, np.exp(1j * angle)])


class TapeRotation(ProverStrategy):
    """Rotate every qubit about Z by ``sign * gamma`` before measuring it.

    ``sign`` comes from a pre-shared classical tape (for correlated
    two-prover attacks) or from the prover's own randomness.
    """

    name = "tape-rotation"

    def __init__(self, gamma: float, tape_sign: int | None = None):
        self.gamma = gamma
        self.tape_sign = tape_sign
        self._sign = 1

    def start(self, public, rng):
        self._sign = self.tape_sign if self.tape_sign is not None else (1 if rng.random() < 0.5 else -1)

    def before_measure(self, state, v, delta, rng):
        state.apply(rz(self._sign * self.gamma), [v])

    def describe(self):
        return {"name": self.name, "gamma": self.gamma, "tape_sign": self.tape_sign}


class EnvironmentCorrection(ProverStrategy):
    """Correlated attack on env-correlated inputs: read the environment, undo with Z."""

    name = "env-correction"
    uses_environment = True

    def before_measure(self, state, v, delta, rng):
        env = f"env:{v}"
        if env in state:
            if state.measure(env, np.array([1, 0], dtype=complex), rng):
                state.apply(qsim.Z, [v])


class Malformed(ProverStrategy):
    name = "malformed"

    def report(self, v, bit, rng):
        return 2


# ---------------------------------------------------------------------------
# the protocol run


@dataclass
class Record:
    qubit: int
    delta: int
    b: int


@dataclass
class Transcript:
    records: list[Record] = field(default_factory=list)
    verdict: str = REJECT
    output: tuple[int, ...] = ()
    correct: bool = False
    aborted: bool = False

    @property
    def accepted(self) -> bool:
        return self.verdict == ACCEPT

    def to_jsonl(self) -> str:
        lines = [json.dumps({"qubit": r.qubit, "delta": r.delta, "b": r.b}) for r in self.records]
        lines.append(json.dumps({"verdict": self.verdict, "output": list(self.output),
                                 "correct": self.correct, "aborted": self.aborted}))
        return "\n".join(lines)


class Verifier:
    """Classical side of the protocol: streams angles, checks traps, decodes output."""

    def __init__(self, secrets: VerifierSecrets):
        self.s = secrets
        self.decoded: dict[int, int] = {}
        self.wire_pos = {v: (wi, k) for wi, w in enumerate(secrets.wires) for k, v in enumerate(w)}
        self.transcript = Transcript()

    def public(self) -> PublicInfo:
        g = self.s.graph
        return PublicInfo(tuple(g.vertices), tuple(g.edges), tuple(self.s.order))

    def delta(self, v: int) -> int:
        s = self.s
        role = s.roles[v]
        if role == DUMMY:
            return s.dummy_delta[v]
        dp = s.dummy_parity(v)
        if role in TRAP_ROLES:
            return (s.theta[v] + 4 * s.trap_bits[v] + 4 * dp + 4 * s.r[v]) % 8
        return delta_angle(v, s, self.decoded)

    def record(self, v: int, delta: int, b) -> None:
        if b not in (0, 1):
            raise ProtocolAbort(f"malformed reply {b!r} for qubit {v}")
        self.transcript.records.append(Record(v, int(delta), int(b)))
        if self.s.roles[v] != DUMMY:
            self.decoded[v] = int(b) ^ self.s.r[v]

    def finish(self) -> Transcript:
        s, t = self.s, self.transcript
        ok = all(self.decoded[v] == s.trap_bits[v] for v in s.traps)
        t.verdict = ACCEPT if ok else REJECT
        t.output = tuple(self.decoded[w[-1]] for w in s.wires)
        t.correct = t.output == s.ideal_output
        return t


def delta_angle(i: int, secrets: VerifierSecrets, prior_outcomes: dict[int, int]) -> int:
    """theta_i + phi'_i + r_i pi (grid index) for a computation qubit.

    phi'_i = (-1)^sX phi_i + sZ pi, plus pi for an odd number of |1> dummy
    neighbours.  ``prior_outcomes`` maps measured qubits to decoded bits.
    """
    wire_of = {v: w for w in secrets.wires for v in w}
    w = wire_of[i]
    k = w.index(i)
    deps = [w[k - 1]] if k >= 1 else []
    deps += [w[k - 2]] if k >= 2 else []
    missing = [d for d in deps if d not in prior_outcomes]
    if missing:
        raise ValueError(f"dependencies {missing} of qubit {i} not yet measured")
    sx = prior_outcomes[w[k - 1]] if k >= 1 else 0
    sz = prior_outcomes[w[k - 2]] if k >= 2 else 0
    phi_adapted = ((-1) ** sx * secrets.phi[i] + 4 * sz + 4 * secrets.dummy_parity(i)) % 8
    return (secrets.theta[i] + phi_adapted + 4 * secrets.r[i]) % 8


def _sample_block(labels, state, keep_env: bool, rng) -> tuple[tuple, np.ndarray]:
    if state.ndim == 2:
        w, V = np.linalg.eigh(state)
        w = np.clip(w.real, 0, None)
        k = rng.choice(2, p=w / w.sum())
        return labels, V[:, k]
    env = [i for i, l in enumerate(labels) if isinstance(l, str)]
    if keep_env or not env:
        return labels, state
    live = LiveState()
    live.load(labels, state)
    for i in env:
        live.measure(labels[i], np.array([1, 0], dtype=complex), rng)
    return tuple(live.labels), live.psi.reshape(-1)


def run_fk(secrets: VerifierSecrets, strategy: ProverStrategy | None = None,
           input_override: FKInput | DeviatedInput | None = None,
           rng: np.random.Generator | int | None = None) -> Transcript:
    """One interactive run between the verifier and a prover."""
    strategy = strategy or ProverStrategy()
    rng = np.random.default_rng(rng)
    verifier = Verifier(secrets)
    public = verifier.public()
    if isinstance(input_override, DeviatedInput):
        input_override = input_override.input
    sent = input_override if input_override is not None else ideal_input(secrets)
    if sorted(sent.vertex_labels) != sorted(secrets.graph.vertices):
        raise ValueError("input does not cover the graph's qubits")

    strategy.start(public, rng)
    blocks = strategy.receive(list(sent.blocks), public, rng)
    blocks = [_sample_block(ls, st, strategy.uses_environment, rng) for ls, st in blocks]
    block_of = {}
    for i, (ls, _) in enumerate(blocks):
        for l in ls:
            block_of[l] = i
    loaded: set[int] = set()
    state = LiveState()

    def ensure(v):
        i = block_of[v]
        if i not in loaded:
            loaded.add(i)
            state.load(*blocks[i])

    pending = {v: set(secrets.graph.neighbours(v)) for v in secrets.graph.vertices}

    def entangle(v):
        ensure(v)
        for u in sorted(pending[v]):
            ensure(u)
            state.cz(v, u)
            pending[u].discard(v)
        pending[v].clear()

    if strategy.full_register:
        for v in secrets.graph.vertices:
            entangle(v)
        strategy.after_entangle(state, public, rng)

    try:
        for v in secrets.order:
            d = verifier.delta(v)
            entangle(v)
            strategy.before_measure(state, v, d, rng)
            b = strategy.measure(state, v, d, rng)
            verifier.record(v, d, strategy.report(v, b, rng))
    except ProtocolAbort:
        t = verifier.transcript
        t.verdict, t.aborted = REJECT, True
        return t
    return verifier.finish()


# ---------------------------------------------------------------------------
# Monte Carlo estimators


def trial_streams(seed: int, i: int):
    ts = split_seed(seed, i)
    return split_seed(ts, 0), np.random.default_rng(split_seed(ts, 1)), split_seed(ts, 2)


def run_trial(setup: FKSetup, strategy_factory, seed: int, i: int, epsilon: float = 0.0,
              mode: str = LOCAL_ROTATION) -> Transcript:
    sec_seed, rng, dev_seed = trial_streams(seed, i)
    secrets = setup.sample_secrets(sec_seed)
    inp = None
    if epsilon > 0:
        inp = deviate_input(ideal_input(secrets), epsilon, mode, dev_seed)
    strategy = strategy_factory() if callable(strategy_factory) else strategy_factory
    return run_fk(secrets, strategy, inp, rng)


def estimate_completeness(setup: FKSetup, strategy_factory=ProverStrategy, epsilon: float = 0.0,
                          mode: str = LOCAL_ROTATION, trials: int = 1000, seed: int = 0) -> Estimate:
    """Frequency of accept-and-correct runs; reference line 1 - 2 epsilon."""
    hits = 0
    for i in range(trials):
        t = run_trial(setup, strategy_factory, seed, i, epsilon, mode)
        hits += t.accepted and t.correct
    return estimate(hits, trials, reference=1 - 2 * epsilon)


def estimate_p_incorrect(setup: FKSetup, strategy_factory, trials: int = 1000, seed: int = 0) -> Estimate:
    """Frequency of runs that pass every trap yet decode a wrong output.

    Fresh secrets are drawn per trial; the strategy is fixed beforehand.
    """
    hits = 0
    for i in range(trials):
        t = run_trial(setup, strategy_factory, seed, i)
        hits += t.accepted and not t.correct
    return estimate(hits, trials)


def estimate_reject(setup: FKSetup, strategy_factory, trials: int = 1000, seed: int = 0) -> Estimate:
    hits = 0
    for i in range(trials):
        hits += not run_trial(setup, strategy_factory, seed, i).accepted
    return estimate(hits, trials)


# ---------------------------------------------------------------------------
# exhaustive oracle for small line graphs


def exact_line_outcomes(n: int, mixture: Iterable[tuple[float, np.ndarray]],
                        computation_seed: int = 0) -> tuple[float, float]:
    """(P[accept], P[accept and incorrect]) averaged exactly over all secrets.

    ``mixture`` lists ``(weight, U)`` with ``U`` a full ``2**n`` unitary the
    prover applies after entangling.  Every trap position, theta, r, dummy
    value and trap angle is enumerated; dummy outcomes are traced out since
    no verifier decision depends on them.
    """
    if n > 6:
        raise ValueError("exhaustive enumeration is limited to 6 qubits")
    mixture = list(mixture)
    p_acc = p_inc = 0.0
    setup = FKSetup("line", n, computation_seed=computation_seed)
    for t in range(n):
        g = graphs.line_graph(n, trap=t)
        roles = g.role
        order = measurement_order(g)
        wires = computation_wires(g, roles, order)
        phi, ideal = {}, []
        for w in wires:
            angles, bit = canonical_wire_angles(len(w), computation_seed)
            phi.update(zip(w, angles))
            ideal.append(bit)
        nd = [v for v in order if roles[v] != DUMMY]
        du = [v for v in order if roles[v] == DUMMY]
        wire_of = {v: (w, w.index(v)) for w in wires for v in w}

        # batch over (theta for nd) x (dummy values)
        thetas = np.array(list(np.ndindex(*(8,) * len(nd))), dtype=int).reshape(-1, len(nd))
        dvals = np.array(list(np.ndindex(*(2,) * len(du))), dtype=int).reshape(-1, len(du))
        TH = np.repeat(thetas, len(dvals), axis=0)
        DV = np.tile(dvals, (len(thetas), 1))
        B = len(TH)
        states = np.ones((B, 1), dtype=complex)
        for v in range(n):
            if v in nd:
                k = TH[:, nd.index(v)]
                vec = np.stack([np.ones(B), np.exp(1j * np.pi / 4 * k)], axis=1) / math.sqrt(2)
            else:
                vec = np.zeros((B, 2), dtype=complex)
                vec[np.arange(B), DV[:, du.index(v)]] = 1
            states = np.einsum("bi,bj->bij", states, vec).reshape(B, -1)
        sign = np.ones((2,) * n)
        for a, b in g.edges:
            idx = [slice(None)] * n
            idx[a], idx[b] = 1, 1
            sign[tuple(idx)] *= -1
        states = states * sign.reshape(-1)
        parity = {v: sum(DV[:, du.index(u)] for u in g.neighbours(v) if roles[u] == DUMMY) % 2
                  if any(roles[u] == DUMMY for u in g.neighbours(v)) else np.zeros(B, dtype=int)
                  for v in nd}
        for weight, U in mixture:
            final = (states @ np.asarray(U).T).reshape((B,) + (2,) * n)
            # move non-dummy axes first
            perm = [0] + [1 + v for v in nd] + [1 + v for v in du]
            final = np.transpose(final, perm)
            for tb in (0, 1):
                for rbits in np.ndindex(*(2,) * len(nd)):
                    r = dict(zip(nd, rbits))
                    for s in np.ndindex(*(2,) * len(nd)):
                        dec = dict(zip(nd, s))
                        amp = final
                        for j, v in enumerate(nd):
                            if roles[v] == COMPUTATION:
                                w, k = wire_of[v]
                                sx = dec[w[k - 1]] if k >= 1 else 0
                                sz = dec[w[k - 2]] if k >= 2 else 0
                                ad = ((-1) ** sx * phi[v] + 4 * sz) % 8
                            else:
                                ad = 4 * tb
                            delta = (TH[:, j] + ad + 4 * parity[v] + 4 * r[v]) % 8
                            b = dec[v] ^ r[v]
                            ang = (delta + 4 * b) % 8
                            bra = np.stack([np.ones(B), np.exp(-1j * np.pi / 4 * ang)], axis=1) / math.sqrt(2)
                            amp = np.einsum("bi,bi...->b...", bra, amp)
                        prob = (np.abs(amp.reshape(B, -1)) ** 2).sum(axis=1).mean()
                        if dec[t] != tb:
                            continue
                        out = tuple(dec[w[-1]] for w in wires)
                        scale = weight / (n * 2 * 2 ** len(nd))
                        p_acc += scale * prob
                        if out != tuple(ideal):
                            p_inc += scale * prob
    return float(p_acc), float(p_inc)

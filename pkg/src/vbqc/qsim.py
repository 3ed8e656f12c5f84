"""Exact small-system quantum substrate.

States are either pure statevectors (``2**n`` amplitudes) or density
matrices (``2**n x 2**n``).  Qubit ordering is big-endian: qubit 0 is the
most significant bit of a basis index, i.e. axis 0 of ``data.reshape((2,) * n)``.

Angles used by the protocols live on the grid ``k * pi / 4``; they are
stored as integers ``k`` modulo 8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

STATEVECTOR_CAP = 22
DENSITY_CAP = 10
ATOL = 1e-10
ATOL_COMPOSED = 1e-9
ANGLE_GRID = 8


class QsimError(Exception):
    """Base class for substrate errors."""


class InvalidAngleError(QsimError, ValueError):
    pass


class InvalidVectorError(QsimError, ValueError):
    pass


class CapacityError(QsimError):
    pass


class DimensionError(QsimError, ValueError):
    pass


I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


# ---------------------------------------------------------------------------
# angles


def angle_index(theta) -> int:
    """Map an angle to its grid index in ``0..7``.

    Integers are taken as grid indices already; floats are radians and must
    sit on the ``pi/4`` grid.
    """
    if isinstance(theta, (int, np.integer)) and not isinstance(theta, bool):
        return int(theta) % ANGLE_GRID
    k = float(theta) / (math.pi / 4)
    r = round(k)
    if abs(k - r) > 1e-9:
        raise InvalidAngleError(f"angle {theta!r} is not a multiple of pi/4")
    return int(r) % ANGLE_GRID


def angle_radians(k: int) -> float:
    return (int(k) % ANGLE_GRID) * math.pi / 4


# ---------------------------------------------------------------------------
# register


def _check_cap(n: int, pure: bool) -> None:
    cap = STATEVECTOR_CAP if pure else DENSITY_CAP
    if n > cap:
        kind = "statevector" if pure else "density-matrix"
        raise CapacityError(f"{n} qubits exceeds the {kind} cap of {cap}")


@dataclass(frozen=True, eq=False)
class QuantumRegister:
    """Pure or mixed state on ``n_qubits`` qubits (big-endian ordering)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim not in (1, 2):
            raise DimensionError(f"register data must be 1-D or 2-D, got {data.ndim}-D")
        dim = data.shape[0]
        n = dim.bit_length() - 1
        if dim != 1 << n or (data.ndim == 2 and data.shape != (dim, dim)):
            raise DimensionError(f"shape {data.shape} is not a power-of-two qubit space")
        _check_cap(n, data.ndim == 1)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_qubits(self) -> int:
        return self.data.shape[0].bit_length() - 1

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        if self.is_pure:
            _check_cap(self.n_qubits, pure=False)
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_density(self) -> "QuantumRegister":
        return self if not self.is_pure else QuantumRegister(self.density())

    def norm(self) -> float:
        if self.is_pure:
            return float(np.linalg.norm(self.data))
        return float(np.real(np.trace(self.data)))

    def check(self, atol: float = ATOL) -> None:
        """Raise if the register violates its physical invariants."""
        if self.is_pure:
            if abs(np.linalg.norm(self.data) - 1) > atol:
                raise InvalidVectorError("statevector is not normalised")
            return
        rho = self.data
        if not np.allclose(rho, rho.conj().T, atol=atol):
            raise InvalidVectorError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > atol:
            raise InvalidVectorError("density matrix trace is not 1")
        if np.linalg.eigvalsh(rho).min() < -atol:
            raise InvalidVectorError("density matrix is not positive semidefinite")

    def to_json(self) -> str:
        """Debug dump; amplitudes (or matrix rows) as [re, im] pairs."""
        flat = self.data.ravel()
        return json.dumps({
            "n_qubits": self.n_qubits,
            "kind": "statevector" if self.is_pure else "density",
            "endianness": "big",
            "shape": list(self.data.shape),
            "amplitudes": [[float(z.real), float(z.imag)] for z in flat],
        })

    @classmethod
    def from_json(cls, text: str) -> "QuantumRegister":
        obj = json.loads(text)
        if obj.get("endianness", "big") != "big":
            raise DimensionError("only big-endian dumps are supported")
        flat = np.array([complex(re, im) for re, im in obj["amplitudes"]])
        return cls(flat.reshape(obj["shape"]))

    def __repr__(self) -> str:
        kind = "pure" if self.is_pure else "mixed"
        return f"QuantumRegister(n_qubits={self.n_qubits}, {kind})"


def _as_register(state) -> QuantumRegister:
    return state if isinstance(state, QuantumRegister) else QuantumRegister(state)


def _check_qubit(reg: QuantumRegister, q: int) -> None:
    if not 0 <= q < reg.n_qubits:
        raise IndexError(f"qubit {q} out of range for {reg.n_qubits}-qubit register")


# ---------------------------------------------------------------------------
# state constructors


def plus_vector(theta) -> np.ndarray:
    k = angle_index(theta)
    return np.array([1, np.exp(1j * k * math.pi / 4)], dtype=complex) / math.sqrt(2)


def plus_theta(theta) -> QuantumRegister:
    """|+_theta> = (|0> + e^{i theta}|1>)/sqrt(2) for theta on the pi/4 grid."""
    return QuantumRegister(plus_vector(theta))


def basis_state(bits: Sequence[int]) -> QuantumRegister:
    n = len(bits)
    v = np.zeros(1 << n, dtype=complex)
    v[int("".join(str(int(b)) for b in bits), 2) if n else 0] = 1
    return QuantumRegister(v)


def bell_state(kind: str) -> QuantumRegister:
    s = 1 / math.sqrt(2)
    table = {
        "Phi+": [s, 0, 0, s],
        "Phi-": [s, 0, 0, -s],
        "Psi+": [0, s, s, 0],
        "Psi-": [0, s, -s, 0],
    }
    if kind not in table:
        raise ValueError(f"unknown Bell state {kind!r}")
    return QuantumRegister(np.array(table[kind], dtype=complex))


def tensor(*states) -> QuantumRegister:
    regs = [_as_register(s) for s in states]
    if all(r.is_pure for r in regs):
        out = np.ones(1, dtype=complex)
        for r in regs:
            out = np.kron(out, r.data)
        return QuantumRegister(out)
    out = np.ones((1, 1), dtype=complex)
    for r in regs:
        out = np.kron(out, r.density())
    return QuantumRegister(out)


def bloch_projector(v) -> np.ndarray:
    """(I + v . sigma)/2 for a unit Bloch vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or abs(float(v @ v) - 1) > ATOL:
        raise InvalidVectorError(f"{v!r} is not a unit Bloch vector")
    return (I2 + v[0] * X + v[1] * Y + v[2] * Z) / 2


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    return np.real([np.trace(rho @ P) for P in (X, Y, Z)])


# ---------------------------------------------------------------------------
# gates


def apply_unitary(reg: QuantumRegister, U: np.ndarray, qubits: Sequence[int]) -> QuantumRegister:
    """Apply a k-qubit matrix ``U`` to ``qubits`` (in the order given)."""
    reg = _as_register(reg)
    qubits = list(qubits)
    for q in qubits:
        _check_qubit(reg, q)
    if len(set(qubits)) != len(qubits):
        raise ValueError("repeated qubit index")
    k, n = len(qubits), reg.n_qubits
    U = np.asarray(U, dtype=complex).reshape((2,) * (2 * k))
    if reg.is_pure:
        psi = reg.data.reshape((2,) * n)
        psi = np.tensordot(U, psi, axes=(list(range(k, 2 * k)), qubits))
        psi = np.moveaxis(psi, list(range(k)), qubits)
        return QuantumRegister(psi.reshape(-1))
    rho = reg.data.reshape((2,) * (2 * n))
    rho = np.tensordot(U, rho, axes=(list(range(k, 2 * k)), qubits))
    rho = np.moveaxis(rho, list(range(k)), qubits)
    Uc = U.conj()
    rho = np.tensordot(Uc, rho, axes=(list(range(k, 2 * k)), [n + q for q in qubits]))
    rho = np.moveaxis(rho, list(range(k)), [n + q for q in qubits])
    return QuantumRegister(rho.reshape(1 << n, 1 << n))


def apply_cz(reg: QuantumRegister, qubit_a: int, qubit_b: int) -> QuantumRegister:
    reg = _as_register(reg)
    if qubit_a == qubit_b:
        raise ValueError("controlled-Z needs two distinct qubits")
    _check_qubit(reg, qubit_a)
    _check_qubit(reg, qubit_b)
    n = reg.n_qubits
    sign = np.ones((2,) * n)
    idx = [slice(None)] * n
    idx[qubit_a] = 1
    idx[qubit_b] = 1
    sign[tuple(idx)] = -1
    sign = sign.reshape(-1)
    if reg.is_pure:
        return QuantumRegister(reg.data * sign)
    return QuantumRegister(reg.data * np.outer(sign, sign))


def reflect_xy(reg: QuantumRegister) -> QuantumRegister:
    """Reflection about the XY plane: complex conjugation, then X on every qubit.

    Bloch map (x, y, z) -> (x, y, -z).  X on all qubits sends basis index
    ``i`` to its bitwise complement, which is a reversal of the array.
    """
    reg = _as_register(reg)
    if reg.is_pure:
        return QuantumRegister(reg.data.conj()[::-1].copy())
    return QuantumRegister(reg.data.conj()[::-1, ::-1].copy())


# ---------------------------------------------------------------------------
# measurement


def _rank1(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(P)
    if not (abs(w[0]) < 1e-9 and abs(w[1] - 1) < 1e-9):
        raise InvalidVectorError("qubit measurement projectors must be rank one")
    return V[:, 1]


def _project(reg: QuantumRegister, qubit: int, u: np.ndarray):
    """Project ``qubit`` onto |u>; return (probability, unnormalised remainder)."""
    n = reg.n_qubits
    if reg.is_pure:
        psi = np.moveaxis(reg.data.reshape((2,) * n), qubit, 0).reshape(2, -1)
        rest = u.conj() @ psi
        return float(np.real(np.vdot(rest, rest))), rest
    m = 1 << (n - 1)
    rho = reg.data.reshape((2,) * (2 * n))
    rho = np.moveaxis(rho, [qubit, n + qubit], [0, 1]).reshape(2, 2, m, m)
    rest = np.einsum("a,abij,b->ij", u.conj(), rho, u)
    return float(np.real(np.trace(rest))), rest


def measure_projector(reg: QuantumRegister, qubit: int, P0: np.ndarray, rng: np.random.Generator):
    """Two-outcome projective measurement {P0, I-P0} on one qubit.

    Returns ``(outcome, collapsed register without the qubit)``; a fully
    measured one-qubit register collapses to ``None``.
    """
    reg = _as_register(reg)
    _check_qubit(reg, qubit)
    u0 = _rank1(np.asarray(P0, dtype=complex))
    u1 = np.array([-u0[1].conj(), u0[0].conj()])
    p0, post0 = _project(reg, qubit, u0)
    p0 = min(max(p0, 0.0), 1.0)
    outcome = 0 if rng.random() < p0 else 1
    if outcome == 0:
        prob, post = p0, post0
    else:
        prob, post = _project(reg, qubit, u1)
    if prob <= 0:
        raise QsimError("sampled a zero-probability measurement branch")
    if reg.n_qubits == 1:
        return outcome, None
    if reg.is_pure:
        return outcome, QuantumRegister(post / math.sqrt(prob))
    return outcome, QuantumRegister(post / prob)


def xy_projector(delta) -> np.ndarray:
    """Projector onto |+_delta>; ``delta`` is a grid index or radians."""
    if isinstance(delta, (int, np.integer)):
        phase = np.exp(1j * (int(delta) % ANGLE_GRID) * math.pi / 4)
    else:
        phase = np.exp(1j * float(delta))
    u = np.array([1, phase]) / math.sqrt(2)
    return np.outer(u, u.conj())


def measure_xy(reg: QuantumRegister, qubit: int, delta, rng: np.random.Generator):
    """Measure in the {|+_delta>, |-_delta>} basis; outcome 0 means |+_delta>."""
    return measure_projector(reg, qubit, xy_projector(delta), rng)


def measure_bloch(reg: QuantumRegister, qubit: int, v, rng: np.random.Generator):
    """Two-outcome measurement M_v; returns (+1 or -1, collapsed register)."""
    bit, post = measure_projector(reg, qubit, bloch_projector(v), rng)
    return (1 if bit == 0 else -1), post


def expectation_bloch(reg: QuantumRegister, qubits: Sequence[int], vectors) -> float:
    """<(v1.sigma) x (v2.sigma) x ...> on the listed qubits."""
    reg = _as_register(reg)
    order = sorted(range(len(qubits)), key=lambda i: qubits[i])
    op = np.ones((1, 1), dtype=complex)
    for i in order:
        op = np.kron(op, np.einsum("j,jab->ab", np.asarray(vectors[i], float), np.array([X, Y, Z])))
    rest = [q for q in range(reg.n_qubits) if q not in qubits]
    sub = partial_trace(reg, rest) if rest else reg.as_density()
    return float(np.real(np.trace(op @ sub.data)))


# ---------------------------------------------------------------------------
# noise


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"error probability {p} outside [0, 1]")
    return p


def depolarize1(reg, qubit: int, p: float, mode: str = "density", rng=None) -> QuantumRegister:
    """(1-p)[I] + p/3([X]+[Y]+[Z]) on one qubit.

    ``mode="density"`` applies the channel exactly (pure input is promoted);
    ``mode="trajectory"`` samples one Pauli with the channel's weights and
    keeps a pure input pure.
    """
    reg = _as_register(reg)
    p = _check_p(p)
    _check_qubit(reg, qubit)
    if mode == "trajectory":
        if rng is None:
            raise ValueError("trajectory mode needs an rng")
        k = rng.choice(4, p=[1 - p, p / 3, p / 3, p / 3])
        return reg if k == 0 else apply_unitary(reg, [I2, X, Y, Z][k], [qubit])
    if mode != "density":
        raise ValueError(f"unknown mode {mode!r}")
    rho = reg.as_density()
    out = (1 - p) * rho.data
    for P in (X, Y, Z):
        out = out + (p / 3) * apply_unitary(rho, P, [qubit]).data
    return QuantumRegister(out)


def depolarize2(reg, qubits: Sequence[int], p: float, mode: str = "density", rng=None) -> QuantumRegister:
    """(1-p)[I x I] + p/15 * (sum of the 15 non-identity two-qubit Paulis)."""
    reg = _as_register(reg)
    p = _check_p(p)
    a, b = qubits
    paulis = [np.kron(P, Q) for P in (I2, X, Y, Z) for Q in (I2, X, Y, Z)]
    if mode == "trajectory":
        if rng is None:
            raise ValueError("trajectory mode needs an rng")
        k = rng.choice(16, p=[1 - p] + [p / 15] * 15)
        return reg if k == 0 else apply_unitary(reg, paulis[k], [a, b])
    if mode != "density":
        raise ValueError(f"unknown mode {mode!r}")
    rho = reg.as_density()
    out = (1 - p) * rho.data
    for P in paulis[1:]:
        out = out + (p / 15) * apply_unitary(rho, P, [a, b]).data
    return QuantumRegister(out)


# ---------------------------------------------------------------------------
# distances


def _matrix(state) -> np.ndarray:
    if isinstance(state, QuantumRegister):
        return state.density()
    a = np.asarray(state, dtype=complex)
    return np.outer(a, a.conj()) if a.ndim == 1 else a


def trace_norm(A: np.ndarray) -> float:
    """Un-halved trace norm Tr sqrt(A^dag A) of a Hermitian matrix."""
    return float(np.abs(np.linalg.eigvalsh(A)).sum())


def trace_distance(rho, sigma) -> float:
    """(1/2) Tr|rho - sigma|; pure-orthogonal states are at distance 1."""
    a = rho.data if isinstance(rho, QuantumRegister) else np.asarray(rho, dtype=complex)
    b = sigma.data if isinstance(sigma, QuantumRegister) else np.asarray(sigma, dtype=complex)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 1 and b.ndim == 1:
        ov = abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)
        return float(math.sqrt(max(0.0, 1.0 - ov)))
    return min(1.0, 0.5 * trace_norm(_matrix(a) - _matrix(b)))


def fidelity_with_pure(rho, psi) -> float:
    """<psi| rho |psi>."""
    r = rho.data if isinstance(rho, QuantumRegister) else np.asarray(rho, dtype=complex)
    v = psi.data if isinstance(psi, QuantumRegister) else np.asarray(psi, dtype=complex)
    if v.ndim != 1:
        raise DimensionError("reference state must be pure")
    if r.shape[0] != v.shape[0]:
        raise DimensionError(f"dimension mismatch: {r.shape} vs {v.shape}")
    if r.ndim == 1:
        return float(abs(np.vdot(v, r)) ** 2)
    return float(np.real(v.conj() @ r @ v))


def partial_trace(reg, traced: Sequence[int]) -> QuantumRegister:
    """Trace out the qubits listed in ``traced``; the rest keep their order."""
    reg = _as_register(reg)
    n = reg.n_qubits
    traced = sorted(set(traced))
    if not traced or len(traced) >= n:
        raise ValueError("traced subsystem must be a nonempty proper subset")
    for q in traced:
        _check_qubit(reg, q)
    keep = [q for q in range(n) if q not in traced]
    m = 1 << len(keep)
    if reg.is_pure:
        psi = np.transpose(reg.data.reshape((2,) * n), keep + traced).reshape(m, -1)
        return QuantumRegister(psi @ psi.conj().T)
    rho = reg.data.reshape((2,) * (2 * n))
    rho = np.transpose(rho, keep + traced + [n + q for q in keep] + [n + q for q in traced])
    t = 1 << len(traced)
    rho = rho.reshape(m, t, m, t)
    return QuantumRegister(np.einsum("ajbj->ab", rho))


class GentleGap(NamedTuple):
    delta: float
    lhs: float
    bound: float
    lhs_halved: float


def gentle_measurement_gap(rho_ab, pi, n_first: int | None = None) -> GentleGap:
    """Quantities in the gentle-measurement bound.

    ``pi`` is a pure state (vector) on the first ``n_first`` qubits.  Returns
    ``delta = 1 - Tr(pi Tr_2 rho)``, the un-halved norm
    ``lhs = ||rho - pi x Tr_1 rho||_1`` and ``bound = 2 sqrt(delta) + delta``.
    """
    rho = _as_register(rho_ab).as_density()
    pv = pi.data if isinstance(pi, QuantumRegister) else np.asarray(pi, dtype=complex)
    if pv.ndim != 1:
        raise DimensionError("pi must be a pure state vector")
    k = pv.shape[0].bit_length() - 1 if n_first is None else n_first
    n = rho.n_qubits
    if pv.shape[0] != 1 << k or k >= n:
        raise DimensionError("pi does not fit a proper first subsystem")
    rho_1 = partial_trace(rho, range(k, n))
    rho_2 = partial_trace(rho, range(k))
    delta = max(0.0, 1.0 - fidelity_with_pure(rho_1, pv))
    ref = np.kron(np.outer(pv, pv.conj()), rho_2.data)
    lhs = trace_norm(rho.data - ref)
    return GentleGap(delta, lhs, 2 * math.sqrt(delta) + delta, lhs / 2)


def correlation_operator(rho_ab, n_a: int) -> np.ndarray:
    """rho_AB - rho_A x rho_B with A the first ``n_a`` qubits."""
    rho = _as_register(rho_ab).as_density()
    n = rho.n_qubits
    if not 0 < n_a < n:
        raise DimensionError("bipartition must split the register")
    rho_a = partial_trace(rho, range(n_a, n)).data
    rho_b = partial_trace(rho, range(n_a)).data
    return rho.data - np.kron(rho_a, rho_b)


def correlation_norm(rho_ab, n_a: int, halved: bool = True) -> float:
    """Trace norm of the correlation operator (halved by default)."""
    v = trace_norm(correlation_operator(rho_ab, n_a))
    return v / 2 if halved else v


class CorrelationCheck(NamedTuple):
    epsilon: float
    norm_halved: float
    norm_unhalved: float
    bound: float


def correlation_bound_check(rho_ab, psi) -> CorrelationCheck:
    """Compare ||rho_corr|| against 2 sqrt(eps) + 2 eps, eps = 1 - <psi|rho_A|psi>."""
    pv = psi.data if isinstance(psi, QuantumRegister) else np.asarray(psi, dtype=complex)
    n_a = pv.shape[0].bit_length() - 1
    rho = _as_register(rho_ab).as_density()
    rho_a = partial_trace(rho, range(n_a, rho.n_qubits))
    eps = max(0.0, 1.0 - fidelity_with_pure(rho_a, pv))
    full = trace_norm(correlation_operator(rho, n_a))
    return CorrelationCheck(eps, full / 2, full, 2 * math.sqrt(eps) + 2 * eps)


# ---------------------------------------------------------------------------
# random states (fixtures and property checks)


def random_statevector(n: int, rng: np.random.Generator) -> QuantumRegister:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return QuantumRegister(v / np.linalg.norm(v))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> QuantumRegister:
    """Ginibre-ensemble mixed state; ``rank=None`` draws a rank uniformly."""
    d = 1 << n
    r = int(rng.integers(1, d + 1)) if rank is None else rank
    G = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = G @ G.conj().T
    return QuantumRegister(rho / np.trace(rho).real)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    Zm = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    Q, R = np.linalg.qr(Zm)
    return Q * (np.diag(R) / np.abs(np.diag(R)))

"""CHSH refereeing and steered state tomography on shared |Psi+> pairs.

Two provers share |Psi+> pairs.  A question is a unit Bloch vector ``v``;
answering it means measuring ``M_v`` (bit 0 for the ``+1`` outcome).  On
|Psi+> the correlation of ``M_a x M_b`` is ``a_x b_x + a_y b_y - a_z b_z``,
each marginal is uniform, and a ``+1`` outcome of ``M_v`` on one half
steers the other half to Bloch vector ``(v_x, v_y, -v_z)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .stats import split_seed

WIN_RATE = math.cos(math.pi / 8) ** 2
LOG = math.log          # natural log in every statistical threshold

_s = 1 / math.sqrt(2)
S = np.array([
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (_s, _s, 0), (_s, -_s, 0), (_s, 0, _s), (_s, 0, -_s), (0, _s, _s), (0, _s, -_s),
])
EX, EY, EZ = S[0], S[1], S[2]


@dataclass(frozen=True)
class Game:
    """One CHSH game: questions ``a[x]`` for prover 1 and ``b[y]`` for prover 2; win iff A xor B = x y."""

    name: str
    kind: str                       # XZ, XY or YZ
    a: tuple[tuple[float, ...], tuple[float, ...]]
    b: tuple[tuple[float, ...], tuple[float, ...]]

    def vectors(self, prover: int) -> np.ndarray:
        return np.array(self.a if prover == 1 else self.b)


def _game(name, kind, a, b):
    return Game(name, kind, tuple(map(tuple, a)), tuple(map(tuple, b)))


_BASE = [
    ("XZ", (EX, EZ), (S[6], S[5])),
    ("XY", (EX, EY), (S[3], S[4])),
    ("YZ", (EY, EZ), (S[8], S[7])),
]
GAMES: tuple[Game, ...] = tuple(
    [_game(f"{k}-1", k, a, b) for k, a, b in _BASE] + [_game(f"{k}-2", k, b, a) for k, a, b in _BASE]
)


def psi_plus_correlation(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[0] + a[1] * b[1] - a[2] * b[2])


def reflect_vector(v: np.ndarray) -> np.ndarray:
    return np.array([v[0], v[1], -v[2]])


def rotate_z(v: np.ndarray, beta: float) -> np.ndarray:
    c, s = math.cos(beta), math.sin(beta)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])


# ---------------------------------------------------------------------------
# strategies


class ChshStrategy:
    """Single prover behaviour: how a question vector is answered.

    ``direction`` returns the Bloch vector actually measured, or ``None``
    when the answer is a fixed bit given by ``fixed``.  ``announce`` maps
    the true steering outcome to the bit reported to the verifier.
    """

    name = "ideal"

    def direction(self, v: np.ndarray) -> np.ndarray | None:
        return np.asarray(v, dtype=float)

    def fixed(self, v: np.ndarray) -> int:
        return 0

    def announce(self, outcomes: np.ndarray) -> np.ndarray:
        return outcomes

    def describe(self) -> dict:
        return {"name": self.name}


Ideal = ChshStrategy


class Reflected(ChshStrategy):
    name = "reflected"

    def direction(self, v):
        return reflect_vector(np.asarray(v, dtype=float))


class Tilted(ChshStrategy):
    """Measure the question vector rotated about Z by ``beta`` radians."""

    name = "tilted"

    def __init__(self, beta: float):
        self.beta = beta

    def direction(self, v):
        return rotate_z(np.asarray(v, dtype=float), self.beta)

    def describe(self):
        return {"name": self.name, "beta": self.beta}


def _key(v) -> tuple:
    return tuple(np.round(np.asarray(v, dtype=float), 9))


class FixedAnswers(ChshStrategy):
    """Classical deterministic strategy: a bit per question vector (default 0)."""

    name = "fixed-answers"

    def __init__(self, table: dict | None = None):
        self.table = {_key(k): int(b) for k, b in (table or {}).items()}

    def direction(self, v):
        return None

    def fixed(self, v):
        return self.table.get(_key(v), 0)

    def describe(self):
        return {"name": self.name, "table": [[list(k), b] for k, b in self.table.items()]}


class YZDeviant(ChshStrategy):
    """Ideal except that the diagonal YZ questions get a fixed answer."""

    name = "yz-deviant"

    def __init__(self, bit: int = 0):
        self.bit = bit
        self._yz = {_key(S[7]), _key(S[8])}

    def direction(self, v):
        return None if _key(v) in self._yz else np.asarray(v, dtype=float)

    def fixed(self, v):
        return self.bit


class ConstantAnnouncer(ChshStrategy):
    """Steers honestly but always reports outcome ``o`` in tomography."""

    name = "constant-announcer"

    def __init__(self, o: int = 0):
        self.o = o

    def announce(self, outcomes):
        return np.full_like(outcomes, self.o)

    def describe(self):
        return {"name": self.name, "o": self.o}


STRATEGIES = {"ideal": Ideal, "reflected": Reflected, "tilted": Tilted, "fixed-answers": FixedAnswers,
              "yz-deviant": YZDeviant, "constant-announcer": ConstantAnnouncer}


def joint_distribution(s1: ChshStrategy, a: np.ndarray, s2: ChshStrategy, b: np.ndarray) -> np.ndarray:
    """P(A, B) as a 2x2 array on |Psi+>."""
    d1, d2 = s1.direction(a), s2.direction(b)
    P = np.zeros((2, 2))
    if d1 is not None and d2 is not None:
        E = psi_plus_correlation(d1, d2)
        P[0, 0] = P[1, 1] = (1 + E) / 4
        P[0, 1] = P[1, 0] = (1 - E) / 4
    elif d1 is None and d2 is None:
        P[s1.fixed(a), s2.fixed(b)] = 1
    elif d1 is None:
        P[s1.fixed(a), :] = 0.5
    else:
        P[:, s2.fixed(b)] = 0.5
    return P


def win_probability(pair, game: Game) -> float:
    """Exact win probability with uniform questions."""
    s1, s2 = pair
    total = 0.0
    for x in (0, 1):
        for y in (0, 1):
            P = joint_distribution(s1, game.vectors(1)[x], s2, game.vectors(2)[y])
            total += sum(P[A, B] for A in (0, 1) for B in (0, 1) if A ^ B == x * y) / 4
    return total


def classical_strategies():
    """All 16 deterministic strategies for a game, as ``(table1, table2)`` bit tuples."""
    for bits in np.ndindex(2, 2, 2, 2):
        yield bits


def best_classical_win(game: Game) -> float:
    best = 0.0
    for a0, a1, b0, b1 in classical_strategies():
        p1 = FixedAnswers({tuple(game.a[0]): a0, tuple(game.a[1]): a1})
        p2 = FixedAnswers({tuple(game.b[0]): b0, tuple(game.b[1]): b1})
        best = max(best, win_probability((p1, p2), game))
    return best


@dataclass
class ChshResult:
    game: str
    rounds: int
    wins: int
    x: np.ndarray
    y: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @property
    def win_rate(self) -> float:
        return self.wins / self.rounds

    def to_jsonl(self) -> str:
        lines = []
        for i in range(self.rounds):
            x, y, A, B = int(self.x[i]), int(self.y[i]), int(self.A[i]), int(self.B[i])
            lines.append(json.dumps({"round": i, "game": self.game, "x": x, "y": y, "A": A, "B": B,
                                     "win": (A ^ B) == x * y}))
        return "\n".join(lines)


def play_chsh(pair, game: Game, rounds: int, seed: int) -> ChshResult:
    """Sequential rounds with uniform questions; Born sampling on fresh |Psi+> pairs."""
    s1, s2 = pair
    rng = np.random.default_rng(seed)
    x = rng.integers(2, size=rounds)
    y = rng.integers(2, size=rounds)
    u = rng.random(rounds)
    A = np.zeros(rounds, dtype=int)
    B = np.zeros(rounds, dtype=int)
    for qx in (0, 1):
        for qy in (0, 1):
            m = (x == qx) & (y == qy)
            P = joint_distribution(s1, game.vectors(1)[qx], s2, game.vectors(2)[qy]).reshape(-1)
            idx = np.searchsorted(np.cumsum(P), u[m], side="right").clip(0, 3)
            A[m], B[m] = idx // 2, idx % 2
    wins = int(np.count_nonzero((A ^ B) == x * y))
    return ChshResult(game.name, rounds, wins, x, y, A, B)


def chsh_threshold(total: int) -> float:
    """cos^2(pi/8) M - sqrt(M ln M) / (2 sqrt 2) for M = N n_g games."""
    if total < 1:
        raise ValueError("need at least one game")
    return WIN_RATE * total - math.sqrt(total * LOG(total)) / (2 * math.sqrt(2))


def chsh_referee(total_wins: int, N: int, n_g: int) -> bool:
    if N < 1 or n_g < 1:
        raise ValueError("N and n_g must be >= 1")
    return total_wins >= chsh_threshold(N * n_g)


# ---------------------------------------------------------------------------
# steered tomography (one qubit per block)


PLANES = {"XY": (EX, EY), "XZ": (EX, EZ)}


def target_bloch(plane: str, basis: int) -> np.ndarray:
    """Bloch vector of the o = 0 resource state: |+_basis> (XY) or |0> (XZ)."""
    if plane == "XY":
        ang = basis * math.pi / 4
        return np.array([math.cos(ang), math.sin(ang), 0.0])
    if plane == "XZ":
        return EZ.copy()
    raise ValueError(f"unknown plane {plane!r}")


def steering_question(target: np.ndarray) -> np.ndarray:
    return reflect_vector(target)


def bloch_to_state(b: np.ndarray) -> np.ndarray:
    """Pure state with Bloch vector ``b`` (fixed phase convention)."""
    theta = math.acos(max(-1.0, min(1.0, b[2])))
    phi = math.atan2(b[1], b[0])
    return np.array([math.cos(theta / 2), math.sin(theta / 2) * np.exp(1j * phi)])


@dataclass
class TomographyStats:
    n: int
    counts: np.ndarray                      # per announced outcome
    tau: dict                               # (o, pauli) -> estimator, nan when unsampled
    expected: dict                          # (o, pauli) -> Tr(pi^o P)

    def __post_init__(self):
        if int(self.counts.sum()) != self.n:
            raise ValueError("counts do not sum to n")

    def to_csv(self) -> str:
        rows = ["o,pauli,count,tau,expected"]
        for (o, p), t in sorted(self.tau.items()):
            rows.append(f"{o},{p},{int(self.counts[o])},{t},{self.expected[(o, p)]}")
        return "\n".join(rows)


def count_tolerance(n: int, qp: int = 1) -> float:
    return 4 ** qp * math.sqrt(n * LOG(n))


def tau_tolerance(n: int, qp: int = 1) -> float:
    return 4 ** qp * math.sqrt(LOG(n) / n)


def tomography_accept(stats: TomographyStats, qp: int = 1, n: int | None = None) -> bool:
    """Both displayed criteria: outcome counts near n/2^q' and every tau near Tr(pi^o P)."""
    n = stats.n if n is None else n
    if np.max(np.abs(stats.counts - n / 2 ** qp)) > count_tolerance(n, qp):
        return False
    for key, t in stats.tau.items():
        if not np.isfinite(t) or abs(t - stats.expected[key]) > tau_tolerance(n, qp):
            return False
    return True


@dataclass
class Residual:
    """A block kept back from tomography for later use."""

    plane: str
    basis: int
    announced: int
    state: np.ndarray            # prover 1's actual qubit

    @property
    def ideal(self) -> np.ndarray:
        b = target_bloch(self.plane, self.basis) * (1 - 2 * self.announced)
        return bloch_to_state(b)


@dataclass
class SessionResult:
    plane: str
    basis: int
    stats: TomographyStats
    accepted: bool
    residuals: list[Residual]


def tomography_session(plane: str, basis: int, n: int, pair, seed: int, residual: int = 0,
                       qp: int = 1, budget: int = 10**6) -> SessionResult:
    """Prover 2 steers ``n`` pairs towards the resource basis and announces outcomes.

    Prover 1 measures each tested block in a uniformly chosen Pauli of the
    plane; ``residual`` blocks, sampled uniformly without replacement, are
    not tested and are returned for later use.
    """
    if qp != 1:
        raise ValueError("only single-qubit resource blocks are simulated")
    if n + residual > budget:
        raise ValueError("session exceeds the simulation budget")
    s1, s2 = pair
    rng = np.random.default_rng(seed)
    total = n + residual
    target = target_bloch(plane, basis)
    q = steering_question(target)
    d2 = s2.direction(q)
    if d2 is None:
        true_o = np.full(total, s2.fixed(q))
        steer = np.zeros((total, 3))       # prover 1 left maximally mixed
        mixed = True
    else:
        true_o = rng.integers(2, size=total)
        sign = (1 - 2 * true_o)[:, None]
        steer = sign * reflect_vector(d2)[None, :]
        mixed = False
    announced = s2.announce(true_o)
    keep = np.zeros(total, dtype=bool)
    if residual:
        keep[rng.choice(total, size=residual, replace=False)] = True

    tested = ~keep
    paulis = PLANES[plane]
    which = rng.integers(2, size=total)
    dirs = np.array([s1.direction(p) if s1.direction(p) is not None else np.zeros(3) for p in paulis])
    fixed = [s1.direction(p) is None for p in paulis]
    corr = np.einsum("ij,ij->i", dirs[which], steer)
    p_plus = (1 + corr) / 2
    for k in (0, 1):
        if fixed[k]:
            p_plus[which == k] = 1.0 - s1.fixed(paulis[k])
    outcome = np.where(rng.random(total) < p_plus, 1, -1)

    names = ("X", "Y") if plane == "XY" else ("X", "Z")
    counts = np.array([np.count_nonzero(announced[tested] == o) for o in (0, 1)])
    tau, expected = {}, {}
    for o in (0, 1):
        ideal_b = target * (1 - 2 * o)
        for k, name in enumerate(names):
            m = tested & (announced == o) & (which == k)
            tau[(o, name)] = float(outcome[m].mean()) if m.any() else float("nan")
            expected[(o, name)] = float(paulis[k] @ ideal_b)
    stats = TomographyStats(int(tested.sum()), counts, tau, expected)
    residuals = []
    for j in np.flatnonzero(keep):
        st = bloch_to_state(steer[j]) if not mixed else None
        if mixed:
            # maximally mixed half: sample one pure component
            st = np.eye(2, dtype=complex)[rng.integers(2)]
        residuals.append(Residual(plane, basis, int(announced[j]), st))
    return SessionResult(plane, basis, stats, tomography_accept(stats, qp), residuals)


def closeness_certificate(residuals: list[Residual]) -> tuple[float, float]:
    """(exact trace distance of the residual blocks to their ideal product, n^-1/64 reference is separate).

    Returns ``(eps_prep, overlap)``; the product of pure blocks uses the
    overlap form of the distance.
    """
    ov = 1.0
    for r in residuals:
        ov *= abs(np.vdot(r.ideal, r.state)) ** 2
    return math.sqrt(max(0.0, 1 - ov)), ov


def closeness_reference(n: int) -> tuple[float, float]:
    """Asymptotic reference scaling: (n^-1/64 distance, 1 - n^-1/48 confidence)."""
    return n ** (-1 / 64), 1 - n ** (-1 / 48)


# ---------------------------------------------------------------------------
# the modified protocol


@dataclass(frozen=True)
class TomoParams:
    n: int = 10_000                   # tested blocks per session
    games_per_group: int = 10_000     # N n_g
    residual_xy: int = 3              # kept blocks per XY basis session
    residual_xz: int = 3
    xy_bases: tuple[int, ...] = (0, 1, 2, 3)


@dataclass
class TomographyOutcome:
    accepted: bool
    group_wins: dict
    group_accept: dict
    sessions: list[SessionResult]
    residual_xy: dict = field(default_factory=dict)   # basis -> list[Residual]
    residual_xz: list = field(default_factory=list)

    @property
    def eps_prep(self) -> float:
        blocks = [r for rs in self.residual_xy.values() for r in rs] + list(self.residual_xz)
        return closeness_certificate(blocks)[0]

    @property
    def eps_prep_sessions(self) -> tuple[float, float]:
        xy = [r for rs in self.residual_xy.values() for r in rs]
        return closeness_certificate(xy)[0], closeness_certificate(self.residual_xz)[0]


def modified_tomography(params: TomoParams, pair, seed: int) -> TomographyOutcome:
    """All six CHSH groups against their thresholds, then XY and XZ steering sessions."""
    group_wins, group_accept = {}, {}
    for i, game in enumerate(GAMES):
        res = play_chsh(pair, game, params.games_per_group, split_seed(seed, i))
        group_wins[game.name] = res.wins
        group_accept[game.name] = chsh_referee(res.wins, 1, params.games_per_group)
    sessions = []
    for k, basis in enumerate(params.xy_bases):
        sessions.append(tomography_session("XY", basis, params.n, pair, split_seed(seed, 100 + k),
                                           residual=params.residual_xy))
    sessions.append(tomography_session("XZ", 0, params.n, pair, split_seed(seed, 200),
                                       residual=params.residual_xz))
    ok = all(group_accept.values()) and all(s.accepted for s in sessions)
    out = TomographyOutcome(ok, group_wins, group_accept, sessions)
    if ok:
        out.residual_xy = {s.basis: s.residuals for s in sessions if s.plane == "XY"}
        out.residual_xz = [r for s in sessions if s.plane == "XZ" for r in s.residuals]
    return out


def session_accept_frequency(plane: str, basis: int, n: int, pair, sessions: int, seed: int) -> float:
    acc = sum(tomography_session(plane, basis, n, pair, split_seed(seed, i)).accepted for i in range(sessions))
    return acc / sessions


def eps_prep_at(n: int, sessions: int = 21, seed: int = 0, beta_max: float = 1.0, steps: int = 14) -> float:
    """Worst per-block distance among tilts the XY session still accepts at least half the time.

    Bisection over the tilt ``beta`` of prover 2's steering direction; the
    distance of a block tilted by ``beta`` is ``sin(beta/2)``.
    """
    lo, hi = 0.0, beta_max
    for step in range(steps):
        mid = (lo + hi) / 2
        f = session_accept_frequency("XY", 0, n, (Ideal(), Tilted(mid)), sessions, split_seed(seed, step))
        if f >= 0.5:
            lo = mid
        else:
            hi = mid
    return math.sin(lo / 2)


# ---------------------------------------------------------------------------
# log-domain round-complexity calculators


def ruv_round_complexity(n: int) -> float:
    """log10 of n^8192."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return 8192 * math.log10(n)


def composite_round_complexity(n: int) -> float:
    """log10 of n^2048."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return 2048 * math.log10(n)


@dataclass(frozen=True)
class RuvParams:
    """Full-scale parameters, every size held as log10."""

    n: int
    alpha: float = 128.0
    q: int = 11

    def __post_init__(self):
        if self.alpha < 128:
            raise ValueError("alpha must be >= 128")
        if self.n < 2:
            raise ValueError("n must be >= 2")

    @property
    def log10_ns(self) -> float:
        return self.alpha / 2 * math.log10(self.n)

    @property
    def log10_ng(self) -> float:
        return math.log10(self.q) + self.log10_ns

    @property
    def log10_N(self) -> float:
        return (self.alpha - 1) * self.log10_ng

    @property
    def log10_delta(self) -> float:
        return -math.log10(6) - self.alpha / 8 * math.log10(self.n)

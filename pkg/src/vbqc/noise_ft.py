"""Depolarizing noise on traps, threshold acceptance and sequential repetition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fk, qsim
from .stats import Estimate, estimate, split_seed

P_CORRECT = 0.01


# ---------------------------------------------------------------------------
# noisy product states


def product_distance_bound(n: int, p: float) -> float:
    """min(1, n p)."""
    if n < 1 or not 0 <= p <= 1:
        raise ValueError("need n >= 1 and p in [0, 1]")
    return min(1.0, n * p)


def exact_product_distance(n: int, p: float) -> float:
    """Trace distance (halved) between |0..0> and its qubit-wise depolarized copy."""
    if n > qsim.DENSITY_CAP:
        raise qsim.CapacityError("exact product distance needs the density representation")
    ideal = qsim.basis_state([0] * n)
    noisy = ideal.as_density()
    for q in range(n):
        noisy = qsim.depolarize1(noisy, q, p)
    return qsim.trace_distance(ideal, noisy)


# ---------------------------------------------------------------------------
# traps under noise


@dataclass
class TrapRecord:
    failed: np.ndarray       # bool per trap

    @property
    def n_traps(self) -> int:
        return len(self.failed)

    @property
    def F(self) -> int:
        return int(np.count_nonzero(self.failed))


def noisy_completeness_bound(n_traps: int, p: float) -> float:
    """(1 - p)^N_T."""
    if n_traps < 1:
        raise ValueError("need at least one trap")
    return (1 - p) ** n_traps


def sample_trap_failures(n_traps: int, p: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Pauli trajectories per trap: I with prob 1-p, else X, Y or Z.

    Any non-identity Pauli counts as a failed trap.
    """
    paulis = rng.choice(4, size=(trials, n_traps), p=[1 - p, p / 3, p / 3, p / 3])
    return paulis != 0


def simulate_noisy_traps(n_traps: int, p: float, trials: int, seed: int) -> Estimate:
    """Frequency with which every trap passes."""
    fails = sample_trap_failures(n_traps, p, trials, np.random.default_rng(seed))
    return estimate(int(np.count_nonzero(~fails.any(axis=1))), trials,
                    reference=noisy_completeness_bound(n_traps, p))


def _limit(n_traps: int, p: float, eps: float) -> float:
    lim = n_traps * (p + eps)
    # 100 * (0.1 + 0.05) is 15.000000000000002 in floating point
    return float(round(lim)) if abs(lim - round(lim)) < 1e-9 else lim


def threshold_accept(record: TrapRecord, p: float, eps: float) -> bool:
    """Accept iff fewer than N_T (p + eps) traps failed."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return record.F < _limit(record.n_traps, p, eps)


def hoeffding_completeness(n_traps: int, eps: float) -> float:
    """1 - exp(-2 eps^2 N_T)."""
    return 1 - math.exp(-2 * eps * eps * n_traps)


def simulate_threshold(n_traps: int, p: float, eps: float, trials: int, seed: int) -> Estimate:
    fails = sample_trap_failures(n_traps, p, trials, np.random.default_rng(seed))
    acc = fails.sum(axis=1) < _limit(n_traps, p, eps)
    return estimate(int(acc.sum()), trials, reference=hoeffding_completeness(n_traps, eps))


def binomial_inflation_bits(n_traps: int, T: int) -> float:
    """log2 C(N_T, T), exact big-integer binomial."""
    if not 0 <= T <= n_traps:
        raise ValueError("need 0 <= T <= N_T")
    c = math.comb(n_traps, T)
    # log2 of a big int without float overflow
    shift = max(0, c.bit_length() - 64)
    return shift + math.log2(c >> shift)


def threshold_soundness_factor(n_traps: int, T: int, d: int) -> float:
    """log2 of C(N_T, T) * (2/3)^ceil(2d/5)."""
    return binomial_inflation_bits(n_traps, T) + math.log2(fk.soundness_bound(d))


# ---------------------------------------------------------------------------
# sequential repetition


def repetition_schedule(n: int, c: float, R: float) -> int:
    """Smallest integer N with N > R / log2(cn / (cn - 1))."""
    if c * n <= 1:
        raise ValueError("need c n > 1")
    if R <= 0:
        raise ValueError("need R > 0")
    return math.floor(R / math.log2(c * n / (c * n - 1))) + 1


def schedule_consequence(n: int, c: float, R: float, N: int | None = None) -> tuple[float, float]:
    """((1 - 1/(cn))^N, 2^-R)."""
    N = repetition_schedule(n, c, R) if N is None else N
    return (1 - 1 / (c * n)) ** N, 2.0 ** -R


@dataclass(frozen=True)
class FtParams:
    n: int = 10
    c: float = 3.0
    R: float = 2.0
    p: float = 0.0
    N: int | None = None          # defaults to repetition_schedule(n, c, R)
    p_correct: float = P_CORRECT

    def __post_init__(self):
        if self.c <= 2:
            raise ValueError("c must exceed 2")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if not 0 <= self.p < self.p_correct:
            raise ValueError("p must lie in [0, p_correct)")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def encodings(self) -> int:
        return self.N if self.N is not None else repetition_schedule(self.n, self.c, self.R)

    @property
    def deception_cap(self) -> float:
        return 1 - 1 / (self.c * self.n)


@dataclass
class FtStrategy:
    """Prover behaviour per encoding.

    ``kind="honest"`` or ``"capped"``: a capped adversary deviates on a
    ``deviate_fraction`` share of the encodings (chosen from its own tape)
    and each deviation passes the trap with probability ``1 - 1/(cn)``.
    With the ``simulated`` backend, ``fk_strategy`` drives a real FK run
    on each deviated encoding instead.
    """

    kind: str = "honest"
    deviate_fraction: float = 1.0
    fk_strategy: object = None

    def describe(self) -> dict:
        return {"kind": self.kind, "deviate_fraction": self.deviate_fraction}


@dataclass
class FtResult:
    verdict: str
    majority: int | None
    deceived: bool
    encoding_accepts: list[bool] = field(default_factory=list)
    encoding_outputs: list[int] = field(default_factory=list)


def run_ft_protocol(params: FtParams, strategy: FtStrategy | None = None, seed: int = 0,
                    backend: str = "logical", line_size: int = 4) -> FtResult:
    """Sequence of independent single-trap encodings; reject on any failed trap, else majority vote.

    Honest noise below ``p_correct`` is absorbed by the idealized code, so an
    honest encoding always passes with the correct bit.
    """
    strategy = strategy or FtStrategy()
    N = params.encodings
    rng = np.random.default_rng(split_seed(seed, 0))
    n_dev = int(round(strategy.deviate_fraction * N)) if strategy.kind != "honest" else 0
    deviated = set(rng.choice(N, size=n_dev, replace=False).tolist()) if n_dev else set()
    accepts, outputs = [], []
    setup = fk.FKSetup("line", line_size)
    for j in range(N):
        if backend == "logical":
            ok, wrong = True, False
            if j in deviated:
                ok = wrong = bool(rng.random() < params.deception_cap)
            accepts.append(ok)
            outputs.append(int(wrong))
        elif backend == "simulated":
            enc_seed = split_seed(seed, 1 + j)
            secrets = setup.sample_secrets(split_seed(enc_seed, 0))
            strat = strategy.fk_strategy if j in deviated else None
            t = fk.run_fk(secrets, strat, None, np.random.default_rng(split_seed(enc_seed, 1)))
            accepts.append(t.accepted)
            # output relative to the ideal: 1 marks a wrong computation
            outputs.append(int(not t.correct))
        else:
            raise ValueError(f"unknown backend {backend!r}")
    accepted = all(accepts)
    if not accepted:
        return FtResult(fk.REJECT, None, False, accepts, outputs)
    majority = int(sum(outputs) * 2 > N)
    return FtResult(fk.ACCEPT, majority, majority == 1, accepts, outputs)


def estimate_deception(params: FtParams, strategy: FtStrategy, trials: int, seed: int,
                       chunk: int = 100_000) -> Estimate:
    """Frequency of accepted sequences whose majority output is wrong, logical backend, vectorized."""
    N = params.encodings
    rng = np.random.default_rng(seed)
    if strategy.kind == "honest":
        return estimate(0, trials, reference=2.0 ** -params.R)
    n_dev = int(round(strategy.deviate_fraction * N))
    deceived = 0
    if n_dev * 2 > N:
        for start in range(0, trials, chunk):
            rows = min(chunk, trials - start)
            passed = rng.random((rows, n_dev)) < params.deception_cap
            deceived += int(np.count_nonzero(passed.all(axis=1)))
    return estimate(deceived, trials, reference=2.0 ** -params.R)


def encoding_correlations(params: FtParams, strategy: FtStrategy, trials: int, seed: int) -> np.ndarray:
    """Sample correlation matrix of per-encoding pass indicators (logical backend)."""
    N = params.encodings
    rng = np.random.default_rng(seed)
    if strategy.kind == "honest":
        return np.eye(N)
    passed = rng.random((trials, N)) < params.deception_cap
    return np.corrcoef(passed.T.astype(float))

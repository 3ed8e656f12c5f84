"""Steered tomography followed by the trap protocol on prover 1's residual qubits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import chsh_tomo as ct
from . import fk, graphs
from .stats import estimate, split_seed


@dataclass
class CorrelatedAdversary:
    """Two provers coupled only through a pre-shared tape.

    The tape supplies a sign ``s``; prover 2 tilts its steering by
    ``s * beta`` and prover 1 rotates every FK qubit by ``s * gamma``.
    With ``correlated=False`` each prover draws its own sign.
    """

    beta: float = 0.0
    gamma: float = 0.0
    correlated: bool = True
    tape_seed: int = 0

    def signs(self) -> tuple[int, int]:
        rng = np.random.default_rng(self.tape_seed)
        s1 = 1 if rng.random() < 0.5 else -1
        s2 = s1 if self.correlated else (1 if rng.random() < 0.5 else -1)
        return s1, s2

    def pair(self):
        s1, s2 = self.signs()
        return ct.Ideal(), ct.Tilted(s2 * self.beta), fk.TapeRotation(self.gamma, tape_sign=s1)

    def describe(self) -> dict:
        return {"name": "correlated" if self.correlated else "independent",
                "beta": self.beta, "gamma": self.gamma}


PAIRS = {
    "honest": lambda: (ct.Ideal(), ct.Ideal(), fk.ProverStrategy()),
    "reflected": lambda: (ct.Reflected(), ct.Reflected(), fk.ProverStrategy()),
    "yz-deviant": lambda: (ct.Ideal(), ct.YZDeviant(), fk.ProverStrategy()),
    "constant-announcer": lambda: (ct.Ideal(), ct.ConstantAnnouncer(), fk.ProverStrategy()),
}


@dataclass
class CompositeConfig:
    n: int = 10_000                   # tested blocks per tomography session
    games_per_group: int = 10_000
    N: int = 1                        # FK computation size
    pad: bool = True
    d: int = 25
    strategy: str = "honest"
    adversary: CorrelatedAdversary | None = None
    residual_xy: int | None = None    # per XY basis; default covers the worst case
    residual_xz: int | None = None
    seed: int = 0
    computation_seed: int = 0

    @property
    def fk_setup(self) -> fk.FKSetup:
        return fk.FKSetup("dotted", self.N, self.pad, self.computation_seed)

    def slot_demand(self) -> tuple[int, int]:
        """(non-dummy, dummy) qubit counts of the FK graph; fixed by N."""
        N = self.fk_setup.effective_size
        non_dummy = 3 * N + (N - 1)
        return non_dummy, graphs.protocol_qubit_count(N) - non_dummy

    def tomo_params(self) -> ct.TomoParams:
        nd, du = self.slot_demand()
        rxy = nd if self.residual_xy is None else self.residual_xy
        rxz = du if self.residual_xz is None else self.residual_xz
        if rxy < nd or rxz < du:
            raise ValueError(f"residual blocks ({rxy} per XY basis, {rxz} XZ) cannot fill "
                             f"{nd} non-dummy and {du} dummy FK slots")
        return ct.TomoParams(self.n, self.games_per_group, rxy, rxz)

    def strategies(self):
        if self.adversary is not None:
            return self.adversary.pair()
        if self.strategy not in PAIRS:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        return PAIRS[self.strategy]()

    def describe(self) -> dict:
        return self.adversary.describe() if self.adversary is not None else {"name": self.strategy}


@dataclass
class CompositeResult:
    verdict: str
    output: tuple[int, ...]
    report: dict
    tomography: ct.TomographyOutcome | None = None
    transcript: fk.Transcript | None = None


def map_residuals(outcome: ct.TomographyOutcome, secrets: fk.VerifierSecrets, rng: np.random.Generator):
    """Fill FK slots from residual blocks.

    Non-dummy vertices (ascending id) take the next residual of a basis the
    verifier draws privately, with theta = basis + 4 O; dummies take XZ
    residuals in order, with value O.  Returns the FK input and the updated
    secrets.
    """
    pools = {b: list(rs) for b, rs in outcome.residual_xy.items()}
    xz = list(outcome.residual_xz)
    theta, dummy_values, blocks = {}, {}, []
    for v in sorted(secrets.graph.vertices):
        if secrets.roles[v] == graphs.DUMMY:
            r = xz.pop(0)
            dummy_values[v] = r.announced
        else:
            basis = sorted(pools)[int(rng.integers(len(pools)))]
            r = pools[basis].pop(0)
            theta[v] = (basis + 4 * r.announced) % 8
        blocks.append(((v,), np.asarray(r.state, dtype=complex)))
    secrets.theta.update(theta)
    secrets.dummy_values.update(dummy_values)
    return fk.FKInput(blocks), secrets


def run_composite(config: CompositeConfig, seed: int | None = None, always_run_fk: bool = False) -> CompositeResult:
    """Tomography, then FK with prover 1; accept iff both stages accept."""
    seed = config.seed if seed is None else seed
    params = config.tomo_params()
    p1, p2, fk_strategy = config.strategies()
    tomo = ct.modified_tomography(params, (p1, p2), split_seed(seed, 0))
    report = {"seed": seed, "n": config.n, "d": config.d, "eps_prep": None,
              "tomography_verdict": fk.ACCEPT if tomo.accepted else fk.REJECT,
              "fk_verdict": None, "correct": None, "strategy_descriptor": config.describe()}
    if not tomo.accepted and not always_run_fk:
        return CompositeResult(fk.REJECT, (), report, tomo)
    if not tomo.accepted:
        # statistics only: collect the residual blocks the sessions produced anyway
        tomo.residual_xy = {s.basis: s.residuals for s in tomo.sessions if s.plane == "XY"}
        tomo.residual_xz = [r for s in tomo.sessions if s.plane == "XZ" for r in s.residuals]
    # FK secrets are drawn only after tomography has finished
    secrets = config.fk_setup.sample_secrets(split_seed(seed, 1))
    inp, secrets = map_residuals(tomo, secrets, np.random.default_rng(split_seed(seed, 2)))
    t = fk.run_fk(secrets, fk_strategy, inp, np.random.default_rng(split_seed(seed, 3)))
    report["eps_prep"] = tomo.eps_prep
    report["fk_verdict"] = t.verdict
    report["correct"] = t.correct
    verdict = fk.ACCEPT if tomo.accepted and t.accepted else fk.REJECT
    return CompositeResult(verdict, t.output, report, tomo, t)


@dataclass
class CompositeEstimate:
    trials: int
    joint_accept: float
    tomography_accept: float
    fk_accept: float
    accept_incorrect: float
    mean_eps_prep: float
    ci_joint: tuple[float, float] = field(default=(0.0, 1.0))

    @property
    def product_of_marginals(self) -> float:
        return self.tomography_accept * self.fk_accept

    def to_dict(self) -> dict:
        return {"trials": self.trials, "joint_accept": self.joint_accept,
                "tomography_accept": self.tomography_accept, "fk_accept": self.fk_accept,
                "product_of_marginals": self.product_of_marginals,
                "accept_incorrect": self.accept_incorrect, "mean_eps_prep": self.mean_eps_prep,
                "ci_joint": list(self.ci_joint)}


def estimate_composite(config: CompositeConfig, trials: int, seed: int) -> CompositeEstimate:
    """Monte Carlo over independent composite runs; FK runs even after a tomography reject."""
    joint = tomo = fka = bad = 0
    eps = []
    for i in range(trials):
        r = run_composite(config, split_seed(seed, i), always_run_fk=True)
        acc = r.verdict == fk.ACCEPT
        joint += acc
        tomo += r.report["tomography_verdict"] == fk.ACCEPT
        fka += r.report["fk_verdict"] == fk.ACCEPT
        bad += acc and not r.report["correct"]
        eps.append(r.report["eps_prep"])
    e = estimate(joint, trials)
    return CompositeEstimate(trials, joint / trials, tomo / trials, fka / trials, bad / trials,
                             float(np.mean(eps)), e.ci)


def correlation_table(betas, gammas, config: CompositeConfig, trials: int, seed: int) -> list[dict]:
    """Accept-and-incorrect frequency for correlated and independent tape use (observation only)."""
    rows = []
    for beta in betas:
        for gamma in gammas:
            row = {"beta": beta, "gamma": gamma}
            for corr in (True, False):
                bad = 0
                for i in range(trials):
                    adv = CorrelatedAdversary(beta, gamma, corr, tape_seed=split_seed(seed, 10_000 + i))
                    cfg = CompositeConfig(**{**config.__dict__, "adversary": adv})
                    r = run_composite(cfg, split_seed(seed, i))
                    bad += r.verdict == fk.ACCEPT and not r.report["correct"]
                row["correlated" if corr else "independent"] = bad / trials
            rows.append(row)
    return rows


def composite_bounds(n: int, d: int) -> dict:
    """Completeness 1 - O(n^-1/128); soundness (2/3)^ceil(2d/5) + O(n^-1/12); O-constants unknown."""
    if n < 2:
        raise ValueError("n must be >= 2")
    sb = fk.soundness_bound(d)
    return {
        "completeness_form": "1 - O(n^(-1/128))",
        "completeness_exponent": -1 / 128,
        "completeness_reference": 1 - n ** (-1 / 128),
        "soundness_form": f"{sb:.5f} + O(n^(-1/12))",
        "soundness_exponent": -1 / 12,
        "soundness_term": sb,
        "soundness_reference": sb + n ** (-1 / 12),
        "o_constants": "unknown",
        "log10_rounds": ct.composite_round_complexity(n),
    }


def sqrt_shift_reference(eps: float, c: float = 1.0) -> float:
    """c sqrt(eps): reference curve for the soundness shift under eps-close inputs."""
    return c * math.sqrt(max(0.0, eps))

"""Batch experiments: config validation, seeded trial fan-out, bound checks and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chsh_tomo as ct
from . import composite, fk, graphs, noise_ft, qsim
from .stats import estimate, split_seed

SCHEMA_VERSION = 1
KINDS = ("fk", "robustness", "chsh", "tomography", "composite", "ft", "bounds")
CHUNK = 250
WORKERS_ENV = "VBQC_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass
class Check:
    name: str
    anchor: str          # identifier of the claim being checked
    value: float
    bound: float
    relation: str        # one of ==, >=, <=, <
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "value": _num(self.value),
                "bound": _num(self.bound), "relation": self.relation, "passed": bool(self.passed)}


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def check(name: str, anchor: str, value: float, relation: str, bound: float) -> Check:
    ops = {"==": lambda a, b: a == b, ">=": lambda a, b: a >= b, "<=": lambda a, b: a <= b,
           "<": lambda a, b: a < b, ">": lambda a, b: a > b}
    return Check(name, anchor, value, bound, relation, bool(ops[relation](value, bound)))


@dataclass
class ExperimentReport:
    config: dict
    frequency: float | None = None
    ci: tuple[float, float] | None = None
    checks: list[Check] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    csv_columns: tuple = ()
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self, include_wall_clock: bool = True) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "config": self.config,
             "frequency": self.frequency, "ci": list(self.ci) if self.ci else None,
             "checks": [c.to_dict() for c in self.checks], "passed": self.passed,
             "results": _jsonable(self.results), "records": _jsonable(self.records)}
        if include_wall_clock:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self, include_wall_clock: bool = True) -> str:
        return json.dumps(self.to_dict(include_wall_clock), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.csv_columns)
        for r in self.records:
            w.writerow([r.get(c) for c in self.csv_columns])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return _num(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# ---------------------------------------------------------------------------
# config


DEFAULTS = {
    "fk": {"graph": "dotted", "N": 1, "pad": False, "line_n": 4, "strategy": "honest", "q": 1.0,
           "pauli": "Z", "gamma": 0.3, "battery": False, "epsilon": 0.0, "mode": fk.LOCAL_ROTATION,
           "computation_seed": 0},
    "robustness": {"graph": "dotted", "N": 1, "pad": False, "epsilons": [0.01, 0.05, 0.1],
                   "modes": [fk.LOCAL_ROTATION, fk.ENV_CORRELATED], "computation_seed": 0},
    "chsh": {"rounds": 100_000, "games_per_group": 10_000, "referee_trials": 200},
    "tomography": {"n": 10_000, "sessions": 200, "sweep_ns": [1000, 10_000, 100_000],
                   "sweep_sessions": 21},
    "composite": {"n": 10_000, "games_per_group": 10_000, "N": 1, "pad": True, "d": 25,
                  "strategy": "honest", "beta": 0.0, "gamma": 0.0, "correlated": True},
    "ft": {"n_traps": 10, "p": 0.1, "threshold_n_traps": 100, "threshold_p": 0.1, "threshold_eps": 0.05,
           "n": 10, "c": 3.0, "R": 2.0, "grid": 50, "deception_trials": 10_000_000},
    "bounds": {"d": 25, "n": 2},
}


def validate_config(cfg: dict) -> dict:
    """Fill defaults and reject malformed configs before any work starts."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    if "seed" not in cfg or not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("a non-negative integer seed is required")
    trials = cfg.get("trials", 1000)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials must be a positive integer")
    params = dict(DEFAULTS[kind])
    unknown = set(cfg.get("params", {})) - set(params)
    if unknown:
        raise ConfigError(f"unknown parameters for {kind}: {sorted(unknown)}")
    params.update(cfg.get("params", {}))
    out = {"kind": kind, "seed": cfg["seed"], "trials": trials, "params": params,
           "log": cfg.get("log", "natural")}
    if out["log"] != "natural":
        raise ConfigError("only the natural-log convention is implemented")
    if kind in ("fk", "robustness"):
        n_q = _fk_setup(params).n_qubits
        if n_q > qsim.STATEVECTOR_CAP:
            raise ConfigError(f"FK instance needs {n_q} qubits, above the statevector cap")
    if kind == "fk" and params["strategy"] not in FK_STRATEGIES:
        raise ConfigError(f"unknown FK strategy {params['strategy']!r}")
    if kind == "composite":
        _composite_config(params, cfg["seed"]).tomo_params()
    return out


def _fk_setup(p: dict) -> fk.FKSetup:
    if p.get("graph", "dotted") == "line":
        return fk.FKSetup("line", p.get("line_n", 4), computation_seed=p.get("computation_seed", 0))
    return fk.FKSetup("dotted", p.get("N", 1), p.get("pad", False), p.get("computation_seed", 0))


FK_STRATEGIES = {
    "honest": lambda p: fk.ProverStrategy(),
    "reflect-all": lambda p: fk.ReflectAll(),
    "flip-traps": lambda p: fk.FlipTrapsRandomly(p.get("q", 1.0)),
    "random-pauli": lambda p: fk.RandomPauli(p.get("pauli", "Z")),
    "tape-rotation": lambda p: fk.TapeRotation(p.get("gamma", 0.3)),
    "malformed": lambda p: fk.Malformed(),
}


# ---------------------------------------------------------------------------
# trial fan-out


def _fk_chunk(args) -> list[dict]:
    params, strategy, eps, mode, seed, start, stop = args
    setup = _fk_setup(params)
    recs = []
    for i in range(start, stop):
        sec_seed, rng, dev_seed = fk.trial_streams(seed, i)
        secrets = setup.sample_secrets(sec_seed)
        inp = fk.deviate_input(fk.ideal_input(secrets), eps, mode, dev_seed) if eps > 0 else None
        strat = FK_STRATEGIES[strategy](params)
        t = fk.run_fk(secrets, strat, inp, rng)
        rec = {"trial": i, "seed": sec_seed, "epsilon": eps, "strategy": strategy, "verdict": t.verdict,
               "correct": t.correct, "n_qubits": secrets.n_qubits}
        if setup.kind == "dotted":
            part = graphs.Partition(secrets.roles, sec_seed, ())
            rec["odd_trap"] = part.has_odd_parity_trap(secrets.graph)
        recs.append(rec)
    return recs


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def fan_out(fn, tasks: list, workers: int) -> list:
    """Run tasks (fixed chunking, so results do not depend on the worker count) and concatenate."""
    if workers <= 1 or len(tasks) <= 1:
        results = [fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(fn, tasks))
    return [r for chunk in results for r in chunk]


def _fk_records(params, strategy, eps, mode, seed, trials, workers):
    tasks = [(params, strategy, eps, mode, seed, s, min(trials, s + CHUNK)) for s in range(0, trials, CHUNK)]
    return fan_out(_fk_chunk, tasks, workers)


# ---------------------------------------------------------------------------
# experiments


FK_COLUMNS = ("seed", "epsilon", "strategy", "verdict", "correct", "n_qubits")


def _exp_fk(cfg, workers) -> ExperimentReport:
    p, seed, trials = cfg["params"], cfg["seed"], cfg["trials"]
    rep = ExperimentReport(cfg, csv_columns=FK_COLUMNS)
    if p["battery"]:
        return _exp_battery(cfg, rep)
    recs = _fk_records(p, p["strategy"], p["epsilon"], p["mode"], seed, trials, workers)
    rep.records = recs
    acc = sum(r["verdict"] == fk.ACCEPT for r in recs)
    good = sum(r["verdict"] == fk.ACCEPT and r["correct"] for r in recs)
    bad = sum(r["verdict"] == fk.ACCEPT and not r["correct"] for r in recs)
    e = estimate(acc, trials)
    rep.frequency, rep.ci = e.frequency, e.ci
    rep.results = {"accept": acc, "accept_correct": good, "accept_incorrect": bad,
                   "n_qubits": recs[0]["n_qubits"]}
    strat = p["strategy"]
    if strat == "honest" and p["epsilon"] == 0:
        rep.checks.append(check("honest accept-and-correct frequency", "fk.honest-completeness-exact",
                                good / trials, "==", 1.0))
    elif strat == "reflect-all":
        odd = [r for r in recs if r.get("odd_trap", False)]
        rep.results["odd_trap_runs"] = len(odd)
        if odd:
            rej = sum(r["verdict"] == fk.REJECT for r in odd) / len(odd)
            rep.checks.append(check("reflect-all reject frequency on odd-parity partitions",
                                    "fk.reflection-detected-exact", rej, "==", 1.0))
    elif strat == "flip-traps" and p["q"] == 1.0:
        rep.checks.append(check("Z-on-every-qubit reject frequency", "fk.flip-all-rejected",
                                1 - acc / trials, "==", 1.0))
    rep.results["soundness_bound_d"] = {"d": 25, "value": fk.soundness_bound(25)}
    return rep


def deviation_battery(n: int, seed: int) -> list[tuple[str, fk.UnitaryDeviation]]:
    """Fixed unitary deviations for an ``n``-qubit line: single-qubit Paulis and H, pair and global Haar."""
    rng = np.random.default_rng(seed)
    out = []
    for name in ("X", "Y", "Z"):
        for q in range(n):
            out.append((f"{name}{q}", fk.UnitaryDeviation(qsim.PAULIS[name], [q], f"{name}{q}")))
    for q in range(n):
        out.append((f"H{q}", fk.UnitaryDeviation(qsim.H, [q], f"H{q}")))
    for q in range(n - 1):
        out.append((f"haar{q}{q + 1}", fk.UnitaryDeviation(qsim.haar_unitary(4, rng), [q, q + 1], f"haar{q}{q + 1}")))
    for k in range(2):
        out.append((f"haar-all{k}", fk.UnitaryDeviation(qsim.haar_unitary(2 ** n, rng), None, f"haar-all{k}")))
    zall = qsim.PAULIS["Z"]
    for _ in range(n - 1):
        zall = np.kron(zall, qsim.PAULIS["Z"])
    out.append(("Z-all", fk.UnitaryDeviation(zall, None, "Z-all")))
    return out


def _exp_battery(cfg, rep) -> ExperimentReport:
    p, seed, trials = cfg["params"], cfg["seed"], cfg["trials"]
    n = p["line_n"]
    setup = fk.FKSetup("line", n, computation_seed=p["computation_seed"])
    bound = 1 - 1 / (2 * n)
    rows = {}
    for k, (name, dev) in enumerate(deviation_battery(n, split_seed(seed, 999))):
        est = fk.estimate_p_incorrect(setup, dev, trials, split_seed(seed, k))
        exact = None
        if n <= 6:
            exact = fk.exact_line_outcomes(n, [(1.0, dev.operator(n))], p["computation_seed"])[1]
        upper = est.frequency + 3 * est.stderr
        rows[name] = {"frequency": est.frequency, "ci": est.ci, "exact": exact}
        rep.checks.append(check(f"{name}: accept-and-incorrect + 3 sigma", "fk.single-trap-soundness",
                                upper, "<", bound))
        if exact is not None:
            tol = 4 * max(est.stderr, math.sqrt(exact * (1 - exact) / trials), 1 / trials)
            rep.checks.append(check(f"{name}: Monte Carlo minus exhaustive enumeration",
                                    "fk.exhaustive-oracle-agreement", abs(est.frequency - exact), "<=", tol))
        rep.records.append({"seed": split_seed(seed, k), "epsilon": 0.0, "strategy": name,
                            "verdict": None, "correct": None, "n_qubits": n})
    rep.results = {"bound": bound, "deviations": rows}
    rep.frequency = max(r["frequency"] for r in rows.values())
    return rep


def _exp_robustness(cfg, workers) -> ExperimentReport:
    p, seed, trials = cfg["params"], cfg["seed"], cfg["trials"]
    rep = ExperimentReport(cfg, csv_columns=("mode",) + FK_COLUMNS)
    rows = []
    for mi, mode in enumerate(p["modes"]):
        for ei, eps in enumerate(p["epsilons"]):
            recs = _fk_records(p, "honest", eps, mode, split_seed(seed, 100 * mi + ei), trials, workers)
            for r in recs:
                r["mode"] = mode
            rep.records += recs
            good = sum(r["verdict"] == fk.ACCEPT and r["correct"] for r in recs)
            e = estimate(good, trials, reference=1 - 2 * eps)
            rows.append({"mode": mode, "epsilon": eps, **e.to_dict()})
            rep.checks.append(check(f"{mode} eps={eps}: CI lower bound", "fk.robust-completeness-1-2eps",
                                    e.ci[0], ">=", 1 - 2 * eps))
    rep.results = {"rows": rows}
    rep.frequency = min(r["frequency"] for r in rows)
    return rep


def _exp_chsh(cfg, workers) -> ExperimentReport:
    p, seed = cfg["params"], cfg["seed"]
    rep = ExperimentReport(cfg)
    ideal = (ct.Ideal(), ct.Ideal())
    rates = {}
    for i, game in enumerate(ct.GAMES):
        r = ct.play_chsh(ideal, game, p["rounds"], split_seed(seed, i))
        sigma = math.sqrt(ct.WIN_RATE * (1 - ct.WIN_RATE) / p["rounds"])
        rates[game.name] = r.win_rate
        rep.checks.append(check(f"{game.name}: |win rate - cos^2(pi/8)| / sigma", "chsh.quantum-win-rate",
                                abs(r.win_rate - ct.WIN_RATE) / sigma, "<=", 3.0))
        rep.checks.append(check(f"{game.name}: best deterministic classical win", "chsh.classical-max",
                                ct.best_classical_win(game), "==", 0.75))
    M, T = p["games_per_group"], p["referee_trials"]
    game = ct.GAMES[0]
    classical = (ct.FixedAnswers(), ct.FixedAnswers())
    acc_h = sum(ct.chsh_referee(ct.play_chsh(ideal, game, M, split_seed(seed, 100 + t)).wins, 1, M)
                for t in range(T))
    rej_c = sum(not ct.chsh_referee(ct.play_chsh(classical, game, M, split_seed(seed, 10_000 + t)).wins, 1, M)
                for t in range(T))
    rep.checks.append(check("referee accepts ideal play", "chsh.referee-completeness", acc_h / T, ">=", 0.99))
    rep.checks.append(check("referee rejects 0.75 play", "chsh.referee-rejects-classical", rej_c / T, ">=", 0.99))
    rep.results = {"win_rates": rates, "threshold": ct.chsh_threshold(M),
                   "classical_win": ct.win_probability(classical, game)}
    rep.frequency = acc_h / T
    return rep


def _exp_tomography(cfg, workers) -> ExperimentReport:
    p, seed = cfg["params"], cfg["seed"]
    rep = ExperimentReport(cfg)
    n, T = p["n"], p["sessions"]
    honest = (ct.Ideal(), ct.Ideal())
    cheat = (ct.Ideal(), ct.ConstantAnnouncer(0))
    acc = sum(ct.tomography_session("XY", t % 4, n, honest, split_seed(seed, t)).accepted for t in range(T))
    rej = sum(not ct.tomography_session("XY", t % 4, n, cheat, split_seed(seed, 10_000 + t)).accepted
              for t in range(T))
    rep.checks.append(check("honest sessions pass both criteria", "tomo.honest-acceptance", acc / T, ">=", 0.99))
    rep.checks.append(check("constant announcer rejected", "tomo.constant-announcer-rejected", rej / T, ">=", 0.99))
    sweep = {}
    for k, m in enumerate(p["sweep_ns"]):
        sweep[m] = ct.eps_prep_at(m, p["sweep_sessions"], split_seed(seed, 20_000 + k))
    vals = [sweep[m] for m in p["sweep_ns"]]
    inc = max((b - a for a, b in zip(vals, vals[1:])), default=0.0)
    rep.checks.append(check("eps_prep sweep largest increase", "tomo.eps-prep-nonincreasing", inc, "<=", 0.0))
    honest_out = ct.modified_tomography(ct.TomoParams(n=n), honest, split_seed(seed, 30_000))
    rep.checks.append(check("honest eps_prep", "tomo.honest-closeness", honest_out.eps_prep, "<", 0.01))
    rep.results = {"honest_accept": acc / T, "cheater_reject": rej / T, "eps_prep_sweep": sweep,
                   "reference_scaling": {m: ct.closeness_reference(m)[0] for m in p["sweep_ns"]}}
    rep.frequency = acc / T
    return rep


def _composite_config(p: dict, seed: int) -> composite.CompositeConfig:
    adv = None
    if p["strategy"] == "correlated":
        adv = composite.CorrelatedAdversary(p["beta"], p["gamma"], p["correlated"])
    elif p["strategy"] not in composite.PAIRS:
        raise ConfigError(f"unknown composite strategy {p['strategy']!r}")
    return composite.CompositeConfig(p["n"], p["games_per_group"], p["N"], p["pad"], p["d"],
                                     p["strategy"] if adv is None else "honest", adv, seed=seed)


def _exp_composite(cfg, workers) -> ExperimentReport:
    p, seed, trials = cfg["params"], cfg["seed"], cfg["trials"]
    rep = ExperimentReport(cfg, csv_columns=("seed", "n", "d", "eps_prep", "tomography_verdict", "fk_verdict",
                                             "correct"))
    conf = _composite_config(p, seed)
    acc = bad = fk_rej = tomo_acc = 0
    for i in range(trials):
        s = split_seed(seed, i)
        if conf.adversary is not None:
            conf.adversary.tape_seed = split_seed(s, 7)
        r = composite.run_composite(conf, s)
        rep.records.append({k: r.report[k] for k in rep.csv_columns})
        acc += r.verdict == fk.ACCEPT
        bad += r.verdict == fk.ACCEPT and not r.report["correct"]
        tomo_acc += r.report["tomography_verdict"] == fk.ACCEPT
        fk_rej += r.report["fk_verdict"] == fk.REJECT
    e = estimate(acc, trials)
    rep.frequency, rep.ci = e.frequency, e.ci
    rep.results = {"accept": acc, "accept_incorrect": bad, "tomography_accept": tomo_acc,
                   "bounds": composite.composite_bounds(max(2, p["N"]), p["d"])}
    if p["strategy"] == "honest":
        # tomography completeness is statistical; FK must accept every run tomography passed
        rep.checks.append(check("honest pair: FK accept frequency after tomography accepts",
                                "composite.honest-fk-stage", acc / max(1, tomo_acc), "==", 1.0))
    if p["strategy"] == "reflected":
        rep.checks.append(check("reflected pair: tomography accept frequency", "composite.reflection-undetected",
                                tomo_acc / trials, "==", 1.0))
        rep.checks.append(check("reflected pair: FK reject frequency", "composite.reflection-caught-by-fk",
                                fk_rej / max(1, tomo_acc), "==", 1.0))
    return rep


def _exp_ft(cfg, workers) -> ExperimentReport:
    p, seed, trials = cfg["params"], cfg["seed"], cfg["trials"]
    rep = ExperimentReport(cfg, csv_columns=("n", "c", "R", "N", "p", "strategy", "verdict", "deceived"))
    e2 = noise_ft.simulate_noisy_traps(p["n_traps"], p["p"], trials, split_seed(seed, 0))
    ref = e2.reference
    rep.checks.append(check("all-traps-pass frequency vs (1-p)^N_T, in sigma", "ft.noisy-completeness",
                            abs(e2.frequency - ref) / math.sqrt(ref * (1 - ref) / trials), "<=", 3.0))
    e3 = noise_ft.simulate_threshold(p["threshold_n_traps"], p["threshold_p"], p["threshold_eps"], trials,
                                     split_seed(seed, 1))
    rep.checks.append(check("threshold acceptance rate", "ft.threshold-completeness", e3.frequency, ">=",
                            e3.reference))
    params = noise_ft.FtParams(p["n"], p["c"], p["R"])
    # the true rate sits just under 2^-R, so the upper 3 sigma edge needs millions of sequences
    dec = noise_ft.estimate_deception(params, noise_ft.FtStrategy("capped"), p["deception_trials"],
                                      split_seed(seed, 2))
    rep.checks.append(check("capped adversary deception rate + 3 sigma", "ft.repetition-soundness",
                            dec.frequency + 3 * dec.stderr, "<", 2.0 ** -p["R"]))
    grid = _schedule_grid(p["grid"])
    worst = 0.0
    for n, c, R in grid:
        N = noise_ft.repetition_schedule(n, c, R)
        lhs, rhs = noise_ft.schedule_consequence(n, c, R, N)
        lower_ok = N > R / math.log2(c * n / (c * n - 1))
        worst = max(worst, (lhs / rhs) if lower_ok else math.inf)
    rep.checks.append(check("schedule grid: max (1-1/cn)^N / 2^-R", "ft.schedule-consequence", worst, "<", 1.0))
    for i in range(min(trials, 1000)):
        r = noise_ft.run_ft_protocol(params, noise_ft.FtStrategy("capped"), split_seed(seed, 10 + i))
        rep.records.append({"n": params.n, "c": params.c, "R": params.R, "N": params.encodings, "p": params.p,
                            "strategy": "capped", "verdict": r.verdict, "deceived": r.deceived})
    rep.results = {"noisy_traps": e2.to_dict(), "threshold": e3.to_dict(), "deception": dec.to_dict(),
                   "N": params.encodings, "schedule_grid_size": len(grid),
                   "threshold_inflation_bits": noise_ft.binomial_inflation_bits(100, 90),
                   "exact_product_distance_3q_p0.1": noise_ft.exact_product_distance(3, 0.1),
                   "depolarized_zero_distance_p0.3": noise_ft.exact_product_distance(1, 0.3)}
    rep.frequency = dec.frequency
    return rep


def _schedule_grid(k: int) -> list[tuple[int, float, float]]:
    ns = [2, 5, 10, 50, 100, 1000, 10_000, 3, 20, 500]
    cs = [2.5, 3.0, 4.0, 8.0, 16.0]
    Rs = [1.5, 2.0, 3.0, 5.0, 10.0]
    grid = [(n, c, R) for n in ns for c, R in zip(cs, Rs)]
    return grid[:k]


def _exp_bounds(cfg, workers) -> ExperimentReport:
    p = cfg["params"]
    rep = ExperimentReport(cfg)
    sb = fk.soundness_bound(p["d"])
    ruv = ct.ruv_round_complexity(p["n"])
    comp = ct.composite_round_complexity(p["n"])
    rep.results = {"soundness_bound": sb, "log10_ruv_rounds": ruv, "log10_composite_rounds": comp,
                   "composite_bounds": composite.composite_bounds(p["n"], p["d"])}
    if p["d"] == 25:
        rep.checks.append(check("|soundness_bound(25) - 0.01734|", "fk.soundness-bound", abs(sb - 0.01734), "<=",
                                1e-5))
    if p["n"] == 2:
        rep.checks.append(check("|log10 RUV rounds - 2466.0|", "tomo.ruv-round-complexity", abs(ruv - 2466.0),
                                "<=", 0.1))
        rep.checks.append(check("|log10 composite rounds - 616.5|", "composite.round-complexity",
                                abs(comp - 616.5), "<=", 0.1))
    rep.frequency = None
    return rep


DISPATCH = {"fk": _exp_fk, "robustness": _exp_robustness, "chsh": _exp_chsh, "tomography": _exp_tomography,
            "composite": _exp_composite, "ft": _exp_ft, "bounds": _exp_bounds}


def run_experiment(config: dict, workers: int | None = None) -> ExperimentReport:
    """Validate, dispatch and time one experiment.  Deterministic apart from ``wall_clock``."""
    cfg = validate_config(config)
    t0 = time.perf_counter()
    rep = DISPATCH[cfg["kind"]](cfg, default_workers() if workers is None else workers)
    rep.wall_clock = time.perf_counter() - t0
    return rep

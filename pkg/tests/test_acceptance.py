"""End-to-end acceptance suite.  Each criterion prints one PASS/FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py`` (or ``python3 tests/test_acceptance.py``).
"""

import json
import math

import numpy as np
import pytest

from vbqc import harness, qsim

ATOL = qsim.ATOL_COMPOSED

CONFIGS = {
    "1a": {"kind": "fk", "seed": 101, "trials": 1000, "params": {"N": 1}},
    "1b": {"kind": "fk", "seed": 102, "trials": 1000, "params": {"N": 2}},
    "2": {"kind": "robustness", "seed": 201, "trials": 10_000},
    "3a": {"kind": "fk", "seed": 301, "trials": 1000, "params": {"N": 1, "pad": True, "strategy": "reflect-all"}},
    "3b": {"kind": "fk", "seed": 302, "trials": 1000, "params": {"N": 2, "strategy": "reflect-all"}},
    "4": {"kind": "fk", "seed": 401, "trials": 10_000, "params": {"graph": "line", "line_n": 4, "battery": True}},
    "5": {"kind": "chsh", "seed": 501, "params": {"rounds": 100_000, "games_per_group": 10_000}},
    "6": {"kind": "tomography", "seed": 601, "params": {"n": 10_000, "sweep_ns": [1000, 10_000, 100_000]}},
    "7": {"kind": "ft", "seed": 701, "trials": 100_000, "params": {"n": 10, "c": 3.0, "R": 2.0, "grid": 50}},
    "9": {"kind": "bounds", "seed": 901, "params": {"d": 25, "n": 2}},
}

_reports: dict[str, str] = {}


def _run(key):
    rep = harness.run_experiment(CONFIGS[key])
    _reports[key] = rep.to_json(include_wall_clock=False)
    return rep


def _line(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def _failed(rep):
    return [f"{c.name} ({c.value:.6g} {c.relation} {c.bound:.6g})" for c in rep.checks if not c.passed]


def test_criterion_01_fk_completeness(capsys):
    a, b = _run("1a"), _run("1b")
    ok = a.frequency == 1.0 and b.frequency == 1.0 and a.passed and b.passed
    ok = ok and a.results["n_qubits"] == 6 and b.results["n_qubits"] == 21
    _line(capsys, 1, ok, f"honest accept freq N=1: {a.frequency}, N=2: {b.frequency} over 1000 seeds each")
    assert ok


def test_criterion_02_robustness(capsys):
    rep = _run("2")
    worst = min(r["ci"][0] - (1 - 2 * r["epsilon"]) for r in rep.results["rows"])
    _line(capsys, 2, rep.passed, f"6 (mode, eps) cells x 1e4 trials; min CI-lower minus (1-2eps) = {worst:.4f}")
    assert rep.passed, _failed(rep)


def test_criterion_03_reflection_detection(capsys):
    reps = [_run("3a"), _run("3b")]
    odd = [r.results["odd_trap_runs"] for r in reps]
    ok = all(r.passed and r.checks for r in reps) and all(o > 0 for o in odd)
    freqs = [r.checks[0].value if r.checks else None for r in reps]
    _line(capsys, 3, ok, f"reflect-all reject freq on odd-parity partitions {freqs} ({odd} runs)")
    assert ok


def test_criterion_04_single_trap_soundness(capsys):
    rep = _run("4")
    devs = rep.results["deviations"]
    worst = max(v["frequency"] for v in devs.values())
    ok = rep.passed and len(devs) >= 20 and all(v["exact"] is not None for v in devs.values())
    _line(capsys, 4, ok, f"{len(devs)} deviations x 1e4 trials; max accept-and-incorrect {worst:.4f} vs 0.875; "
                         "all agree with exhaustive enumeration")
    assert ok, _failed(rep)


def test_criterion_05_chsh(capsys):
    rep = _run("5")
    _line(capsys, 5, rep.passed, f"win rates {sorted(round(v, 4) for v in rep.results['win_rates'].values())}; "
                                 f"referee accepts ideal {rep.frequency:.3f}")
    assert rep.passed, _failed(rep)


def test_criterion_06_tomography(capsys):
    rep = _run("6")
    sweep = {k: round(v, 5) for k, v in rep.results["eps_prep_sweep"].items()}
    _line(capsys, 6, rep.passed, f"honest accept {rep.results['honest_accept']:.3f}, cheater reject "
                                 f"{rep.results['cheater_reject']:.3f}, eps_prep sweep {sweep}")
    assert rep.passed, _failed(rep)


def test_criterion_07_noise_ft(capsys):
    rep = _run("7")
    dec = rep.results["deception"]
    ok = rep.passed and rep.results["N"] == 41 and rep.results["schedule_grid_size"] == 50
    up = dec["frequency"] + 3 * math.sqrt(dec["frequency"] * (1 - dec["frequency"]) / dec["trials"])
    _line(capsys, 7, ok, f"N=41, deception {dec['frequency']:.5f} (+3 sigma {up:.5f}) vs 0.25 over "
                         f"{dec['trials']} sequences; 50-triple schedule grid holds")
    assert ok, _failed(rep)


def _random_channel(rng, d_env=2):
    # Stinespring: Haar unitary on system x environment, environment starts in |0>, then traced out
    U = qsim.haar_unitary(4 * d_env, rng)
    V = U[:, ::d_env]  # columns for environment |0>
    kraus = [V[e::d_env, :] for e in range(d_env)]
    return lambda rho: sum(K @ rho @ K.conj().T for K in kraus)


def _inequality_counts(seed=801, n=10_000):
    rng = np.random.default_rng(seed)
    gentle = corr = contr = 0
    for i in range(n):
        psi = qsim.random_statevector(1, rng).data
        if i % 2:
            # near-product pure state, perturbation size log-uniform
            t = 10 ** rng.uniform(-4, 0)
            v = np.kron(psi, qsim.random_statevector(1, rng).data) + t * qsim.random_statevector(2, rng).data
            rho = qsim.QuantumRegister(v / np.linalg.norm(v))
        else:
            rho = qsim.random_density(2, rng)
        g = qsim.gentle_measurement_gap(rho, psi)
        gentle += g.lhs > g.bound + ATOL
        c = qsim.correlation_bound_check(rho, psi)
        corr += c.norm_unhalved > c.bound + ATOL
        a, b = qsim.random_density(2, rng).data, qsim.random_density(2, rng).data
        ch = _random_channel(rng)
        contr += qsim.trace_distance(ch(a), ch(b)) > qsim.trace_distance(a, b) + ATOL
    return {"gentle": int(gentle), "correlation": int(corr), "contractivity": int(contr), "samples": n}


def test_criterion_08_inequalities(capsys):
    counts = _inequality_counts()
    _reports["8"] = json.dumps(counts, sort_keys=True)
    ok = counts["gentle"] == counts["correlation"] == counts["contractivity"] == 0
    _line(capsys, 8, ok, f"violations over 1e4 samples each: {counts}")
    assert ok


def test_criterion_09_calculators(capsys):
    rep = _run("9")
    r = rep.results
    _line(capsys, 9, rep.passed, f"log10 rounds RUV {r['log10_ruv_rounds']:.4f}, composite "
                                 f"{r['log10_composite_rounds']:.4f}; soundness_bound(25) {r['soundness_bound']:.6f}")
    assert rep.passed, _failed(rep)


def test_criterion_10_determinism(capsys):
    if len(_reports) < len(CONFIGS) + 1:
        pytest.skip("needs the earlier criteria in the same session")
    differ = [k for k in CONFIGS if harness.run_experiment(CONFIGS[k]).to_json(include_wall_clock=False)
              != _reports[k]]
    if json.dumps(_inequality_counts(), sort_keys=True) != _reports["8"]:
        differ.append("8")
    ok = not differ
    _line(capsys, 10, ok, f"{len(CONFIGS) + 1} reports rerun; differing: {differ or 'none'}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-s", "-v", __file__]))

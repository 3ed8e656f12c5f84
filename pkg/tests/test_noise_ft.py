import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from vbqc import fk, noise_ft as nf
from vbqc.stats import wilson_ci


def _distance_oracle(n, p):
    # pure |0..0> against a diagonal product: D = 1 - <0..0|sigma'|0..0>
    return 1 - (1 - 2 * p / 3) ** n


def test_product_distance_bound_examples():
    assert nf.product_distance_bound(5, 0.0) == 0.0
    assert nf.product_distance_bound(100, 0.02) == 1.0
    assert nf.product_distance_bound(3, 0.1) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        nf.product_distance_bound(0, 0.1)


@pytest.mark.parametrize("n,p", [(1, 0.3), (3, 0.1), (4, 0.02), (6, 0.5)])
def test_exact_product_distance_matches_oracle(n, p):
    assert nf.exact_product_distance(n, p) == pytest.approx(_distance_oracle(n, p), abs=1e-9)
    assert nf.exact_product_distance(n, p) <= nf.product_distance_bound(n, p) + 1e-9


def test_exact_product_distance_frozen():
    assert nf.exact_product_distance(1, 0.3) == pytest.approx(0.2, abs=1e-9)
    assert nf.exact_product_distance(3, 0.1) == pytest.approx(0.18696296296296, abs=1e-9)
    # single qubit: linear in p, not the square-root form
    assert nf.exact_product_distance(1, 0.3) < math.sqrt(2 * 0.3 / 3)


def test_noisy_completeness():
    assert nf.noisy_completeness_bound(10, 0.0) == 1.0
    assert nf.noisy_completeness_bound(10, 0.1) == pytest.approx(0.3486784401)
    e = nf.simulate_noisy_traps(10, 0.1, 100_000, seed=3)
    assert abs(e.frequency - 0.3486784401) < 3 * math.sqrt(0.3487 * 0.6513 / 100_000)
    assert nf.simulate_noisy_traps(10, 0.0, 1000, seed=1).frequency == 1.0


def test_trap_record():
    r = nf.TrapRecord(np.array([True, False, True]))
    assert r.n_traps == 3 and r.F == 2


@pytest.mark.parametrize("F,accept", [(0, True), (14, True), (15, False), (40, False)])
def test_threshold_accept_boundary(F, accept):
    failed = np.zeros(100, dtype=bool)
    failed[:F] = True
    assert nf.threshold_accept(nf.TrapRecord(failed), 0.1, 0.05) is accept


def test_threshold_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        nf.threshold_accept(nf.TrapRecord(np.zeros(3, dtype=bool)), 0.1, 0.0)


def test_hoeffding_and_simulation():
    assert nf.hoeffding_completeness(100, 0.05) == pytest.approx(1 - math.exp(-0.5))
    assert nf.hoeffding_completeness(100, 0.05) == pytest.approx(0.3935, abs=1e-4)
    e = nf.simulate_threshold(100, 0.1, 0.05, 100_000, seed=4)
    assert e.ci[0] >= 0.3935


def test_binomial_inflation():
    assert nf.binomial_inflation_bits(100, 100) == 0.0
    oracle = (math.lgamma(101) - math.lgamma(91) - math.lgamma(11)) / math.log(2)
    assert nf.binomial_inflation_bits(100, 90) == pytest.approx(oracle, rel=1e-12)
    assert nf.binomial_inflation_bits(100, 90) == pytest.approx(43.9767, abs=1e-3)
    # exact for values far past float range
    big = nf.binomial_inflation_bits(5000, 2500)
    oracle = (math.lgamma(5001) - 2 * math.lgamma(2501)) / math.log(2)
    assert big == pytest.approx(oracle, rel=1e-9)
    with pytest.raises(ValueError):
        nf.binomial_inflation_bits(10, 11)


def test_threshold_soundness_factor():
    assert 2 ** nf.threshold_soundness_factor(100, 100, 25) == pytest.approx(fk.soundness_bound(25))
    for T in range(0, 101, 5):
        assert nf.threshold_soundness_factor(100, T, 25) >= math.log2(fk.soundness_bound(25))


def test_repetition_schedule_example():
    assert nf.repetition_schedule(10, 3, 2) == 41
    cons, target = nf.schedule_consequence(10, 3, 2)
    assert cons == pytest.approx((1 - 1 / 30) ** 41)
    assert cons == pytest.approx(0.249084366, abs=1e-9)
    assert cons < target == 0.25


def test_repetition_schedule_errors():
    with pytest.raises(ValueError):
        nf.repetition_schedule(1, 1, 2)
    with pytest.raises(ValueError):
        nf.repetition_schedule(10, 3, 0)


def test_schedule_grows_linearly():
    ratios = [nf.repetition_schedule(2 * n, 3, 2) / nf.repetition_schedule(n, 3, 2) for n in (10, 100, 1000, 10_000)]
    assert abs(ratios[0] - 2) < 0.05
    assert all(abs(r - 2) < 1e-3 for r in ratios[1:])
    # N / n approaches c R ln 2
    n = 10_000
    assert nf.repetition_schedule(n, 3, 2) / n == pytest.approx(3 * 2 * math.log(2), rel=1e-3)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=10_000), st.floats(min_value=2.01, max_value=20),
       st.floats(min_value=0.1, max_value=30))
def test_schedule_satisfies_bound_and_consequence(n, c, R):
    N = nf.repetition_schedule(n, c, R)
    assert N > R / math.log2(c * n / (c * n - 1))
    assert N - 1 <= R / math.log2(c * n / (c * n - 1))
    cons, target = nf.schedule_consequence(n, c, R)
    assert cons < target * (1 + 1e-9)


def test_ft_params_validation():
    assert nf.FtParams().encodings == 41
    assert nf.FtParams(N=5).encodings == 5
    for bad in ({"c": 2}, {"R": 0}, {"p": 0.02}, {"N": 0}):
        with pytest.raises(ValueError):
            nf.FtParams(**bad)


@pytest.mark.parametrize("backend", ["logical", "simulated"])
def test_honest_ft_always_accepts(backend):
    params = nf.FtParams(p=0.005)
    for seed in range(20 if backend == "logical" else 3):
        r = nf.run_ft_protocol(params, nf.FtStrategy(), seed, backend=backend)
        assert r.verdict == fk.ACCEPT and r.majority == 0 and not r.deceived


def test_simulated_backend_catches_trap_flips():
    strat = nf.FtStrategy("capped", 1.0, fk.FlipTrapsRandomly(1.0))
    r = nf.run_ft_protocol(nf.FtParams(N=5), strat, 0, backend="simulated")
    assert r.verdict == fk.REJECT and r.majority is None


def test_unknown_backend():
    with pytest.raises(ValueError):
        nf.run_ft_protocol(nf.FtParams(N=1), nf.FtStrategy("capped"), 0, backend="rhg")


def test_single_encoding_reduces_to_one_run():
    params = nf.FtParams(N=1, R=0.01)
    strat = nf.FtStrategy("capped", 1.0)
    res = [nf.run_ft_protocol(params, strat, s) for s in range(4000)]
    assert all(len(r.encoding_accepts) == 1 for r in res)
    rate = np.mean([r.deceived for r in res])
    assert abs(rate - params.deception_cap) < 4 * math.sqrt(0.03 * 0.97 / 4000)


def test_capped_deception_product_rule():
    params = nf.FtParams(n=10, c=3, R=2)
    T = 100_000
    e = nf.estimate_deception(params, nf.FtStrategy("capped", 1.0), T, seed=5)
    expected = params.deception_cap ** params.encodings
    lo, hi = wilson_ci(e.successes, T, level=0.999)
    assert lo <= expected <= hi


def test_minority_deviation_never_deceives():
    e = nf.estimate_deception(nf.FtParams(), nf.FtStrategy("capped", 0.4), 1000, seed=1)
    assert e.frequency == 0.0


def test_encodings_independent():
    params = nf.FtParams()
    C = nf.encoding_correlations(params, nf.FtStrategy("capped", 1.0), 100_000, seed=6)
    off = np.abs(C[np.triu_indices(len(C), 1)])
    # sampling sd of r is 1/sqrt(T); Bonferroni over all pairs at family level 0.01
    z = norm.ppf(1 - 0.01 / (2 * len(off)))
    assert off.max() < z / math.sqrt(100_000)
    assert off.mean() < 0.01

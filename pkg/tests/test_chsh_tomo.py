import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

from vbqc import chsh_tomo as ct
from vbqc import qsim

PAIRS = {
    "ideal": (ct.Ideal(), ct.Ideal()),
    "reflected": (ct.Reflected(), ct.Reflected()),
    "tilted": (ct.Ideal(), ct.Tilted(0.3)),
    "fixed": (ct.FixedAnswers({tuple(ct.EX): 1}), ct.Ideal()),
    "yz-deviant": (ct.Ideal(), ct.YZDeviant()),
    "constant-announcer": (ct.Ideal(), ct.ConstantAnnouncer()),
}


def _projector(v, bit):
    # M_v outcome bit 0 is the +1 eigenspace
    P = v[0] * qsim.X + v[1] * qsim.Y + v[2] * qsim.Z
    return (np.eye(2) + (1 - 2 * bit) * P) / 2


def _joint_oracle(a, b):
    psi = np.array([0, 1, 1, 0]) / math.sqrt(2)
    return np.array([[np.real(psi @ np.kron(_projector(a, A), _projector(b, B)) @ psi)
                      for B in (0, 1)] for A in (0, 1)])


# --- measurement set --------------------------------------------------------


def test_measurement_set():
    assert ct.S.shape == (9, 3)
    assert np.allclose(np.linalg.norm(ct.S, axis=1), 1)
    keys = {tuple(np.round(v, 12)) for v in ct.S}
    assert len(ct.GAMES) == 6
    for g in ct.GAMES:
        for v in g.a + g.b:
            assert tuple(np.round(v, 12)) in keys
    assert sorted(g.kind for g in ct.GAMES) == ["XY", "XY", "XZ", "XZ", "YZ", "YZ"]


def test_joint_distribution_matches_matrix_oracle():
    for g in ct.GAMES:
        for a, b in itertools.product(g.a, g.b):
            P = ct.joint_distribution(ct.Ideal(), np.array(a), ct.Ideal(), np.array(b))
            assert np.allclose(P, _joint_oracle(a, b), atol=qsim.ATOL)


def test_steering_rule():
    # +1 on question v for prover 2 leaves prover 1 with Bloch vector (v_x, v_y, -v_z)
    psi = qsim.bell_state("Psi+")
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        proj = np.kron(np.eye(2), _projector(v, 0))
        post = proj @ psi.data
        post /= np.linalg.norm(post)
        b = qsim.bloch_vector(qsim.partial_trace(qsim.QuantumRegister(post), [1]).data)
        assert np.allclose(b, ct.reflect_vector(v), atol=qsim.ATOL)


# --- games ------------------------------------------------------------------


@pytest.mark.parametrize("game", ct.GAMES, ids=lambda g: g.name)
def test_exact_win_probabilities(game):
    assert ct.win_probability(PAIRS["ideal"], game) == pytest.approx(math.cos(math.pi / 8) ** 2)
    assert ct.win_probability(PAIRS["reflected"], game) == pytest.approx(ct.WIN_RATE)
    assert ct.best_classical_win(game) == pytest.approx(0.75, abs=1e-12)


def test_classical_strategies_enumerated():
    assert len(list(ct.classical_strategies())) == 16


@pytest.mark.parametrize("k", range(6))
def test_ideal_play_rate(k):
    T = 100_000
    r = ct.play_chsh(PAIRS["ideal"], ct.GAMES[k], T, seed=k)
    assert abs(r.win_rate - ct.WIN_RATE) < 3 * math.sqrt(ct.WIN_RATE * (1 - ct.WIN_RATE) / T)


def test_play_jsonl_and_determinism():
    g = ct.GAMES[0]
    a = ct.play_chsh(PAIRS["ideal"], g, 50, 3)
    b = ct.play_chsh(PAIRS["ideal"], g, 50, 3)
    assert a.to_jsonl() == b.to_jsonl()
    assert len(a.to_jsonl().splitlines()) == 50


@pytest.mark.parametrize("name", sorted(PAIRS))
def test_no_signaling(name):
    # prover 1's outcome marginal, per own question, does not depend on prover 2's question
    pair = PAIRS[name]
    for g in ct.GAMES:
        r = ct.play_chsh(pair, g, 20_000, seed=1)
        for x in (0, 1):
            table = np.array([[np.count_nonzero((r.x == x) & (r.y == y) & (r.A == A)) for A in (0, 1)]
                              for y in (0, 1)])
            if (table.sum(axis=0) == 0).any():
                continue  # deterministic answer: trivially independent
            assert chi2_contingency(table).pvalue > 0.01


def test_reflection_covariance_exact():
    for g in ct.GAMES:
        for a, b in itertools.product(g.a, g.b):
            a, b = np.array(a), np.array(b)
            assert np.allclose(ct.joint_distribution(ct.Reflected(), a, ct.Reflected(), b),
                               ct.joint_distribution(ct.Ideal(), a, ct.Ideal(), b))


def test_referee_threshold_values():
    assert ct.chsh_threshold(10_000) == pytest.approx(8428.2356, abs=1e-3)
    assert ct.chsh_referee(8500, 1, 10_000)
    assert ct.chsh_referee(10_000, 1, 10_000)
    assert not ct.chsh_referee(7500, 1, 10_000)
    with pytest.raises(ValueError):
        ct.chsh_referee(1, 0, 10)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=10**6), st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1))
def test_referee_upward_closed(M, f1, f2):
    lo, hi = sorted((int(f1 * M), int(f2 * M)))
    if ct.chsh_referee(lo, 1, M):
        assert ct.chsh_referee(hi, 1, M)


# --- tomography -------------------------------------------------------------


def _synthetic_stats(n, tau_shift=None):
    expected = {(o, p): (1.0 if o == 0 else -1.0) if p == "X" else 0.0 for o in (0, 1) for p in ("X", "Y")}
    tau = dict(expected)
    if tau_shift is not None:
        tau[tau_shift] += 2 * ct.tau_tolerance(n)
    return ct.TomographyStats(n, np.array([n // 2, n - n // 2]), tau, expected)


def test_tomography_accept_synthetic():
    assert ct.tomography_accept(_synthetic_stats(10_000))
    assert not ct.tomography_accept(_synthetic_stats(10_000, (1, "Y")))


def test_tomography_stats_counts_must_sum():
    with pytest.raises(ValueError):
        ct.TomographyStats(10, np.array([3, 3]), {}, {})


def test_tolerances():
    n = 10_000
    assert ct.count_tolerance(n) == pytest.approx(4 * math.sqrt(n * math.log(n)))
    assert ct.tau_tolerance(n) == pytest.approx(4 * math.sqrt(math.log(n) / n))


@pytest.mark.parametrize("plane,basis", [("XY", b) for b in range(8)] + [("XZ", 0)])
def test_honest_session_within_tolerances(plane, basis):
    n = 10_000
    res = ct.tomography_session(plane, basis, n, PAIRS["ideal"], seed=basis)
    assert res.accepted
    assert np.max(np.abs(res.stats.counts - n / 2)) <= ct.count_tolerance(n)
    for k, t in res.stats.tau.items():
        assert abs(t - res.stats.expected[k]) <= ct.tau_tolerance(n)


def test_session_residuals_are_ideal_for_honest_pair():
    res = ct.tomography_session("XY", 3, 1000, PAIRS["ideal"], seed=2, residual=5)
    assert len(res.residuals) == 5 and res.stats.n == 1000
    for r in res.residuals:
        assert abs(np.vdot(r.ideal, r.state)) ** 2 == pytest.approx(1)
    assert ct.closeness_certificate(res.residuals)[0] == pytest.approx(0, abs=1e-7)


def test_constant_announcer_rejected():
    res = ct.tomography_session("XY", 0, 10_000, PAIRS["constant-announcer"], seed=0)
    assert not res.accepted


def test_reflected_session_stats_identical_and_states_reflected():
    for plane, basis in (("XY", 1), ("XZ", 0)):
        a = ct.tomography_session(plane, basis, 2000, PAIRS["ideal"], seed=4, residual=3)
        b = ct.tomography_session(plane, basis, 2000, PAIRS["reflected"], seed=4, residual=3)
        assert np.array_equal(a.stats.counts, b.stats.counts)
        assert a.stats.tau == b.stats.tau
        for ra, rb in zip(a.residuals, b.residuals):
            ba = qsim.bloch_vector(np.outer(ra.state, ra.state.conj()))
            bb = qsim.bloch_vector(np.outer(rb.state, rb.state.conj()))
            assert np.allclose(bb, ct.reflect_vector(ba), atol=1e-9)


def test_session_errors():
    with pytest.raises(ValueError):
        ct.tomography_session("XY", 0, 10, PAIRS["ideal"], 0, qp=2)
    with pytest.raises(ValueError):
        ct.tomography_session("XY", 0, 10, PAIRS["ideal"], 0, residual=5, budget=12)
    with pytest.raises(ValueError):
        ct.target_bloch("YZ", 0)


def test_tomography_csv():
    res = ct.tomography_session("XZ", 0, 500, PAIRS["ideal"], seed=1)
    lines = res.stats.to_csv().splitlines()
    assert lines[0] == "o,pauli,count,tau,expected" and len(lines) == 5


# --- the modified protocol --------------------------------------------------

def test_modified_tomography_honest():
    out = ct.modified_tomography(ct.TomoParams(), PAIRS["ideal"], seed=0)
    assert out.accepted
    assert out.eps_prep == pytest.approx(0, abs=1e-7)
    assert out.eps_prep < 0.01
    assert len(out.residual_xz) == 3 and sorted(out.residual_xy) == [0, 1, 2, 3]


def test_modified_tomography_yz_deviant_rejected():
    out = ct.modified_tomography(ct.TomoParams(), PAIRS["yz-deviant"], seed=0)
    assert not out.accepted
    # prover 2 only meets the diagonal YZ questions in YZ-1
    assert not out.group_accept["YZ-1"] and out.group_accept["YZ-2"]
    assert out.group_accept["XY-1"] and out.group_accept["XZ-1"]


def test_modified_tomography_reflected_passes_with_flipped_xz():
    out = ct.modified_tomography(ct.TomoParams(), PAIRS["reflected"], seed=0)
    assert out.accepted
    eps_xy, eps_xz = out.eps_prep_sessions
    assert eps_xy == pytest.approx(0, abs=1e-7)
    assert eps_xz == pytest.approx(1)


@pytest.mark.parametrize("beta", [0.05, 0.1, 0.2])
def test_eps_prep_composes_by_triangle_inequality(beta):
    sessions = [ct.tomography_session("XY", b, 500, (ct.Ideal(), ct.Tilted(beta)), seed=b, residual=2)
                for b in range(4)]
    xz = ct.tomography_session("XZ", 0, 500, (ct.Ideal(), ct.Tilted(beta)), seed=9, residual=2)
    xy_blocks = [r for s in sessions for r in s.residuals]
    both = ct.closeness_certificate(xy_blocks + xz.residuals)[0]
    parts = ct.closeness_certificate(xy_blocks)[0] + ct.closeness_certificate(xz.residuals)[0]
    assert both <= parts + 1e-12


def test_tilted_residual_distance():
    beta = 0.3
    res = ct.tomography_session("XY", 0, 100, (ct.Ideal(), ct.Tilted(beta)), seed=0, residual=1)
    eps, _ = ct.closeness_certificate(res.residuals)
    assert eps == pytest.approx(math.sin(beta / 2), abs=1e-9)


def test_closeness_reference_limits():
    e3, c3 = ct.closeness_reference(10**3)
    e5, c5 = ct.closeness_reference(10**5)
    assert e5 < e3 and c5 > c3


# --- calculators ------------------------------------------------------------


def test_round_complexity():
    assert ct.ruv_round_complexity(2) == pytest.approx(2466.0, abs=0.1)
    assert ct.composite_round_complexity(2) == pytest.approx(616.5, abs=0.1)
    for n in (2, 10, 10**6):
        assert ct.composite_round_complexity(n) < ct.ruv_round_complexity(n)
    with pytest.raises(ValueError):
        ct.ruv_round_complexity(1)


def test_ruv_params():
    p = ct.RuvParams(n=2)
    assert p.log10_ns >= 64 * math.log10(2)
    assert p.log10_ng == pytest.approx(math.log10(11) + p.log10_ns)
    assert p.log10_N == pytest.approx(127 * p.log10_ng)
    assert p.log10_delta == pytest.approx(-math.log10(6) - 16 * math.log10(2))
    with pytest.raises(ValueError):
        ct.RuvParams(n=2, alpha=100)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import qsv.analysis as analysis
from oracles import bipartite_projectors, gap_dense, smallest_sample_count
from qsv.analysis import (
    adversarial_bound,
    evaluate_at_probabilities,
    reduction_rate,
    sample_complexity,
    spectral_gap,
    verification_operator,
)
from qsv.protocols import ProtocolError, Strategy, build_strategy, cyclic_orders, densify, hedge, sd_tests
from qsv.states import PureState, ghz, haar_random


def test_single_test_operator_is_its_projector():
    t = sd_tests(haar_random((2, 3), 1))[1]
    omega = verification_operator(Strategy((t,), [1.0]))
    assert np.allclose(omega, densify(t), atol=1e-13)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_bipartite_uniform_operator_is_average_of_formula_projectors(d):
    s = haar_random((d, d), 40 + d)
    p0, p1 = bipartite_projectors(s.amplitudes, d, d)
    omega = verification_operator(build_strategy("sd", s))
    assert np.abs(omega - (p0 + p1) / 2).max() <= 1e-10


@given(st.integers(0, 2**31))
def test_operator_trace_equals_rank_census(seed):
    strategy = build_strategy("sd", haar_random((2, 2, 2), seed))
    omega = verification_operator(strategy)
    ranks = [np.linalg.matrix_rank(densify(t), tol=1e-8) for t in strategy.tests]
    assert np.trace(omega).real == pytest.approx(np.dot(strategy.probabilities, ranks), abs=1e-8)
    assert np.abs(omega - omega.conj().T).max() <= 1e-12
    vals = np.linalg.eigvalsh(omega)
    assert vals.min() >= -1e-9 and vals.max() <= 1 + 1e-9


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_bipartite_gap_is_one_half(d):
    for seed in range(5):
        assert spectral_gap(build_strategy("sd", haar_random((d, d), seed))).nu == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("d,n", [(2, 2), (2, 3), (2, 5), (3, 3), (3, 4), (4, 3)])
def test_ghz_uniform_gap(d, n):
    assert spectral_gap(build_strategy("sd", ghz(d, n))).nu == pytest.approx(2 ** (1 - n), abs=1e-9)


def test_target_projector_has_gap_one():
    v = np.zeros(4)
    v[0] = 1
    s = PureState((2, 2), v)
    tests = sd_tests(s)
    rep = evaluate_at_probabilities(tests, s, [1.0, 0.0])
    assert rep.nu == pytest.approx(1, abs=1e-12)
    assert rep.nu + rep.beta == 1


@given(st.integers(0, 2**31), st.sampled_from(["sd", "csd", "hps", "smub", "3mub"]))
def test_gap_matches_full_spectrum_oracle(seed, name):
    s = haar_random((2, 2, 2), seed)
    strategy = build_strategy(name, s)
    rep = spectral_gap(strategy)
    omega = sum(p * densify(t) for p, t in zip(strategy.probabilities, strategy.tests))
    assert rep.nu == pytest.approx(gap_dense(omega, s.amplitudes), abs=1e-10)
    assert abs(rep.nu + rep.beta - 1) <= 1e-12
    assert abs(np.vdot(s.amplitudes, rep.witness)) <= 1e-10
    assert rep.target_residual <= 1e-9


def test_matrix_free_eigensolver_agrees_with_dense(monkeypatch):
    s = haar_random((3, 3, 3), 8)
    strategy = build_strategy("csd", s)
    dense = spectral_gap(strategy)
    monkeypatch.setattr(analysis, "DENSE_EIG_DIM", 4)
    sparse = spectral_gap(strategy)
    assert sparse.nu == pytest.approx(dense.nu, abs=1e-10)
    omega = verification_operator(strategy)
    w = sparse.witness
    assert np.vdot(w, omega @ w).real == pytest.approx(sparse.beta, abs=1e-9)


def test_gap_rejects_target_not_fixed():
    strategy = build_strategy("sd", haar_random((2, 2), 0))
    with pytest.raises(ProtocolError, match="not fixed"):
        spectral_gap(strategy, haar_random((2, 2), 1))


def test_pass_probability_saturation_at_witness_mixture():
    rng = np.random.default_rng(2)
    names = ["sd", "csd", "mub", "smub", "3smub", "hps", "4c-tet", "cmub"]
    for k in range(20):
        s = haar_random((2, 2, 2), 100 + k)
        base = build_strategy(names[k % len(names)], s)
        p = rng.dirichlet(np.ones(len(base.tests)))
        strategy = Strategy(base.tests, p, s)
        rep = spectral_gap(strategy)
        eps = 0.3
        rho = (1 - eps) * s.projector() + eps * np.outer(rep.witness, rep.witness.conj())
        omega = verification_operator(strategy)
        assert np.trace(omega @ rho).real == pytest.approx(1 - rep.nu * eps, abs=1e-9)


@given(st.integers(0, 2**31), st.floats(0.01, 0.9))
def test_hedging_scales_gap(seed, p):
    strategy = build_strategy("sd", haar_random((2, 3, 2), seed))
    nu = spectral_gap(strategy).nu
    assert spectral_gap(hedge(strategy, p)).nu == pytest.approx((1 - p) * nu, abs=1e-10)


@given(st.integers(0, 2**31))
def test_csd_gap_at_least_worst_order(seed):
    s = haar_random((2, 2, 2), seed)
    csd = spectral_gap(build_strategy("csd", s)).nu
    worst = min(spectral_gap(Strategy.uniform(sd_tests(s, o), s)).nu for o in cyclic_orders(3))
    assert csd >= worst - 1e-9


@given(st.lists(st.integers(2, 3), min_size=2, max_size=4), st.integers(0, 2**31))
def test_sd_gap_lower_bound_property(dims, seed):
    s = haar_random(dims, seed)
    assert spectral_gap(build_strategy("sd", s)).nu >= 2 ** (1 - len(dims)) - 1e-9


def test_sample_complexity_examples():
    assert sample_complexity(0.5, 0.01, 0.01) == (919, 922)
    assert sample_complexity(1, 0.5, 0.5)[0] == 1


@given(st.floats(0.01, 1), st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_sample_complexity_exact_matches_counting(nu, eps, delta):
    exact, upper = sample_complexity(nu, eps, delta)
    assert exact == smallest_sample_count(nu, eps, delta)
    assert exact <= upper


@pytest.mark.parametrize("nu", [0.5, 0.25, 0.125, 0.3])
def test_halving_gap_doubles_upper_bound(nu):
    _, upper = sample_complexity(nu, 0.01, 0.05)
    _, halved = sample_complexity(nu / 2, 0.01, 0.05)
    assert halved in (2 * upper - 1, 2 * upper)


@pytest.mark.parametrize("args", [(0, 0.1, 0.1), (1.5, 0.1, 0.1), (0.5, 1, 0.1), (0.5, 0.1, 0)])
def test_domain_errors(args):
    with pytest.raises(ValueError):
        sample_complexity(*args)
    with pytest.raises(ValueError):
        adversarial_bound(*args)


def test_adversarial_bound_value():
    p, bound = adversarial_bound(0.5, 0.01, 0.01)
    assert p == pytest.approx(0.5 / math.e, abs=1e-15)
    # reference value from 40-digit evaluation of the same closed form
    assert bound == pytest.approx(1559.2755075599089, abs=1e-9)


@pytest.mark.parametrize("n", range(2, 9))
def test_adversarial_bound_below_simple_estimate(n):
    _, bound = adversarial_bound(2 ** (1 - n), 0.1, 0.1)
    assert bound <= 2**n / 0.1 * math.log(10)


def test_reduction_rate():
    assert reduction_rate(100, 73) == pytest.approx(0.27)
    assert reduction_rate(100, 100) == 0
    assert reduction_rate(100, 150) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        reduction_rate(0, 1)


def test_gap_report_json_fields():
    rep = spectral_gap(build_strategy("sd", ghz(2, 2)))
    out = rep.to_json()
    assert set(out) == {"nu", "beta", "witness", "target_residual"}
    assert len(out["witness"]["re"]) == 4

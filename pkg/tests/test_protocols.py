import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bipartite_projectors, fixed_basis_projector, three_qudit_projectors
from qsv.bases import pauli_eigenbases
from qsv.protocols import (
    PROTOCOLS,
    ProtocolError,
    ProtocolSpec,
    Strategy,
    always_pass_test,
    build_strategy,
    densify,
    hedge,
    hps_tests,
    mub_family_tests,
    sd_tests,
)
from qsv.states import DickeLabel, dicke, ghz, haar_random, w_state

small_dims = st.lists(st.integers(2, 3), min_size=2, max_size=3)


@given(small_dims, st.integers(0, 2**31))
def test_every_sd_test_fixes_target_and_is_projector(dims, seed):
    s = haar_random(dims, seed)
    tests = sd_tests(s)
    assert len(tests) == 2 ** (len(dims) - 1)
    for t in tests:
        p = densify(t)
        assert np.allclose(p @ s.amplitudes, s.amplitudes, atol=1e-10)
        assert np.allclose(p @ p, p, atol=1e-10)
        assert t.total_weight() == pytest.approx(1, abs=1e-10)


@given(small_dims, st.integers(0, 2**31), st.sampled_from(sorted(PROTOCOLS)))
def test_tree_application_matches_dense_projector(dims, seed, name):
    spec = ProtocolSpec.from_name(name)
    if spec.kind in ("mub", "bloch"):
        dims = [dims[0]] * len(dims)
    s = haar_random(dims, seed)
    try:
        strategy = build_strategy(spec, s)
    except ProtocolError:
        return
    x = haar_random(dims, seed + 1).amplitudes
    block = np.column_stack([x, s.amplitudes])
    for t in strategy.tests[:12]:
        p = densify(t)
        assert np.allclose(t.tree.apply(block), p @ block, atol=1e-12)
        assert t.tree.expectation(x) == pytest.approx(np.vdot(x, p @ x).real, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_bipartite_projectors_match_formula(d):
    s = haar_random((d, d), 17 + d)
    tests = {t.label.settings: densify(t) for t in sd_tests(s)}
    p0, p1 = bipartite_projectors(s.amplitudes, d, d)
    assert np.abs(tests[(0,)] - p0).max() <= 1e-10
    assert np.abs(tests[(1,)] - p1).max() <= 1e-10


@pytest.mark.parametrize("d", [2, 3])
def test_three_qudit_projectors_match_formulas(d):
    s = haar_random((d, d, d), 5)
    tests = {"".join(map(str, t.label.settings)): densify(t) for t in sd_tests(s)}
    oracle = three_qudit_projectors(s.amplitudes, d)
    for key in oracle:
        assert np.abs(tests[key] - oracle[key]).max() <= 1e-9, key


def test_sd_order_changes_last_party():
    s = haar_random((2, 3, 2), 1)
    tests = sd_tests(s, order=(2, 0, 1))
    assert all(t.last_party == 1 for t in tests)
    assert tests[0].measurement_order == (2, 0, 1)
    with pytest.raises(ProtocolError):
        sd_tests(s, order=(0, 0, 1))


@pytest.mark.parametrize("name,count", [
    ("mub", 4), ("cmub", 2), ("smub", 12), ("scmub", 6), ("3mub", 9), ("3cmub", 3),
    ("3smub", 27), ("3scmub", 9), ("cmub-complete", 9), ("ccmub-complete", 3),
    ("4c-tet", 4), ("4sc-tet", 12), ("6c-ico", 6), ("6sc-ico", 18), ("hps", 3), ("sd", 4), ("csd", 12),
])
def test_test_counts_for_qubit_triples(name, count):
    assert len(build_strategy(name, w_state(3)).tests) == count


def test_symmetrized_probabilities_are_uniform_per_last_party():
    strategy = build_strategy("3smub", ghz(2, 3))
    by_last = {}
    for p, t in zip(strategy.probabilities, strategy.tests):
        by_last.setdefault(t.last_party, []).append(p)
    assert sorted(by_last) == [0, 1, 2]
    for probs in by_last.values():
        assert sum(probs) == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("d,n", [(2, 3), (3, 3), (2, 4)])
def test_fixed_basis_tests_match_dense_oracle(d, n):
    s = haar_random((d,) * n, 9)
    fam = pauli_eigenbases(d, 3)
    for last in range(n):
        for t in mub_family_tests(s, fam, correlated=False, last_party=last)[:10]:
            measuring = [q for q in range(n) if q != last]
            bases = {q: fam.bases[m].columns for q, m in zip(measuring, t.label.settings)}
            ref = fixed_basis_projector(s.amplitudes, (d,) * n, bases, last)
            assert np.abs(densify(t) - ref).max() <= 1e-12


@pytest.mark.parametrize("d,n", [(2, 2), (2, 3), (3, 3), (2, 5), (4, 3), (5, 2)])
def test_mub_tests_equal_sd_tests_on_ghz(d, n):
    s = ghz(d, n)
    sd = {t.label: densify(t) for t in sd_tests(s)}
    mub = {t.label: densify(t) for t in build_strategy("mub", s).tests}
    assert sd.keys() == mub.keys()
    assert max(np.abs(sd[k] - mub[k]).max() for k in sd) <= 1e-12


@pytest.mark.parametrize("d,n", [(2, 3), (3, 3), (2, 4)])
def test_ghz_extreme_tests_overlap_and_ranks(d, n):
    tests = {t.label.settings: densify(t) for t in sd_tests(ghz(d, n))}
    p0, p1 = tests[(0,) * (n - 1)], tests[(1,) * (n - 1)]
    assert np.trace(p0 @ p1).real == pytest.approx(1, abs=1e-12)
    assert np.linalg.matrix_rank(p0, tol=1e-8) == d
    assert np.linalg.matrix_rank(p1, tol=1e-8) == d ** (n - 1)


def test_hps_measures_computationally():
    tests = hps_tests(dicke(DickeLabel((2, 1), 2)))
    assert [t.last_party for t in tests] == [0, 1, 2]
    for t in tests:
        for br in t.branches:
            assert all(m.basis.tag == "Z" for m in br.measurements)


def test_strategy_validation():
    tests = sd_tests(ghz(2, 2))
    with pytest.raises(ProtocolError):
        Strategy(tuple(tests), [0.5])
    with pytest.raises(ProtocolError):
        Strategy(tuple(tests), [0.7, 0.7])
    with pytest.raises(ProtocolError):
        Strategy(tuple(tests), [1.5, -0.5])
    Strategy(tuple(tests), [1.0, 0.0])


def test_hedge_adds_identity_with_weight():
    strategy = build_strategy("sd", ghz(2, 3))
    hedged = hedge(strategy, 0.25)
    assert hedged.tests[-1].always_pass
    assert hedged.probabilities[-1] == pytest.approx(0.25)
    assert np.allclose(densify(always_pass_test((2, 2))), np.eye(4))


def test_protocol_validation_errors():
    with pytest.raises(ProtocolError):
        build_strategy("4c-tet", ghz(3, 3))
    with pytest.raises(ProtocolError):
        build_strategy("cmub-complete", ghz(4, 2))
    with pytest.raises(ProtocolError):
        build_strategy("mub", haar_random((2, 3), 0))
    with pytest.raises(ProtocolError):
        ProtocolSpec.from_name("nope")
    assert ProtocolSpec.from_name("3scmub").name == "3scmub"


def test_mixed_dimensions_supported_by_sd_and_hps():
    s = haar_random((2, 3, 4), 2)
    for name in ("sd", "csd", "hps"):
        strategy = build_strategy(name, s)
        for t in strategy.tests:
            assert np.allclose(t.tree.apply(s.amplitudes), s.amplitudes, atol=1e-10)

"""Verification tests as adaptive branch structures.

A test is stored as the list of outcome branches on which it passes: the bases and
outcomes seen by the measuring parties, followed by the conditional state the
last party projects onto.  ``densify`` turns a test into its projector and
``TestBranches.tree`` gives a compiled form used to apply the projector to
vectors without building it.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .bases import BasisFamily, LocalBasis, computational_basis, design_bases, fourier_matrix, pauli_eigenbases
from .linalg import ZERO_CUTOFF, schmidt_matrix
from .states import PureState

PROBABILITY_TOL = 1e-12


class ProtocolError(ValueError):
    """Raised when a protocol cannot be built for a state or a test is malformed."""


@dataclass(frozen=True)
class TestLabel:
    """The last party and the basis choices of the other parties, in party order."""

    last_party: int
    settings: tuple[int, ...]

    def __str__(self):
        if self.last_party < 0:
            return "identity"
        sep = "" if all(s < 10 for s in self.settings) else "."
        return f"{self.last_party}:{sep.join(map(str, self.settings))}"


@dataclass(frozen=True, eq=False)
class Measurement:
    party: int
    basis: LocalBasis
    outcome: int

    @property
    def vector(self) -> np.ndarray:
        return self.basis.vector(self.outcome)


@dataclass(frozen=True, eq=False)
class Branch:
    measurements: tuple[Measurement, ...]
    final_state: PureState
    weight: float


@dataclass(frozen=True, eq=False)
class TestBranches:
    label: TestLabel
    dims: tuple[int, ...]
    branches: tuple[Branch, ...]
    last_party: int
    always_pass: bool = False

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def measurement_order(self) -> tuple[int, ...]:
        """Parties in the order they measure; the last party comes last."""
        if not self.branches:
            return ()
        return tuple(m.party for m in self.branches[0].measurements) + (self.last_party,)

    def total_weight(self) -> float:
        return 1.0 if self.always_pass else float(sum(b.weight for b in self.branches))

    def branch_vector(self, branch: Branch) -> np.ndarray:
        """Product vector of one branch with factors in original party order."""
        factors = {m.party: m.vector for m in branch.measurements}
        factors[self.last_party] = branch.final_state.amplitudes
        vec = np.ones(1, dtype=complex)
        for party in range(len(self.dims)):
            vec = np.kron(vec, factors[party])
        return vec

    @cached_property
    def tree(self) -> "TestTree":
        return TestTree(self)


def always_pass_test(dims) -> TestBranches:
    dims = tuple(dims)
    return TestBranches(TestLabel(-1, ()), dims, (), last_party=-1, always_pass=True)


class TestTree:
    """Prefix-indexed arrays of a test for vectorized application.

    Level ``k`` holds, for every outcome prefix of the first ``k`` measuring
    parties, the basis measured next.  Prefixes that no branch passes through
    keep an identity placeholder and a zero final vector, so they contribute
    nothing.
    """

    def __init__(self, test: TestBranches):
        self.identity = test.always_pass
        self.dims = test.dims
        if self.identity:
            return
        self.order = test.measurement_order
        self.level_dims = tuple(test.dims[q] for q in self.order)
        n = len(self.order)
        self.bases = []
        self.alive = []
        count = 1
        for k in range(n - 1):
            d = self.level_dims[k]
            self.bases.append(np.broadcast_to(np.eye(d, dtype=complex), (count, d, d)).copy())
            self.alive.append(np.zeros(count, dtype=bool))
            count *= d
        self.final = np.zeros((count, self.level_dims[-1]), dtype=complex)
        self.final_alive = np.zeros(count, dtype=bool)
        for br in test.branches:
            idx = 0
            for k, m in enumerate(br.measurements):
                self.bases[k][idx] = m.basis.columns
                self.alive[k][idx] = True
                idx = idx * self.level_dims[k] + m.outcome
            self.final[idx] = br.final_state.amplitudes
            self.final_alive[idx] = True
        self.bases_h = [np.conj(np.swapaxes(b, 1, 2)) for b in self.bases]
        self.final_conj = self.final.conj()
        self.inverse_order = tuple(np.argsort(self.order))

    def _to_frame(self, x: np.ndarray) -> np.ndarray:
        cols = x.shape[1]
        t = x.reshape(self.dims + (cols,))
        t = np.transpose(t, self.order + (len(self.dims),))
        return t.reshape(1, self.level_dims[0], -1)

    def leaf_amplitudes(self, x: np.ndarray) -> np.ndarray:
        """Overlaps of the columns of ``x`` with every branch vector, shape (leaves, cols)."""
        y = self._to_frame(x)
        for k, bh in enumerate(self.bases_h):
            y = np.matmul(bh, y)
            y = y.reshape(y.shape[0] * y.shape[1], self.level_dims[k + 1], -1)
        return np.einsum("pj,pjc->pc", self.final_conj, y)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply the test projector to a vector or to the columns of a matrix."""
        if self.identity:
            return np.array(x, dtype=complex)
        vec = x.ndim == 1
        x = x.reshape(x.shape[0], -1)
        cols = x.shape[1]
        coef = self.leaf_amplitudes(x)
        y = self.final[:, :, None] * coef[:, None, :]
        for k in range(len(self.bases) - 1, -1, -1):
            b = self.bases[k]
            y = y.reshape(b.shape[0], b.shape[1], -1)
            y = np.matmul(b, y)
        y = y.reshape(self.level_dims + (cols,))
        y = np.transpose(y, self.inverse_order + (len(self.dims),)).reshape(-1, cols)
        return y[:, 0] if vec else y

    def expectation(self, vec: np.ndarray) -> float:
        if self.identity:
            return float(np.vdot(vec, vec).real)
        coef = self.leaf_amplitudes(vec.reshape(-1, 1))
        return float(np.sum(np.abs(coef) ** 2))


def densify(test: TestBranches) -> np.ndarray:
    """Projector of a test: the sum of rank-1 projectors onto its branch vectors."""
    if test.always_pass:
        return np.eye(test.dim, dtype=complex)
    v = np.column_stack([test.branch_vector(b) for b in test.branches])
    return v @ v.conj().T


# --- Schmidt-decomposition protocol -------------------------------------------------


def sd_tests(state: PureState, order=None) -> list[TestBranches]:
    """The 2**(n-1) tests of the Schmidt-decomposition protocol for one party order.

    Party ``order[k]`` measures k-th, in the Schmidt basis of the current
    conditional state (setting 0) or in its Fourier partner (setting 1); the
    last party of ``order`` projects onto the conditional state that remains.
    """
    n = state.n_parties
    if n < 2:
        raise ProtocolError("the SD protocol needs n >= 2 parties")
    order = tuple(range(n)) if order is None else tuple(int(q) for q in order)
    if sorted(order) != list(range(n)):
        raise ProtocolError(f"{order} is not a permutation of the parties")
    framed = state.permuted(order).tensor()
    found = defaultdict(list)

    def recurse(t, k, settings, meas, weight):
        if k == n - 1:
            found[settings].append(Branch(tuple(meas), PureState((t.size,), t), weight))
            return
        dq = t.shape[0]
        mat = t.reshape(dq, -1)
        schmidt = LocalBasis(schmidt_matrix(mat, complete=True).left_basis, "schmidt")
        fourier = LocalBasis(schmidt.columns @ fourier_matrix(dq), "fourier")
        for setting, basis in enumerate((schmidt, fourier)):
            coeffs = basis.columns.conj().T @ mat
            probs = np.einsum("ij,ij->i", coeffs, coeffs.conj()).real
            for o in range(dq):
                w = weight * probs[o]
                if w <= ZERO_CUTOFF:
                    continue
                nxt = (coeffs[o] / math.sqrt(probs[o])).reshape(t.shape[1:])
                recurse(nxt, k + 1, settings + (setting,), meas + [Measurement(order[k], basis, o)], w)

    recurse(framed, 0, (), [], 1.0)
    last = order[-1]
    tests = []
    for settings in itertools.product((0, 1), repeat=n - 1):
        # label settings are listed in party order, like the MUB tests
        by_party = dict(zip(order[:-1], settings))
        label = TestLabel(last, tuple(by_party[q] for q in sorted(by_party)))
        tests.append(TestBranches(label, state.dims, tuple(found[settings]), last_party=last))
    return tests


def cyclic_orders(n: int) -> list[tuple[int, ...]]:
    return [tuple((k + j) % n for j in range(n)) for k in range(n)]


# --- fixed-basis (MUB family) protocols -----------------------------------------------


def product_basis_test(state: PureState, bases: dict, last_party: int, label: TestLabel) -> TestBranches:
    """Test where every party but ``last_party`` measures a fixed basis.

    ``bases`` maps each measuring party to its LocalBasis.  The last party
    projects onto the conditional state left by the observed outcomes.
    """
    n = state.n_parties
    measuring = [q for q in range(n) if q != last_party]
    if sorted(bases) != measuring:
        raise ProtocolError("a basis is needed for every party except the last")
    t = state.tensor()
    for q in measuring:
        if bases[q].dim != state.dims[q]:
            raise ProtocolError(f"basis dimension {bases[q].dim} does not match party {q}")
        t = np.moveaxis(np.tensordot(bases[q].columns.conj(), t, axes=([0], [q])), 0, q)
    t = np.moveaxis(t, last_party, -1)
    rows = t.reshape(-1, state.dims[last_party])
    probs = np.einsum("ij,ij->i", rows, rows.conj()).real
    outcome_shape = tuple(state.dims[q] for q in measuring)
    branches = []
    for flat in np.flatnonzero(probs > ZERO_CUTOFF):
        outcomes = np.unravel_index(flat, outcome_shape)
        meas = tuple(Measurement(q, bases[q], int(o)) for q, o in zip(measuring, outcomes))
        final = PureState((state.dims[last_party],), rows[flat] / math.sqrt(probs[flat]))
        branches.append(Branch(meas, final, float(probs[flat])))
    return TestBranches(label, state.dims, tuple(branches), last_party=last_party)


def mub_family_tests(state: PureState, family: BasisFamily, correlated: bool = False, last_party=None) -> list[TestBranches]:
    """Tests of a fixed-basis protocol with one chosen last party.

    Uncorrelated: one test per settings string over the other parties (b**(n-1)
    tests for b bases).  Correlated: only the b constant strings.
    """
    n = state.n_parties
    if n < 2:
        raise ProtocolError("need n >= 2 parties")
    last = n - 1 if last_party is None else int(last_party)
    if not 0 <= last < n:
        raise ProtocolError(f"last party {last} out of range")
    if any(d != family.dim for d in state.dims):
        raise ProtocolError(f"basis family of dimension {family.dim} does not fit dims {list(state.dims)}")
    measuring = [q for q in range(n) if q != last]
    b = len(family)
    if correlated:
        strings = [(m,) * (n - 1) for m in range(b)]
    else:
        strings = list(itertools.product(range(b), repeat=n - 1))
    tests = []
    for settings in strings:
        bases = {q: family.bases[m] for q, m in zip(measuring, settings)}
        tests.append(product_basis_test(state, bases, last, TestLabel(last, settings)))
    return tests


def hps_tests(state: PureState) -> list[TestBranches]:
    """Level-1 HPS variant: all but one party measure computationally."""
    n = state.n_parties
    tests = []
    for k in range(n):
        bases = {q: computational_basis(state.dims[q]) for q in range(n) if q != k}
        tests.append(product_basis_test(state, bases, k, TestLabel(k, (0,) * (n - 1))))
    return tests


# --- strategies -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Strategy:
    """Probability-weighted tests; defines the verification operator sum_m p_m E_m."""

    tests: tuple[TestBranches, ...]
    probabilities: np.ndarray
    target: PureState | None = None
    name: str = ""

    def __post_init__(self):
        tests = tuple(self.tests)
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if p.size != len(tests):
            raise ProtocolError(f"{p.size} probabilities for {len(tests)} tests")
        if not tests:
            raise ProtocolError("a strategy needs at least one test")
        if np.any(p < 0) or abs(p.sum() - 1) > PROBABILITY_TOL:
            raise ProtocolError(f"probabilities must lie on the simplex (sum {p.sum()!r})")
        if len({t.dims for t in tests}) != 1:
            raise ProtocolError("all tests must act on the same register")
        object.__setattr__(self, "tests", tests)
        object.__setattr__(self, "probabilities", p)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.tests[0].dims

    @property
    def dim(self) -> int:
        return self.tests[0].dim

    @classmethod
    def uniform(cls, tests, target=None, name="") -> "Strategy":
        tests = tuple(tests)
        return cls(tests, np.full(len(tests), 1 / len(tests)), target, name)

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape, dtype=complex)
        for p, t in zip(self.probabilities, self.tests):
            if p:
                out += p * t.tree.apply(x)
        return out


def hedge(strategy: Strategy, p: float) -> Strategy:
    """Mix an always-pass test into ``strategy`` with weight ``p``."""
    if not 0 <= p <= 1:
        raise ProtocolError("hedging weight must lie in [0, 1]")
    tests = strategy.tests + (always_pass_test(strategy.dims),)
    probs = np.append((1 - p) * strategy.probabilities, p)
    return Strategy(tests, probs / probs.sum(), strategy.target, f"hedged({strategy.name})")


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str  # "sd" | "csd" | "mub" | "bloch" | "hps"
    num_bases: int | str = 2
    correlated: bool = False
    symmetrized: bool = False
    design: str = ""
    order: tuple[int, ...] | None = None

    @classmethod
    def from_name(cls, name: str) -> "ProtocolSpec":
        try:
            return PROTOCOLS[name]
        except KeyError:
            raise ProtocolError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}") from None

    @property
    def name(self) -> str:
        for key, spec in PROTOCOLS.items():
            if spec == self:
                return key
        return self.kind

    def family(self, d: int) -> BasisFamily:
        if self.kind == "bloch":
            return design_bases(self.design)
        return pauli_eigenbases(d, self.num_bases)

    def validate(self, dims) -> None:
        dims = tuple(dims)
        if self.kind in ("mub", "bloch") and len(set(dims)) != 1:
            raise ProtocolError(f"{self.name} needs equal local dimensions, got {list(dims)}")
        if self.kind == "bloch" and dims[0] != 2:
            raise ProtocolError(f"{self.name} is defined for qubits only")
        if self.kind == "mub" and self.num_bases == "complete":
            d = dims[0]
            if d < 2 or any(d % k == 0 for k in range(2, math.isqrt(d) + 1)):
                raise ProtocolError(f"complete MUB needs a prime local dimension, got {d}")


PROTOCOLS = {
    "sd": ProtocolSpec("sd"),
    "csd": ProtocolSpec("csd"),
    "mub": ProtocolSpec("mub", 2),
    "cmub": ProtocolSpec("mub", 2, correlated=True),
    "smub": ProtocolSpec("mub", 2, symmetrized=True),
    "scmub": ProtocolSpec("mub", 2, correlated=True, symmetrized=True),
    "3mub": ProtocolSpec("mub", 3),
    "3cmub": ProtocolSpec("mub", 3, correlated=True),
    "3smub": ProtocolSpec("mub", 3, symmetrized=True),
    "3scmub": ProtocolSpec("mub", 3, correlated=True, symmetrized=True),
    "cmub-complete": ProtocolSpec("mub", "complete"),
    "ccmub-complete": ProtocolSpec("mub", "complete", correlated=True),
    "4c-tet": ProtocolSpec("bloch", 4, correlated=True, design="tetrahedron"),
    "4sc-tet": ProtocolSpec("bloch", 4, correlated=True, symmetrized=True, design="tetrahedron"),
    "6c-ico": ProtocolSpec("bloch", 6, correlated=True, design="icosahedron"),
    "6sc-ico": ProtocolSpec("bloch", 6, correlated=True, symmetrized=True, design="icosahedron"),
    "hps": ProtocolSpec("hps"),
}


def _blocks_to_strategy(blocks, target, name) -> Strategy:
    """Each block is a list of tests sharing equal weight within the block."""
    tests, probs = [], []
    for block in blocks:
        tests.extend(block)
        probs.extend([1 / (len(blocks) * len(block))] * len(block))
    probs = np.asarray(probs)
    return Strategy(tuple(tests), probs / probs.sum(), target, name)


def build_strategy(spec, state: PureState) -> Strategy:
    """Uniform-probability strategy of a protocol for ``state``."""
    if isinstance(spec, str):
        spec = ProtocolSpec.from_name(spec)
    spec.validate(state.dims)
    n = state.n_parties
    if spec.kind == "sd":
        return Strategy.uniform(sd_tests(state, spec.order), state, spec.name)
    if spec.kind == "csd":
        return _blocks_to_strategy([sd_tests(state, o) for o in cyclic_orders(n)], state, spec.name)
    if spec.kind == "hps":
        return Strategy.uniform(hps_tests(state), state, spec.name)
    if spec.kind in ("mub", "bloch"):
        family = spec.family(state.dims[0])
        lasts = range(n) if spec.symmetrized else [n - 1]
        blocks = [mub_family_tests(state, family, spec.correlated, k) for k in lasts]
        return _blocks_to_strategy(blocks, state, spec.name)
    raise ProtocolError(f"unknown protocol kind {spec.kind!r}")

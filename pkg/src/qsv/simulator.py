"""Monte-Carlo verification runs with adaptive measurement trajectories."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .protocols import ProtocolError, Strategy, TestBranches, densify
from .states import PureState, rng_for

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PreparedSource:
    """States handed to the verifier.

    With ``sequence`` unset every run draws ``phi_i`` with probability ``w_i``
    from ``components``; otherwise run ``r`` receives ``sequence[r]``.
    """

    components: tuple[tuple[float, PureState], ...] = ()
    sequence: tuple[PureState, ...] | None = None

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        object.__setattr__(self, "components", comps)
        if self.sequence is not None:
            object.__setattr__(self, "sequence", tuple(self.sequence))
            if not self.sequence:
                raise ValueError("an explicit sequence needs at least one state")
            return
        if not comps:
            raise ValueError("a source needs components or a sequence")
        w = np.array([c[0] for c in comps])
        if np.any(w < 0) or abs(w.sum() - 1) > WEIGHT_TOL:
            raise ValueError(f"source weights must be nonnegative and sum to 1 (sum {w.sum()!r})")
        if len({s.dims for _, s in comps}) != 1:
            raise ValueError("all source components must share dims")

    @classmethod
    def pure(cls, state: PureState) -> "PreparedSource":
        return cls(((1.0, state),))

    @classmethod
    def explicit(cls, states) -> "PreparedSource":
        return cls((), tuple(states))

    @property
    def dims(self):
        return self.sequence[0].dims if self.sequence is not None else self.components[0][1].dims

    def mixture(self):
        """(weight, state) pairs of the average state over all runs."""
        if self.sequence is None:
            return self.components
        n = len(self.sequence)
        return tuple((1 / n, s) for s in self.sequence)


def witness_source(target: PureState, witness: np.ndarray, eps: float) -> PreparedSource:
    """Mixture (1-eps)|target><target| + eps|witness><witness|, the worst case at infidelity eps."""
    w = PureState.from_vector(target.dims, witness)
    return PreparedSource(((1 - eps, target), (eps, w)))


@dataclass(frozen=True)
class RunRecord:
    run: int
    test_label: str
    outcomes: tuple[tuple[int, int], ...]
    passed: bool
    epsilon_r: float


def pass_probability(strategy: Strategy, source: PreparedSource) -> float:
    """Average pass probability sum_m p_m sum_i w_i <phi_i|E_m|phi_i>."""
    if source.dims != strategy.dims:
        raise ProtocolError(f"source dims {list(source.dims)} do not match strategy dims {list(strategy.dims)}")
    total = 0.0
    for w, phi in source.mixture():
        if not w:
            continue
        for p, test in zip(strategy.probabilities, strategy.tests):
            if p:
                total += w * p * test.tree.expectation(phi.amplitudes)
    return float(total)


def branch_pass_probability(test: TestBranches, probe: PureState) -> float:
    """Pass probability summed branch by branch with sequential partial projections."""
    if probe.dims != test.dims:
        raise ProtocolError("probe dims do not match the test")
    if test.always_pass:
        return 1.0
    total = 0.0
    for br in test.branches:
        t = probe.tensor()
        # contract measured parties from the highest index down so axis numbers stay valid
        for m in sorted(br.measurements, key=lambda m: -m.party):
            t = np.tensordot(m.vector.conj(), t, axes=([0], [m.party]))
        amp = np.vdot(br.final_state.amplitudes, t.reshape(-1))
        total += abs(amp) ** 2
    return float(total)


def trajectory_vs_dense_check(test: TestBranches, probe: PureState) -> float:
    dense = densify(test)
    v = probe.amplitudes
    return abs(branch_pass_probability(test, probe) - float(np.vdot(v, dense @ v).real))


def _draw(cum: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum, u * cum[-1], side="right")), cum.size - 1)


def simulate_test(test: TestBranches, phi: PureState, rng: np.random.Generator):
    """One adaptive trajectory: returns (passed, ((party, outcome), ...))."""
    if test.always_pass:
        return True, ()
    tree = test.tree
    cur = np.transpose(phi.tensor(), tree.order).reshape(-1)
    prefix = 0
    outcomes = []
    for k, d in enumerate(tree.level_dims[:-1]):
        amps = tree.bases_h[k][prefix] @ cur.reshape(d, -1)
        probs = np.einsum("ij,ij->i", amps, amps.conj()).real
        o = _draw(np.cumsum(probs), rng.random())
        outcomes.append((tree.order[k], o))
        cur = amps[o] / math.sqrt(probs[o])
        prefix = prefix * d + o
        alive = tree.alive[k + 1][prefix] if k + 1 < len(tree.alive) else tree.final_alive[prefix]
        if not alive:
            # outcome paths with no target weight lie outside the test's support
            return False, tuple(outcomes)
    q = abs(np.vdot(tree.final[prefix], cur)) ** 2
    return bool(rng.random() < q), tuple(outcomes)


def run_verification(strategy: Strategy, source: PreparedSource, runs: int, seed: int, *, stream=(), target=None):
    """Simulate ``runs`` verification rounds; run ``r`` uses the stream ``(seed, *stream, r)``.

    Returns ``(accepted, records)`` where ``accepted`` means every run passed.
    """
    if runs < 1:
        raise ValueError("need at least one run")
    if source.dims != strategy.dims:
        raise ProtocolError("source dims do not match the strategy")
    if source.sequence is not None and len(source.sequence) < runs:
        raise ValueError(f"sequence has {len(source.sequence)} states for {runs} runs")
    target = strategy.target if target is None else target
    test_cum = np.cumsum(strategy.probabilities)
    comp_cum = np.cumsum([w for w, _ in source.components]) if source.sequence is None else None
    infid = {}

    def infidelity(phi):
        key = id(phi)
        if key not in infid:
            infid[key] = math.nan if target is None else 1 - target.fidelity(phi)
        return infid[key]

    records = []
    for r in range(runs):
        rng = rng_for(seed, *stream, r)
        if source.sequence is not None:
            phi = source.sequence[r]
        else:
            phi = source.components[_draw(comp_cum, rng.random())][1]
        test = strategy.tests[_draw(test_cum, rng.random())]
        passed, outcomes = simulate_test(test, phi, rng)
        records.append(RunRecord(r, str(test.label), outcomes, passed, infidelity(phi)))
    return all(rec.passed for rec in records), records


def write_records_csv(records, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["run", "test_label", "passed", "epsilon_r"])
    for rec in records:
        writer.writerow([rec.run, rec.test_label, int(rec.passed), repr(rec.epsilon_r)])

"""Target states: GHZ, Dicke, W and Haar-random pure states, plus JSON persistence.

Amplitudes are stored flat with party 0 as the most significant index, which is
numpy's C order for ``amplitudes.reshape(dims)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NORM_TOL = 1e-10
LOAD_NORM_TOL = 1e-8


class StateError(ValueError):
    """Raised for malformed or invalid pure states."""


@dataclass(frozen=True, eq=False)
class PureState:
    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise StateError(f"invalid party dimensions {dims}")
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != math.prod(dims):
            raise StateError(
                f"{amps.size} amplitudes do not match dims {list(dims)} (expected {math.prod(dims)})"
            )
        if not np.all(np.isfinite(amps)):
            raise StateError("amplitudes must be finite")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state not normalized: |psi| = {norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, dims, vector) -> "PureState":
        """Build a state from an arbitrary nonzero vector, normalizing it."""
        v = np.asarray(vector, dtype=complex).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise StateError("cannot normalize the zero vector")
        return cls(tuple(dims), v / norm)

    @property
    def n_parties(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def permuted(self, order) -> "PureState":
        """Reorder the parties so that new party ``i`` is old party ``order[i]``."""
        order = tuple(order)
        if sorted(order) != list(range(self.n_parties)):
            raise StateError(f"{order} is not a permutation of the parties")
        t = np.transpose(self.tensor(), order)
        return PureState(tuple(self.dims[k] for k in order), t.reshape(-1))

    def overlap(self, other: "PureState") -> complex:
        if self.dims != other.dims:
            raise StateError("dimension mismatch")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "PureState") -> float:
        return abs(self.overlap(other)) ** 2

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True)
class DickeLabel:
    """Symbol-count partition ``(n_0, ..., n_l)`` and local dimension of a Dicke state."""

    partition: tuple[int, ...]
    local_dim: int

    def __post_init__(self):
        part = tuple(int(x) for x in self.partition)
        object.__setattr__(self, "partition", part)
        n = sum(part)
        ell = len(part) - 1
        if any(x < 1 for x in part) or any(a < b for a, b in zip(part, part[1:])):
            raise StateError(f"partition {part} must be nonincreasing positive integers")
        if ell < 1 or ell > min(self.local_dim, n) - 1:
            raise StateError(
                f"partition {part} needs 1 <= l <= min(d, n) - 1 with d={self.local_dim}, n={n}"
            )

    @property
    def n_parties(self) -> int:
        return sum(self.partition)


def ghz(d: int, n: int) -> PureState:
    if d < 2 or n < 2:
        raise StateError("GHZ needs d >= 2 and n >= 2")
    amps = np.zeros(d**n, dtype=complex)
    stride = sum(d**k for k in range(n))
    amps[np.arange(d) * stride] = math.sqrt(1 / d)
    return PureState((d,) * n, amps)


def _multiset_strings(counts):
    """Yield all distinct strings with ``counts[i]`` copies of symbol ``i``."""
    n = sum(counts)
    if n == 0:
        yield ()
        return
    for sym, c in enumerate(counts):
        if c:
            rest = list(counts)
            rest[sym] -= 1
            for tail in _multiset_strings(rest):
                yield (sym, *tail)


def dicke(label: DickeLabel) -> PureState:
    d, n = label.local_dim, label.n_parties
    strings = list(_multiset_strings(label.partition))
    expected = math.factorial(n) // math.prod(math.factorial(x) for x in label.partition)
    assert len(strings) == expected
    amps = np.zeros(d**n, dtype=complex)
    idx = np.ravel_multi_index(np.array(strings).T, (d,) * n)
    amps[idx] = math.sqrt(1 / len(strings))
    return PureState((d,) * n, amps)


def _partitions(n, max_part):
    if n == 0:
        yield ()
        return
    for first in range(min(n, max_part), 0, -1):
        for rest in _partitions(n - first, first):
            yield (first, *rest)


def enumerate_dicke_labels(d: int, n: int) -> list[DickeLabel]:
    """All valid Dicke labels for ``n`` parties of dimension ``d``, in descending lexicographic order."""
    if d < 2 or n < 2:
        raise StateError("need d >= 2 and n >= 2")
    max_len = min(d, n)
    return [
        DickeLabel(p, d) for p in _partitions(n, n) if 2 <= len(p) <= max_len
    ]


def w_state(n: int) -> PureState:
    if n < 2:
        raise StateError("W state needs n >= 2")
    amps = np.zeros(2**n, dtype=complex)
    amps[[1 << k for k in range(n)]] = math.sqrt(1 / n)
    return PureState((2,) * n, amps)


def rng_for(seed, *stream) -> np.random.Generator:
    """PCG64 generator keyed by ``(seed, *stream)``; identical across machines."""
    key = [int(seed), *(int(s) for s in stream)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def haar_random(dims, seed, *, stream=()) -> PureState:
    """Haar-random pure state from normalized complex Gaussians.

    The generator is PCG64 seeded through ``SeedSequence([seed, *stream])``;
    each amplitude is ``(g1 + 1j*g2)/sqrt(2)`` with ``g1, g2`` drawn in that order.
    """
    dims = tuple(int(x) for x in dims)
    total = math.prod(dims)
    if total < 2:
        raise StateError("Haar state needs total dimension >= 2")
    g = rng_for(seed, *stream).standard_normal((total, 2))
    v = (g[:, 0] + 1j * g[:, 1]) / math.sqrt(2)
    return PureState.from_vector(dims, v)


def state_to_json(state: PureState) -> dict:
    return {
        "dims": list(state.dims),
        "re": [float(x) for x in state.amplitudes.real],
        "im": [float(x) for x in state.amplitudes.imag],
    }


def state_from_json(obj) -> PureState:
    try:
        dims = [int(x) for x in obj["dims"]]
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise StateError(f"malformed state file: {exc}") from exc
    if re.ndim != 1 or re.shape != im.shape:
        raise StateError("malformed state file: 're' and 'im' must be equal-length lists")
    if re.size != math.prod(dims):
        raise StateError(f"dimension mismatch: {re.size} amplitudes for dims {dims}")
    amps = re + 1j * im
    if not np.all(np.isfinite(amps)):
        raise StateError("malformed state file: non-finite amplitude")
    norm = np.linalg.norm(amps)
    if abs(norm - 1) > LOAD_NORM_TOL:
        raise StateError(f"norm violation: |psi| = {norm!r}")
    if abs(norm - 1) > NORM_TOL:
        amps = amps / norm
    return PureState(tuple(dims), amps)


def save_state(state: PureState, path) -> None:
    Path(path).write_text(json.dumps(state_to_json(state), allow_nan=False))


def load_state(path) -> PureState:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise StateError(f"malformed state file: {exc}") from exc
    return state_from_json(obj)

"""Local measurement bases: generalized Pauli eigenbases, MUB sets and qubit Bloch designs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNITARY_TOL = 1e-12
UNBIASED_TOL = 1e-10


class BasisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LocalBasis:
    """Orthonormal basis of one party; column ``i`` is the ``i``-th basis state."""

    columns: np.ndarray
    tag: str = ""

    def __post_init__(self):
        u = np.array(self.columns, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise BasisError(f"basis matrix must be square, got shape {u.shape}")
        err = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
        if err > UNITARY_TOL:
            raise BasisError(f"basis '{self.tag}' is not orthonormal (error {err:.2e})")
        u.setflags(write=False)
        object.__setattr__(self, "columns", u)

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    def vector(self, i: int) -> np.ndarray:
        return self.columns[:, i]


@dataclass(frozen=True)
class BasisFamily:
    dim: int
    bases: tuple[LocalBasis, ...]
    pairwise_unbiased: bool = False
    name: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "bases", tuple(self.bases))
        if any(b.dim != self.dim for b in self.bases):
            raise BasisError("all bases in a family must share the family dimension")

    def __len__(self):
        return len(self.bases)

    def max_bias(self) -> float:
        """Largest deviation of any cross overlap magnitude from 1/sqrt(d)."""
        worst = 0.0
        target = 1 / math.sqrt(self.dim)
        for a in range(len(self.bases)):
            for b in range(a + 1, len(self.bases)):
                ov = np.abs(self.bases[a].columns.conj().T @ self.bases[b].columns)
                worst = max(worst, float(np.abs(ov - target).max()))
        return worst


def _fix_phase(vec: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate ``vec`` so that its first nonzero component is real positive."""
    nz = np.flatnonzero(np.abs(vec) > tol)
    c = vec[nz[0]]
    return vec * (abs(c) / c)


def shift_operator(d: int) -> np.ndarray:
    return np.roll(np.eye(d, dtype=complex), 1, axis=0)


def clock_operator(d: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def fourier_matrix(d: int) -> np.ndarray:
    """Matrix with entries ``omega**(i*j)/sqrt(d)``; its columns form the X eigenbasis."""
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / math.sqrt(d)


def unitary_eigenbasis(u: np.ndarray, tag: str = "") -> LocalBasis:
    """Eigenbasis of a unitary with nondegenerate spectrum.

    Columns are ordered by eigenvalue argument in [0, 2*pi), and each column's
    first nonzero component is made real positive.
    """
    vals, vecs = np.linalg.eig(u)
    args = np.mod(np.angle(vals), 2 * np.pi)
    # angles within rounding of 2*pi belong at 0
    args[np.isclose(args, 2 * np.pi, atol=1e-12)] = 0.0
    order = np.argsort(args, kind="stable")
    cols = [_fix_phase(vecs[:, k] / np.linalg.norm(vecs[:, k])) for k in order]
    m = np.column_stack(cols)
    # eigenvectors of a normal matrix with distinct eigenvalues are orthogonal;
    # a QR pass removes the ~1e-15 drift LAPACK leaves behind
    q, r = np.linalg.qr(m)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return LocalBasis(np.column_stack([_fix_phase(q[:, k]) for k in range(q.shape[1])]), tag)


def computational_basis(d: int) -> LocalBasis:
    return LocalBasis(np.eye(d, dtype=complex), "Z")


def _is_prime(d: int) -> bool:
    return d >= 2 and all(d % p for p in range(2, math.isqrt(d) + 1))


def pauli_eigenbases(d: int, count="complete") -> BasisFamily:
    """Eigenbases of generalized Pauli operators.

    ``count=2`` gives Z and X, ``count=3`` adds XZ (the Y eigenbasis for qubits), and
    ``count="complete"`` gives Z, X, XZ, ..., XZ^(d-1) for prime ``d``.  Index 0 is
    always the computational basis.
    """
    if d < 2:
        raise BasisError("dimension must be >= 2")
    x, z = shift_operator(d), clock_operator(d)
    bases = [computational_basis(d), LocalBasis(fourier_matrix(d), "X")]
    if count == 2:
        pass
    elif count == 3:
        bases.append(unitary_eigenbasis(x @ z, "XZ"))
    elif count == "complete":
        if not _is_prime(d):
            raise BasisError(f"complete MUB from Pauli eigenbases needs prime d, got {d}")
        zk = np.eye(d, dtype=complex)
        for k in range(1, d):
            zk = zk @ z
            bases.append(unitary_eigenbasis(x @ zk, f"XZ^{k}"))
    else:
        raise BasisError(f"count must be 2, 3 or 'complete', got {count!r}")
    # Z, X and XZ are pairwise unbiased for every d; the full set needs prime d
    return BasisFamily(d, tuple(bases), pairwise_unbiased=True, name=f"pauli-{count}")


def bloch_basis(u, tag: str = "") -> LocalBasis:
    """Qubit basis aligned with the Bloch vector ``u``: +1 eigenvector of u.sigma first."""
    u = np.asarray(u, dtype=float)
    if u.shape != (3,) or abs(np.linalg.norm(u) - 1) > 1e-10:
        raise BasisError(f"Bloch vector must be a unit 3-vector, got {u}")
    ux, uy, uz = u / np.linalg.norm(u)
    c = math.sqrt((1 + uz) / 2)
    s = math.sqrt((1 - uz) / 2)
    r = math.hypot(ux, uy)
    phase = complex(ux, uy) / r if r > 1e-15 else 1.0
    plus = np.array([c, phase * s])
    minus = np.array([s, -phase * c])
    cols = [_fix_phase(plus), _fix_phase(minus)]
    return LocalBasis(np.column_stack(cols), tag or f"bloch{tuple(np.round(u, 4))}")


def tetrahedron_vectors() -> np.ndarray:
    return np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / math.sqrt(3)


def icosahedron_vectors() -> np.ndarray:
    g = (1 + math.sqrt(5)) / 2
    v = np.array([[1, g, 0], [-1, g, 0], [0, 1, g], [0, -1, g], [g, 0, 1], [g, 0, -1]])
    return v / math.sqrt(1 + g * g)


def design_bases(kind: str) -> BasisFamily:
    if kind in ("tetrahedron", "tet"):
        vecs, name = tetrahedron_vectors(), "tetrahedron"
    elif kind in ("icosahedron", "ico"):
        vecs, name = icosahedron_vectors(), "icosahedron"
    else:
        raise BasisError(f"unknown design {kind!r}")
    bases = tuple(bloch_basis(v, f"{name}{i + 1}") for i, v in enumerate(vecs))
    return BasisFamily(2, bases, pairwise_unbiased=False, name=name)

"""Dense linear-algebra primitives on qudit registers.

Covers Kronecker products, Schmidt decomposition across a party cut, Hermitian
eigensolving and conditional (post-measurement) states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg

from .bases import LocalBasis
from .states import NORM_TOL, PureState, StateError

ZERO_CUTOFF = 1e-12
HERMITIAN_TOL = 1e-12
MAX_DENSE_DIM = 2**13
_DEGENERACY_TOL = 1e-10


def kron(*mats) -> np.ndarray:
    return reduce(np.kron, mats)


@dataclass(frozen=True, eq=False)
class SchmidtForm:
    """Schmidt decomposition ``sum_i s_i |left_i>|right_i>`` across a party cut.

    ``left_basis`` is the full orthonormal basis of the left factor whose first
    ``len(coefficients)`` columns are ``left_vectors``; it is only filled in when
    requested because the completion can be large.
    """

    coefficients: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    zero_cutoff: float = ZERO_CUTOFF
    left_basis: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.coefficients.size

    def reconstruct(self) -> np.ndarray:
        return np.einsum("i,ai,bi->ab", self.coefficients, self.left_vectors, self.right_vectors).reshape(-1)


def _phase_fix_columns(u: np.ndarray, vh: np.ndarray | None, count: int):
    """Make the largest-magnitude entry of each left column real positive.

    The conjugate phase is carried into the matching right vector so that the
    decomposition is unchanged.
    """
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(u.shape[1])]
    ph = ph / np.abs(ph)
    u = u / ph
    if vh is not None:
        vh = vh.copy()
        vh[:count] = vh[:count] * ph[:count, None]
    return u, vh


def _order_degenerate(s: np.ndarray, u: np.ndarray, vh: np.ndarray):
    """Within runs of equal singular values, order columns by their peak position.

    LAPACK returns an arbitrary permutation inside a degenerate block; sorting by
    the index of the largest component makes the output stable without rotating
    the returned vectors.
    """
    k = s.size
    perm = np.arange(k)
    start = 0
    while start < k:
        stop = start + 1
        while stop < k and abs(s[stop] - s[start]) <= _DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            peaks = np.argmax(np.abs(u[:, start:stop]), axis=0)
            perm[start:stop] = start + np.argsort(peaks, kind="stable")
        start = stop
    full = np.concatenate([perm, np.arange(k, u.shape[1])])
    return u[:, full], vh[perm]


def schmidt_matrix(mat: np.ndarray, *, complete: bool = False, cutoff: float = ZERO_CUTOFF) -> SchmidtForm:
    """Schmidt form of an amplitude matrix (rows: left factor, columns: right factor)."""
    # a square U already spans the left factor; only tall matrices need completing
    full = complete and mat.shape[0] > mat.shape[1]
    u, s, vh = np.linalg.svd(mat, full_matrices=full)
    u, vh = _order_degenerate(s, u, vh)
    u, vh = _phase_fix_columns(u, vh, s.size)
    keep = int(np.count_nonzero(s > cutoff))
    return SchmidtForm(
        coefficients=s[:keep].copy(),
        left_vectors=u[:, :keep].copy(),
        right_vectors=vh[:keep].T.copy(),
        zero_cutoff=cutoff,
        left_basis=u if complete else None,
    )


def schmidt_decompose(state: PureState, left_parties: int, *, complete: bool = False) -> SchmidtForm:
    """Schmidt decomposition with parties ``0..left_parties-1`` on the left."""
    n = state.n_parties
    if not 1 <= left_parties <= n - 1:
        raise ValueError(f"cut must satisfy 1 <= k <= n-1, got k={left_parties} for n={n}")
    norm = np.linalg.norm(state.amplitudes)
    if abs(norm - 1) > NORM_TOL:
        raise StateError(f"state not normalized: |psi| = {norm!r}")
    rows = math.prod(state.dims[:left_parties])
    return schmidt_matrix(state.amplitudes.reshape(rows, -1), complete=complete)


def is_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return h.ndim == 2 and h.shape[0] == h.shape[1] and np.abs(h - h.conj().T).max() <= tol


def hermitian_eigensystem(h: np.ndarray, top: int | None = None):
    """Eigenvalues (descending) and orthonormal eigenvectors of a Hermitian matrix.

    With ``top=k`` only the ``k`` largest eigenpairs are computed.
    """
    h = np.asarray(h)
    if not is_hermitian(h):
        raise ValueError("matrix is not Hermitian within 1e-12")
    dim = h.shape[0]
    if dim > MAX_DENSE_DIM:
        raise ValueError(f"dimension {dim} exceeds the dense cap {MAX_DENSE_DIM}")
    h = (h + h.conj().T) / 2
    if top is None or top >= dim:
        vals, vecs = scipy.linalg.eigh(h)
    else:
        vals, vecs = scipy.linalg.eigh(h, subset_by_index=[dim - top, dim - 1])
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def conditional_state(state: PureState, assignments):
    """Project some parties onto basis states and return what is left.

    ``assignments`` is a sequence of ``(party, LocalBasis, outcome)``.  Returns
    ``(weight, residual)`` where ``weight`` is the Born probability of the joint
    outcome and ``residual`` the normalized state of the unassigned parties in
    their original order, or ``None`` when the weight is at most 1e-12.
    """
    n = state.n_parties
    parties = [a[0] for a in assignments]
    if len(set(parties)) != len(parties):
        raise ValueError("assigned parties must be distinct")
    if len(parties) >= n:
        raise ValueError("at least one party must stay unassigned")
    t = state.tensor()
    # contract the highest axes first so lower axis numbers stay valid
    for party, basis, outcome in sorted(assignments, key=lambda a: -a[0]):
        if not 0 <= party < n:
            raise ValueError(f"party {party} out of range")
        if basis.dim != state.dims[party]:
            raise ValueError(f"basis dimension {basis.dim} != party {party} dimension")
        if not 0 <= outcome < basis.dim:
            raise ValueError(f"outcome {outcome} out of range for dimension {basis.dim}")
        t = np.tensordot(basis.vector(outcome).conj(), t, axes=([0], [party]))
    rest_dims = tuple(d for k, d in enumerate(state.dims) if k not in set(parties))
    vec = t.reshape(-1)
    weight = float(np.vdot(vec, vec).real)
    if weight <= ZERO_CUTOFF:
        return weight, None
    return weight, PureState(rest_dims, vec / math.sqrt(weight))

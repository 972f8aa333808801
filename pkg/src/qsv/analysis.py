"""Verification operators, spectral gaps and sample-complexity bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from .linalg import hermitian_eigensystem
from .protocols import ProtocolError, Strategy
from .states import PureState, rng_for

FIXED_POINT_TOL = 1e-9
# above this dimension eigenproblems go through ARPACK on the matrix-free operator
DENSE_EIG_DIM = 256
_COLUMN_BLOCK = 256


class Mixture:
    """Convex combination of tests, applied without densifying.

    Used both for single tests and for grouped effective tests.
    """

    def __init__(self, tests, weights=None):
        self.tests = tuple(tests)
        w = np.full(len(self.tests), 1 / len(self.tests)) if weights is None else np.asarray(weights, float)
        self.weights = w
        self.dims = self.tests[0].dims
        self.dim = self.tests[0].dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape, dtype=complex)
        for w, t in zip(self.weights, self.tests):
            if w:
                out += w * t.tree.apply(x)
        return out

    def dense(self) -> np.ndarray:
        return dense_from_apply(self.apply, self.dim)


def dense_from_apply(apply, dim: int) -> np.ndarray:
    out = np.empty((dim, dim), dtype=complex)
    for start in range(0, dim, _COLUMN_BLOCK):
        stop = min(dim, start + _COLUMN_BLOCK)
        block = np.zeros((dim, stop - start), dtype=complex)
        block[np.arange(start, stop), np.arange(stop - start)] = 1
        out[:, start:stop] = apply(block)
    return (out + out.conj().T) / 2


def verification_operator(strategy: Strategy) -> np.ndarray:
    """Dense sum_m p_m E_m, accumulated one test at a time."""
    omega = np.zeros((strategy.dim, strategy.dim), dtype=complex)
    for p, test in zip(strategy.probabilities, strategy.tests):
        if p:
            omega += p * dense_from_apply(test.tree.apply, test.dim)
    return omega


def fixed_point_residual(apply, target: PureState) -> float:
    psi = target.amplitudes
    return float(np.linalg.norm(apply(psi) - psi))


def top_eigenpairs(apply, dim: int, k: int = 1, dense=None):
    """Largest ``k`` eigenpairs of a Hermitian operator given by its action.

    ``dense`` optionally returns the explicit matrix; it is used when the
    dimension is small enough for a direct solve.
    """
    k = min(k, dim)
    if dim <= DENSE_EIG_DIM or k >= dim - 1:
        mat = dense() if dense is not None else dense_from_apply(apply, dim)
        return hermitian_eigensystem(mat, top=k)
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=apply, matmat=apply, dtype=complex)
    g = rng_for(0, dim).standard_normal((dim, 2))
    v0 = g[:, 0] + 1j * g[:, 1]
    vals, vecs = scipy.sparse.linalg.eigsh(op, k=k, which="LA", v0=v0, tol=1e-14, ncv=max(2 * k + 1, 24))
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


@dataclass(frozen=True, eq=False)
class GapReport:
    nu: float
    beta: float
    witness: np.ndarray
    target_residual: float

    def to_json(self) -> dict:
        return {
            "nu": self.nu,
            "beta": self.beta,
            "target_residual": self.target_residual,
            "witness": {"re": self.witness.real.tolist(), "im": self.witness.imag.tolist()},
        }


def gap_of_operator(apply, target: PureState, dense=None) -> GapReport:
    """Gap of an operator that fixes ``target``: beta is its top eigenvalue on the complement."""
    psi = target.amplitudes
    residual = fixed_point_residual(apply, target)
    if residual > FIXED_POINT_TOL:
        raise ProtocolError(f"target is not fixed by the verification operator (residual {residual:.3e})")

    # pushing psi to eigenvalue -2 keeps the top eigenvector orthogonal to it
    def shifted(x):
        y = apply(x)
        if x.ndim == 1:
            return y - 3 * psi * np.vdot(psi, x)
        return y - 3 * np.outer(psi, psi.conj() @ x)

    shifted_dense = None
    if dense is not None:
        shifted_dense = lambda: dense() - 3 * np.outer(psi, psi.conj())
    vals, vecs = top_eigenpairs(shifted, target.dim, 1, shifted_dense)
    w = vecs[:, 0] - psi * np.vdot(psi, vecs[:, 0])
    w = w / np.linalg.norm(w)
    beta = float(min(max(vals[0], 0.0), 1.0))
    return GapReport(nu=1.0 - beta, beta=beta, witness=w, target_residual=residual)


def spectral_gap(strategy: Strategy, target: PureState | None = None) -> GapReport:
    target = strategy.target if target is None else target
    if target is None:
        raise ProtocolError("no target state given")
    if target.dims != strategy.dims:
        raise ProtocolError("target dims do not match the strategy")
    dense = (lambda: verification_operator(strategy)) if strategy.dim <= DENSE_EIG_DIM else None
    return gap_of_operator(strategy.apply, target, dense)


def evaluate_at_probabilities(tests, target: PureState, probabilities) -> GapReport:
    return spectral_gap(Strategy(tuple(tests), probabilities, target), target)


def _check_domain(nu, eps, delta):
    if not 0 < nu <= 1:
        raise ValueError(f"spectral gap must lie in (0, 1], got {nu}")
    if not 0 < eps < 1:
        raise ValueError(f"infidelity must lie in (0, 1), got {eps}")
    if not 0 < delta < 1:
        raise ValueError(f"significance must lie in (0, 1), got {delta}")


def sample_complexity(nu: float, eps: float, delta: float) -> tuple[int, int]:
    """Number of tests needed to reach significance ``delta`` at infidelity ``eps``.

    Returns the exact count from ``(1 - nu*eps)**N <= delta`` and its
    logarithmic upper bound ``ln(1/delta)/(nu*eps)``.
    """
    _check_domain(nu, eps, delta)
    q = nu * eps
    exact = 1 if q >= 1 else math.ceil(math.log(delta) / math.log1p(-q))
    upper = math.ceil(math.log(1 / delta) / q)
    return exact, upper


def adversarial_bound(nu: float, eps: float, delta: float) -> tuple[float, float]:
    """Hedging weight ``nu/e`` and the resulting test count when the source may be adversarial."""
    _check_domain(nu, eps, delta)
    p = nu / math.e
    bound = math.log(1 / ((1 - eps) * delta)) / ((1 - nu + nu * nu / math.e) * nu * eps)
    return p, bound


def reduction_rate(n_base: float, n_other: float) -> float:
    if n_base <= 0:
        raise ValueError("base count must be positive")
    return (n_base - n_other) / n_base

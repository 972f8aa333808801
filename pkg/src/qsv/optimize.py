"""Minimizing the second eigenvalue of sum_m p_m E_m over the probability simplex.

Both methods only query top eigenvectors of the current operator.  Every
eigenvector ``v`` orthogonal to the target gives the linear minorant
``p -> sum_m p_m v^H Ebar_m v`` of ``f(p) = lambda_max(sum_m p_m Ebar_m)``, and
any density ``sigma`` on the span of collected eigenvectors certifies
``min_p f(p) >= min_m tr(sigma Ebar_m)``.  The methods differ in how ``p`` and
``sigma`` are updated:

* ``bundle`` (default) keeps the eigenvectors in a basis ``V`` and solves the
  restricted problem ``max_sigma min_m tr(sigma V^H Ebar_m V)`` exactly with a
  small conic program; its multipliers are the next ``p``.
* ``mirror`` runs multiplicative weights on the subgradients and uses the
  running average of ``v v^H`` as ``sigma``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .analysis import DENSE_EIG_DIM, FIXED_POINT_TOL, Mixture, top_eigenpairs
from .linalg import hermitian_eigensystem
from .protocols import ProtocolError, build_strategy
from .states import PureState

DEFAULT_TOL = 1e-6
DEGENERACY_TOL = 1e-9
# dense copies of all components are kept when they fit in this many entries
_DENSE_CACHE_ENTRIES = 2**24
_BUNDLE_MAX_COLUMNS = 40
_BUNDLE_NEW_COLUMNS = 4


class GroupingWarning(UserWarning):
    """The grouped optimization was asked for a state it is not designed for."""


@dataclass(frozen=True, eq=False)
class OptimizationReport:
    probabilities: np.ndarray
    nu: float
    dual_lower_bound: float
    iterations: int
    converged: bool
    primal_beta: float
    method: str = "bundle"

    @property
    def gap(self) -> float:
        """Certified distance between the returned beta and the optimal beta."""
        return self.primal_beta - self.dual_lower_bound

    def to_json(self) -> dict:
        return {
            "probabilities": [float(x) for x in self.probabilities],
            "nu": self.nu,
            "beta": self.primal_beta,
            "dual_lower_bound": self.dual_lower_bound,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
        }


class _Problem:
    """The components Ebar_m together with the operator of a probability vector."""

    def __init__(self, components, target: PureState):
        self.components = list(components)
        self.psi = target.amplitudes
        self.dim = target.dim
        self.m = len(self.components)
        for j, c in enumerate(self.components):
            r = float(np.linalg.norm(c.apply(self.psi) - self.psi))
            if r > FIXED_POINT_TOL:
                raise ProtocolError(f"component {j} does not fix the target (residual {r:.3e})")
        self.stack = None
        if self.m * self.dim**2 <= _DENSE_CACHE_ENTRIES:
            self.stack = np.stack([c.dense() for c in self.components])

    def apply_components(self, x: np.ndarray) -> np.ndarray:
        """E_m x for every m, shape (M, dim, cols); x is orthogonal to psi so Ebar_m x = E_m x."""
        if self.stack is not None:
            return np.matmul(self.stack, x)
        return np.stack([c.apply(x) for c in self.components])

    def top(self, p: np.ndarray, k: int):
        """Top eigenpairs of sum_m p_m E_m on the complement of the target."""
        psi = self.psi
        proj = np.outer(psi, psi.conj())
        if self.stack is not None:
            mat = np.tensordot(p, self.stack, axes=1) - 2 * proj
            mat = (mat + mat.conj().T) / 2
            if self.dim <= DENSE_EIG_DIM:
                vals, vecs = hermitian_eigensystem(mat, top=k)
            else:
                vals, vecs = top_eigenpairs(lambda x: mat @ x, self.dim, k)
        else:
            def apply(x):
                out = -2 * (np.outer(psi, psi.conj() @ x) if x.ndim > 1 else psi * np.vdot(psi, x))
                for w, c in zip(p, self.components):
                    if w:
                        out = out + w * c.apply(x)
                return out

            vals, vecs = top_eigenpairs(apply, self.dim, k)
        # E_m psi = psi, so psi sits at -1 and the top of the rest is lambda_max(Ebar)
        vecs = vecs - np.outer(psi, psi.conj() @ vecs)
        vecs = vecs / np.linalg.norm(vecs, axis=0)
        return vals, vecs


def _restricted_dual(g: np.ndarray):
    """Solve max_{W >= 0, tr W = 1} min_m tr(W g_m) for Hermitian r x r blocks g_m.

    Returns ``(W, p)`` with ``p`` the multipliers of the epigraph constraints,
    a minimizer of lambda_max(sum_m p_m g_m) over the simplex.
    """
    m, r, _ = g.shape
    emb = np.concatenate(
        [np.concatenate([g.real, -g.imag], 2), np.concatenate([g.imag, g.real], 2)], 1
    )
    x = cp.Variable((2 * r, 2 * r), PSD=True)
    s = cp.Variable()
    epi = s <= (emb.reshape(m, -1) / 2) @ cp.vec(x, order="C")
    prob = cp.Problem(cp.Maximize(s), [cp.trace(x) == 2, epi])
    # solver accuracy only affects progress: the bound is recomputed from W itself
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            prob.solve(solver=cp.SCS, eps=1e-9)
    if x.value is None:
        raise RuntimeError(f"restricted problem failed: {prob.status}")
    xv = x.value
    w = (xv[:r, :r] + xv[r:, r:]) / 2 + 1j * (xv[r:, :r] - xv[:r, r:]) / 2
    w = (w + w.conj().T) / 2
    vals, vecs = np.linalg.eigh(w)
    vals = np.clip(vals, 0, None)
    w = (vecs * vals) @ vecs.conj().T
    w /= np.trace(w).real
    p = np.clip(np.asarray(epi.dual_value, float).reshape(-1), 0, None)
    p = p / p.sum() if p.sum() > 0 else np.full(m, 1 / m)
    return w, p


def _bundle(problem: _Problem, p0, tol, max_iter):
    m, dim = problem.m, problem.dim
    p = p0
    v = np.zeros((dim, 0), dtype=complex)
    g = np.zeros((m, 0, 0), dtype=complex)
    w = None
    best = (math.inf, p)
    lower = -math.inf
    k_new = min(_BUNDLE_NEW_COLUMNS, dim - 1)
    for it in range(1, max_iter + 1):
        vals, vecs = problem.top(p, k_new)
        primal = float(max(vals[0], 0.0))
        if primal < best[0]:
            best = (primal, p)
        if best[0] - lower <= tol:
            return best, lower, it, True
        if v.shape[1] + k_new > _BUNDLE_MAX_COLUMNS and w is not None:
            # keep the directions that carry the current certificate
            lam, q = np.linalg.eigh(w)
            keep = q[:, np.argsort(lam)[::-1][: _BUNDLE_MAX_COLUMNS // 2]]
            v = v @ keep
            g = np.einsum("ai,mab,bj->mij", keep.conj(), g, keep)
        basis = np.column_stack([problem.psi, v]) if v.size else problem.psi[:, None]
        fresh = vecs - basis @ (basis.conj().T @ vecs)
        fresh = fresh - basis @ (basis.conj().T @ fresh)
        q, r = np.linalg.qr(fresh)
        fresh = q[:, np.abs(np.diag(r)) > 1e-8]
        if fresh.shape[1] == 0 and w is not None:
            # nothing new to learn: the restricted solution is final
            return best, lower, it, best[0] - lower <= tol
        ef = problem.apply_components(fresh)
        old = v.shape[1]
        v = np.column_stack([v, fresh])
        cross = np.einsum("ai,mak->mik", v.conj(), ef)
        g_new = np.zeros((m, v.shape[1], v.shape[1]), dtype=complex)
        g_new[:, :old, :old] = g
        g_new[:, :, old:] = cross
        g_new[:, old:, :old] = np.conj(np.swapaxes(cross[:, :old, :], 1, 2))
        g_new[:, old:, old:] = (cross[:, old:, :] + np.conj(np.swapaxes(cross[:, old:, :], 1, 2))) / 2
        g = g_new
        w, p = _restricted_dual(g)
        lower = max(lower, float(np.einsum("ij,mji->m", w, g).real.min()))
    return best, lower, max_iter, best[0] - lower <= tol


def _mirror(problem: _Problem, p0, tol, max_iter):
    m = problem.m
    logw = np.log(np.clip(p0, 1e-300, None))
    p = p0
    grad_sum = np.zeros(m)
    best = (math.inf, p)
    lower = -math.inf
    k = min(4, problem.dim - 1)
    for it in range(1, max_iter + 1):
        vals, vecs = problem.top(p, k)
        primal = float(max(vals[0], 0.0))
        if primal < best[0]:
            best = (primal, p)
        # average over the numerically degenerate top eigenspace
        top = vecs[:, vals >= vals[0] - DEGENERACY_TOL]
        ev = problem.apply_components(top)
        grad = np.einsum("ak,mak->m", top.conj(), ev).real / top.shape[1]
        grad_sum += grad
        lower = max(lower, float(grad_sum.min() / it))
        if best[0] - lower <= tol:
            return best, lower, it, True
        eta = math.sqrt(2 * math.log(max(m, 2)) / it)
        logw = logw - eta * grad
        logw -= logw.max()
        p = np.exp(logw)
        p /= p.sum()
    return best, lower, max_iter, False


def optimize_mixtures(components, target: PureState, tol=DEFAULT_TOL, *, method="bundle", max_iter=None, start=None):
    """Optimize the weights of fixed test mixtures; see the module docstring."""
    components = list(components)
    if not components:
        raise ProtocolError("nothing to optimize")
    problem = _Problem(components, target)
    m = problem.m
    p0 = np.full(m, 1 / m) if start is None else np.asarray(start, float) / np.sum(start)
    if m == 1 or problem.dim == 1:
        vals, _ = problem.top(np.ones(1), 1) if problem.dim > 1 else (np.zeros(1), None)
        beta = float(max(vals[0], 0.0))
        return OptimizationReport(np.ones(1), 1 - beta, beta, 1, True, beta, method)
    if method == "bundle":
        best, lower, it, ok = _bundle(problem, p0, tol, 200 if max_iter is None else max_iter)
    elif method == "mirror":
        best, lower, it, ok = _mirror(problem, p0, tol, 10**5 if max_iter is None else max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    beta, p = best
    return OptimizationReport(np.asarray(p), 1 - beta, min(lower, beta), it, ok, beta, method)


def optimize_probabilities(tests, target: PureState, tol=DEFAULT_TOL, **kwargs) -> OptimizationReport:
    """Best test probabilities for a fixed set of tests."""
    return optimize_mixtures([Mixture([t]) for t in tests], target, tol, **kwargs)


def zero_count_strings(length: int, zeros: int) -> list[tuple[int, ...]]:
    """Settings with ``zeros`` computational entries and the rest all 1 or all 2."""
    out = []
    for pos in itertools.combinations(range(length), zeros):
        for fill in (1, 2):
            s = tuple(0 if j in pos else fill for j in range(length))
            if s not in out:
                out.append(s)
    return out


def _is_qubit_dicke(state: PureState) -> bool:
    if any(d != 2 for d in state.dims):
        return False
    n = state.n_parties
    weights = np.array([bin(i).count("1") for i in range(state.dim)])
    for k in range(1, n):
        support = (weights == k).astype(complex)
        if abs(abs(np.vdot(support / np.linalg.norm(support), state.amplitudes)) - 1) < 1e-9:
            return True
    return False


def grouped_dicke_tests(state: PureState):
    """Effective tests T_{n_z}, n_z = 0..n-1, as uniform mixtures of 3-basis symmetrized tests."""
    n = state.n_parties
    strategy = build_strategy("3smub", state)
    by_label = {(t.label.last_party, t.label.settings): t for t in strategy.tests}
    groups = []
    for nz in range(n):
        strings = zero_count_strings(n - 1, nz)
        groups.append(Mixture([by_label[(k, s)] for k in range(n) for s in strings]))
    return groups


def grouped_dicke_optimize(state: PureState, tol=DEFAULT_TOL, **kwargs) -> OptimizationReport:
    """Optimize one weight per number of computational settings (n weights in all)."""
    if not _is_qubit_dicke(state):
        warnings.warn("grouped optimization is designed for qubit Dicke states; the result may be far from optimal",
                      GroupingWarning, stacklevel=2)
    return optimize_mixtures(grouped_dicke_tests(state), state, tol, **kwargs)

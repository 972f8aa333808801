"""Reference implementations that share no code with the package beyond state construction.

Each oracle rebuilds a quantity from its defining formula with plain numpy so
that tests compare two independent routes.
"""

import itertools
import math

import numpy as np


def phase_fixed_svd(mat):
    """SVD whose left vectors have their largest-magnitude entry real positive."""
    u, s, vh = np.linalg.svd(mat)
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(u.shape[1])]
    ph = ph / np.abs(ph)
    u = u / ph
    vh = vh.copy()
    vh[: s.size] *= ph[: s.size, None]
    return u, s, vh


def fourier_columns(basis):
    """Columns sum_j omega**(i*j) basis[:, j] / sqrt(d)."""
    d = basis.shape[0]
    return np.column_stack(
        [sum(np.exp(2j * np.pi * i * j / d) * basis[:, j] for j in range(d)) / math.sqrt(d) for i in range(d)]
    )


def rank_one(*factors):
    v = factors[0]
    for f in factors[1:]:
        v = np.kron(v, f)
    return np.outer(v, v.conj())


def bipartite_projectors(psi, d0, d1):
    """P_0 and P_1 of the two-party protocol from the Schmidt form of psi."""
    a, s, vh = phase_fixed_svd(psi.reshape(d0, d1))
    b = vh.T  # column i is |B_i>
    d = d0
    p0 = sum(rank_one(a[:, i], b[:, i]) for i in range(s.size) if s[i] > 1e-12)
    at = fourier_columns(a)
    p1 = np.zeros((d0 * d1, d0 * d1), dtype=complex)
    for i in range(d):
        bt = sum(np.exp(-2j * np.pi * i * j / d) * s[j] * b[:, j] for j in range(s.size))
        p1 += rank_one(at[:, i], bt)
    return p0, p1


def three_qudit_projectors(psi, d):
    """P_(0,0), P_(0,1), P_(1,0), P_(1,1) of the three-party protocol from nested Schmidt forms."""
    omega = np.exp(2j * np.pi / d)
    a, s, vh = phase_fixed_svd(psi.reshape(d, d * d))
    big_b = [vh[i].reshape(d, d) for i in range(d)]  # |B_i> as amplitude matrices
    at = fourier_columns(a)
    dim = d**3
    p = {key: np.zeros((dim, dim), dtype=complex) for key in ["00", "01", "10", "11"]}
    for i in range(d):
        if s[i] > 1e-12:
            b, t, ch = phase_fixed_svd(big_b[i])
            c = ch.T
            bt = fourier_columns(b)
            for j in range(d):
                if t[j] > 1e-12:
                    p["00"] += rank_one(a[:, i], b[:, j], c[:, j])
                ct = sum(t[l] * omega ** (-j * l) * c[:, l] for l in range(d))
                p["01"] += rank_one(a[:, i], bt[:, j], ct)
        tilde = sum(omega ** (-i * j) * s[j] * big_b[j] for j in range(d))
        bb, u, cbh = phase_fixed_svd(tilde)
        cb = cbh.T
        gamma = fourier_columns(bb)
        for j in range(d):
            if u[j] > 1e-12:
                p["10"] += rank_one(at[:, i], bb[:, j], cb[:, j])
            zeta = sum(u[l] * omega ** (-j * l) * cb[:, l] for l in range(d))
            p["11"] += rank_one(at[:, i], gamma[:, j], zeta)
    return p


def fixed_basis_projector(psi, dims, bases, last):
    """Dense projector of a test where every party but ``last`` measures a fixed basis.

    ``bases`` maps party -> unitary whose columns are the basis states; the pass
    branch for each outcome string projects ``last`` onto the normalized
    conditional state.
    """
    n = len(dims)
    measuring = [q for q in range(n) if q != last]
    dim = math.prod(dims)
    out = np.zeros((dim, dim), dtype=complex)
    for outcomes in itertools.product(*(range(dims[q]) for q in measuring)):
        chosen = dict(zip(measuring, outcomes))
        # projector onto the measured product state, identity on the last party
        factors = [
            np.eye(dims[q]) if q == last else np.outer(bases[q][:, chosen[q]], bases[q][:, chosen[q]].conj())
            for q in range(n)
        ]
        proj = factors[0]
        for f in factors[1:]:
            proj = np.kron(proj, f)
        v = proj @ psi
        w = np.vdot(v, v).real
        if w > 1e-12:
            v = v / math.sqrt(w)
            out += np.outer(v, v.conj())
    return out


def smallest_sample_count(nu, eps, delta):
    """Smallest N with (1 - nu*eps)**N <= delta, found by counting."""
    n, x = 0, 1.0
    while x > delta:
        n += 1
        x *= 1 - nu * eps
    return n


def random_state(rng, dims):
    v = rng.standard_normal(math.prod(dims)) + 1j * rng.standard_normal(math.prod(dims))
    return v / np.linalg.norm(v)


def gap_dense(omega, psi):
    """Second eigenvalue via the full spectrum of omega - |psi><psi|."""
    vals = np.linalg.eigvalsh(omega - np.outer(psi, psi.conj()))
    return 1 - vals[-1]

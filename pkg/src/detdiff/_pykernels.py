"""Pure numpy kernels; the compiled module mirrors these signatures.

transport_batch
    Drift J and diffusion D at many parameter points.  The Green-Kubo sum
    is solved in closed form on the transfer-operator-invariant space of
    step functions spanned by indicators 1{x < c} with c a branch boundary
    or a point of one of the two endpoint orbits u_j = T^j r(a/2+b),
    v_j = T^j r(-a/2+b).  The observable is the integer jump
    m(x) = floor(ax+b+1/2), which differs from psi by T(x) - x and thus
    gives the same D.  Truncating the orbits after ``nterms`` points costs
    O(a^-nterms).

walk_float, walk_modular
    Walker ensembles for the displacement S_n = sum of jumps + x_n - x_0.
"""
from __future__ import annotations

import math

import numpy as np

CHUNK = 8192


def default_nterms(a_min: float) -> int:
    # a^-n below 1e-18 for the smallest slope in the batch
    return int(math.ceil(18.0 * math.log(10.0) / math.log(a_min))) + 2


def _psum1(n):
    return n * (n + 1) / 2.0


def _psum2(n):
    return n * (n + 1) * (2 * n + 1) / 6.0


def _reduce(y):
    return y - np.floor(y + 0.5)


def _transport_chunk(a, b, nterms):
    n = a.size
    a2 = a[:, None]
    b2 = b[:, None]
    p = (np.ceil((a + 1) / 2 - b) - 1).astype(np.int64)
    q = (np.ceil((a + 1) / 2 + b) - 1).astype(np.int64)
    pf, qf = p.astype(float), q.astype(float)
    Lf = (-pf + 0.5 - b) / a + 0.5          # length of the leftmost branch
    Aq = (qf - 0.5 - b) / a

    # integral over [-1/2, c) of m^k, c lying in branch mc
    def cum(c, mc, k, aa, bb, pp, lf):
        psum = _psum1 if k == 1 else _psum2
        full = (-pp) ** k * lf + (psum(mc - 1) - psum(-pp)) / aa
        part = mc ** k * (c - (mc - 0.5 - bb) / aa)
        first = (-pp) ** k * (c + 0.5)
        return np.where(mc == -pp, first, full + part)

    u = np.empty((n, nterms))
    v = np.empty((n, nterms))
    u[:, 0] = _reduce(a / 2 + b)
    v[:, 0] = _reduce(-a / 2 + b)
    for j in range(1, nterms):
        u[:, j] = _reduce(a * u[:, j - 1] + b)
        v[:, j] = _reduce(a * v[:, j - 1] + b)
    jj = np.arange(nterms, dtype=float)
    apow = a2 ** (-jj)                        # a^-j
    w = apow / a2                             # a^-(j+1)

    mu = np.clip(np.floor(a2 * u + b2 + 0.5), -pf[:, None], qf[:, None])
    mv = np.clip(np.floor(a2 * v + b2 + 0.5), -pf[:, None], qf[:, None])
    P2, L2 = pf[:, None], Lf[:, None]
    C1u, C1v = cum(u, mu, 1, a2, b2, P2, L2), cum(v, mv, 1, a2, b2, P2, L2)
    C2u, C2v = cum(u, mu, 2, a2, b2, P2, L2), cum(v, mv, 2, a2, b2, P2, L2)
    C1h = -pf * Lf + (_psum1(qf - 1) - _psum1(-pf)) / a + qf * (0.5 - Aq)
    C2h = pf**2 * Lf + (_psum2(qf - 1) - _psum2(-pf)) / a + qf**2 * (0.5 - Aq)

    alpha = 1.0 / (1.0 + np.sum(w * (u - v), axis=1))
    J = alpha * (C1h + np.sum(w * (C1u - C1v), axis=1))
    J2 = J[:, None]

    # coefficients of 1{x < A_k}: -alpha (1 + sum of orbit weights with m >= k)
    K = int((p + q).max()) + 1
    hist = np.zeros((n, K + 1))
    rows = np.repeat(np.arange(n), nterms)
    np.add.at(hist, (rows, (mu + P2).astype(np.int64).ravel()), w.ravel())
    np.add.at(hist, (rows, (mv + P2).astype(np.int64).ravel()), -w.ravel())
    ge = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]      # ge[:, i] = sum_{idx >= i}
    idx = np.arange(1, K)
    valid = idx[None, :] <= (p + q)[:, None]
    kk = idx[None, :] - P2                               # branch labels -p+1..q
    Ak = (kk - 0.5 - b2) / a2
    phiA = np.where(valid, -alpha[:, None] * (1.0 + ge[:, 1:K]), 0.0)
    C1A = -P2 * L2 + (_psum1(kk - 1) - _psum1(-P2)) / a2

    phiu = alpha[:, None] * w * (mu - J2)
    phiv = -alpha[:, None] * w * (mv - J2)
    U = np.empty_like(phiu)
    V = np.empty_like(phiv)
    U[:, 0] = phiu[:, 0]
    V[:, 0] = 0.0
    for j in range(1, nterms):
        U[:, j] = phiu[:, j] + U[:, j - 1] / a
        V[:, j] = phiv[:, j] + V[:, j - 1] / a
    S0 = np.sum(apow, axis=1)
    S1 = S0 / a
    sA = phiA.sum(axis=1)
    m11 = (1 + S1) / a
    m12 = 1 + S0 / a
    r1 = phiv[:, 0] - (sA + U.sum(axis=1) + V.sum(axis=1)) / a
    m21 = 1 + np.sum(w * (u + 0.5), axis=1)
    m22 = np.sum(apow * (v + 0.5), axis=1)
    r2 = -(np.sum(phiA * (Ak + 0.5), axis=1) + np.sum(U * (u + 0.5), axis=1) + np.sum(V * (v + 0.5), axis=1))
    det = m11 * m22 - m12 * m21
    g = (r1 * m22 - m12 * r2) / det
    t = (m11 * r2 - m21 * r1) / det
    gu = U + g[:, None] * w
    gv = V + t[:, None] * apow

    Mh = C1h - J
    MA = C1A - J2 * (Ak + 0.5)
    Mu = C1u - J2 * (u + 0.5)
    Mv = C1v - J2 * (v + 0.5)
    mG = g * Mh + np.sum(phiA * MA, axis=1) + np.sum(gu * Mu + gv * Mv, axis=1)
    Q2h = C2h - 2 * J * C1h + J**2
    Q2u = C2u - 2 * J2 * C1u + J2**2 * (u + 0.5)
    Q2v = C2v - 2 * J2 * C1v + J2**2 * (v + 0.5)
    m2h = alpha * (Q2h + np.sum(w * (Q2u - Q2v), axis=1))
    return J, mG - 0.5 * m2h


def transport_batch(a, b, nterms: int | None = None):
    """Return (J, D) arrays for parameter arrays a, b (broadcast together)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a.shape
    a, b = a.ravel(), b.ravel()
    if nterms is None:
        nterms = default_nterms(float(a.min())) if a.size else 2
    J = np.empty(a.size)
    D = np.empty(a.size)
    for s in range(0, a.size, CHUNK):
        sl = slice(s, s + CHUNK)
        J[sl], D[sl] = _transport_chunk(a[sl], b[sl], nterms)
    return J.reshape(shape), D.reshape(shape)


def walk_float(a: float, b: float, x0, n_steps: int, checkpoints=None):
    """Iterate walkers from x0; return (S at checkpoints, final x).

    S at step k is (sum of the first k jumps) + x_k - x_0, which equals the
    lifted displacement.  ``checkpoints`` must be increasing step counts.
    """
    x = np.array(x0, dtype=float)
    cps = [n_steps] if checkpoints is None else list(checkpoints)
    out = np.empty((x.size, len(cps)))
    jumps = np.zeros(x.size)
    start = x.copy()
    ci = 0
    if cps and cps[0] == 0:
        out[:, 0] = 0.0
        ci = 1
    for k in range(1, n_steps + 1):
        y = a * x + b
        m = np.floor(y + 0.5)
        x = y - m
        jumps += m
        while ci < len(cps) and cps[ci] == k:
            out[:, ci] = jumps + (x - start)
            ci += 1
    return out, x


def walk_modular(a: int, c: int, modulus: int, s0, n_steps: int, checkpoints=None):
    """Exact integer orbits: state s represents x = s/modulus - 1/2.

    One step is t = a s + c, jump = floor(t / modulus), s' = t - jump*modulus,
    with c = (b - a/2 + 1/2) * modulus an integer.  The caller guarantees
    |a s + c| < 2**63.
    """
    s = np.array(s0, dtype=np.int64)
    cps = [n_steps] if checkpoints is None else list(checkpoints)
    out = np.empty((s.size, len(cps)))
    jumps = np.zeros(s.size, dtype=np.int64)
    x_start = s / modulus - 0.5
    ci = 0
    if cps and cps[0] == 0:
        out[:, 0] = 0.0
        ci = 1
    a64, c64, M64 = np.int64(a), np.int64(c), np.int64(modulus)
    for k in range(1, n_steps + 1):
        t = a64 * s + c64
        m = np.floor_divide(t, M64)
        s = t - m * M64
        jumps += m
        while ci < len(cps) and cps[ci] == k:
            out[:, ci] = jumps + ((s / modulus - 0.5) - x_start)
            ci += 1
    return out, s

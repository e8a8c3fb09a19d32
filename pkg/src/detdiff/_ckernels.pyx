# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of the kernels in _pykernels (same signatures)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, pow
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _red(double y) noexcept nogil:
    return y - floor(y + 0.5)


cdef inline double _ps1(double n) noexcept nogil:
    return n * (n + 1.0) / 2.0


cdef inline double _ps2(double n) noexcept nogil:
    return n * (n + 1.0) * (2.0 * n + 1.0) / 6.0


cdef inline double _cum(double c, double mc, int k, double a, double b, double p, double lf) noexcept nogil:
    cdef double full, part
    if mc == -p:
        return pow(-p, k) * (c + 0.5)
    if k == 1:
        full = -p * lf + (_ps1(mc - 1.0) - _ps1(-p)) / a
    else:
        full = p * p * lf + (_ps2(mc - 1.0) - _ps2(-p)) / a
    part = pow(mc, k) * (c - (mc - 0.5 - b) / a)
    return full + part


cdef inline double _clipm(double m, double p, double q) noexcept nogil:
    if m < -p:
        return -p
    if m > q:
        return q
    return m


cdef int _point(double a, double b, int nt, double* buf, double* out) noexcept nogil:
    # buf holds 12*nt doubles plus the branch histogram
    cdef double* u = buf
    cdef double* v = buf + nt
    cdef double* w = buf + 2 * nt
    cdef double* mu = buf + 3 * nt
    cdef double* mv = buf + 4 * nt
    cdef double* U = buf + 5 * nt
    cdef double* V = buf + 6 * nt
    cdef double* hist = buf + 7 * nt
    cdef double p = ceil((a + 1.0) / 2.0 - b) - 1.0
    cdef double q = ceil((a + 1.0) / 2.0 + b) - 1.0
    cdef int K = <int>(p + q) + 1
    cdef double lf = (-p + 0.5 - b) / a + 0.5
    cdef double Aq = (q - 0.5 - b) / a
    cdef int j, i
    cdef double apw, s_uv = 0.0, s1 = 0.0, s2 = 0.0
    cdef double C1h, C2h, alpha, J, acc
    u[0] = _red(a / 2.0 + b)
    v[0] = _red(-a / 2.0 + b)
    for j in range(1, nt):
        u[j] = _red(a * u[j - 1] + b)
        v[j] = _red(a * v[j - 1] + b)
    apw = 1.0 / a
    for j in range(nt):
        w[j] = apw
        apw /= a
        mu[j] = _clipm(floor(a * u[j] + b + 0.5), p, q)
        mv[j] = _clipm(floor(a * v[j] + b + 0.5), p, q)
    C1h = -p * lf + (_ps1(q - 1.0) - _ps1(-p)) / a + q * (0.5 - Aq)
    C2h = p * p * lf + (_ps2(q - 1.0) - _ps2(-p)) / a + q * q * (0.5 - Aq)
    for j in range(nt):
        s_uv += w[j] * (u[j] - v[j])
        s1 += w[j] * (_cum(u[j], mu[j], 1, a, b, p, lf) - _cum(v[j], mv[j], 1, a, b, p, lf))
    alpha = 1.0 / (1.0 + s_uv)
    J = alpha * (C1h + s1)

    for i in range(K + 1):
        hist[i] = 0.0
    for j in range(nt):
        hist[<int>(mu[j] + p)] += w[j]
        hist[<int>(mv[j] + p)] -= w[j]
    acc = 0.0
    for i in range(K, -1, -1):
        acc += hist[i]
        hist[i] = acc            # now sum over indices >= i

    cdef double sA = 0.0, sAx = 0.0, sAM = 0.0, phiA, kk, Ak
    for i in range(1, K):
        kk = i - p
        Ak = (kk - 0.5 - b) / a
        phiA = -alpha * (1.0 + hist[i])
        sA += phiA
        sAx += phiA * (Ak + 0.5)
        sAM += phiA * ((-p * lf + (_ps1(kk - 1.0) - _ps1(-p)) / a) - J * (Ak + 0.5))

    cdef double phiv0 = -alpha * w[0] * (mv[0] - J)
    U[0] = alpha * w[0] * (mu[0] - J)
    V[0] = 0.0
    for j in range(1, nt):
        U[j] = alpha * w[j] * (mu[j] - J) + U[j - 1] / a
        V[j] = -alpha * w[j] * (mv[j] - J) + V[j - 1] / a
    cdef double S0 = 0.0, sU = 0.0, sV = 0.0, m21 = 1.0, m22 = 0.0, r2 = -sAx
    for j in range(nt):
        S0 += w[j] * a
        sU += U[j]
        sV += V[j]
        m21 += w[j] * (u[j] + 0.5)
        m22 += w[j] * a * (v[j] + 0.5)
        r2 -= U[j] * (u[j] + 0.5) + V[j] * (v[j] + 0.5)
    cdef double m11 = (1.0 + S0 / a) / a
    cdef double m12 = 1.0 + S0 / a
    cdef double r1 = phiv0 - (sA + sU + sV) / a
    cdef double det = m11 * m22 - m12 * m21
    cdef double g = (r1 * m22 - m12 * r2) / det
    cdef double t = (m11 * r2 - m21 * r1) / det

    cdef double mG = g * (C1h - J) + sAM
    cdef double m2h = C2h - 2.0 * J * C1h + J * J
    cdef double c1u, c1v, gu, gv
    for j in range(nt):
        c1u = _cum(u[j], mu[j], 1, a, b, p, lf)
        c1v = _cum(v[j], mv[j], 1, a, b, p, lf)
        gu = U[j] + g * w[j]
        gv = V[j] + t * w[j] * a
        mG += gu * (c1u - J * (u[j] + 0.5)) + gv * (c1v - J * (v[j] + 0.5))
        m2h += w[j] * ((_cum(u[j], mu[j], 2, a, b, p, lf) - 2.0 * J * c1u + J * J * (u[j] + 0.5))
                       - (_cum(v[j], mv[j], 2, a, b, p, lf) - 2.0 * J * c1v + J * J * (v[j] + 0.5)))
    out[0] = J
    out[1] = mG - 0.5 * alpha * m2h
    return 0


def transport_batch(a, b, nterms=None):
    from ._pykernels import default_nterms
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a_arr.shape
    cdef double[::1] av = np.ascontiguousarray(a_arr.ravel())
    cdef double[::1] bv = np.ascontiguousarray(b_arr.ravel())
    cdef Py_ssize_t n = av.shape[0], i
    if nterms is None:
        nterms = default_nterms(float(np.min(av))) if n else 2
    cdef int nt = nterms
    J = np.empty(n)
    D = np.empty(n)
    cdef double[::1] Jv = J
    cdef double[::1] Dv = D
    cdef double amax = float(np.max(av)) if n else 2.0
    cdef int kmax = <int>(amax + 4)
    cdef double* buf = <double*> malloc((7 * nt + kmax + 2) * sizeof(double))
    cdef double res[2]
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                _point(av[i], bv[i], nt, buf, res)
                Jv[i] = res[0]
                Dv[i] = res[1]
    finally:
        free(buf)
    return J.reshape(shape), D.reshape(shape)


def walk_float(double a, double b, x0, Py_ssize_t n_steps, checkpoints=None):
    x_arr = np.array(x0, dtype=float)
    cps = np.asarray([n_steps] if checkpoints is None else list(checkpoints), dtype=np.int64)
    cdef Py_ssize_t nw = x_arr.size, ncp = cps.shape[0], i, k, ci = 0
    out = np.empty((nw, ncp))
    start = x_arr.copy()
    jumps = np.zeros(nw)
    cdef double[::1] xv = x_arr, sv = start, jv = jumps
    cdef double[:, ::1] ov = out
    cdef long long[::1] cv = cps
    cdef double y, m
    # step-major order: walkers are independent, so the inner loop has no
    # loop-carried dependency and pipelines well
    with nogil:
        while ci < ncp and cv[ci] == 0:
            for i in range(nw):
                ov[i, ci] = 0.0
            ci += 1
        for k in range(1, n_steps + 1):
            for i in range(nw):
                y = a * xv[i] + b
                m = floor(y + 0.5)
                xv[i] = y - m
                jv[i] += m
            while ci < ncp and cv[ci] == k:
                for i in range(nw):
                    ov[i, ci] = jv[i] + (xv[i] - sv[i])
                ci += 1
    return out, x_arr


def walk_modular(long long a, long long c, long long modulus, s0, Py_ssize_t n_steps, checkpoints=None):
    s_arr = np.array(s0, dtype=np.int64)
    cps = np.asarray([n_steps] if checkpoints is None else list(checkpoints), dtype=np.int64)
    cdef Py_ssize_t nw = s_arr.size, ncp = cps.shape[0], i, k, ci = 0
    out = np.empty((nw, ncp))
    x_start = s_arr / float(modulus) - 0.5
    jumps = np.zeros(nw, dtype=np.int64)
    cdef long long[::1] sv = s_arr, jv = jumps
    cdef double[::1] xs = x_start
    cdef double[:, ::1] ov = out
    cdef long long[::1] cv = cps
    cdef long long t, m
    cdef double dm = <double> modulus, inv = 1.0 / dm
    with nogil:
        while ci < ncp and cv[ci] == 0:
            for i in range(nw):
                ov[i, ci] = 0.0
            ci += 1
        for k in range(1, n_steps + 1):
            for i in range(nw):
                t = a * sv[i] + c
                # floating quotient estimate, off by at most one either way
                m = <long long> (t * inv)
                t -= m * modulus
                if t < 0:
                    t += modulus
                    m -= 1
                elif t >= modulus:
                    t -= modulus
                    m += 1
                sv[i] = t
                jv[i] += m
            while ci < ncp and cv[ci] == k:
                for i in range(nw):
                    ov[i, ci] = <double> jv[i] + ((sv[i] / dm - 0.5) - xs[i])
                ci += 1
    return out, s_arr

# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sampling kernels.

Mirrors ``_kernels_py`` draw for draw: the same numpy C distribution
routines are called on the generator's bit stream in the same order, so the
two backends produce identical output for identical streams.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, floor, log, log1p, sqrt, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memset
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    binomial_t, random_binomial, random_standard_gamma, random_standard_uniform)

cnp.import_array()

cdef double FLOOR = 1e-300
cdef double TAIL = 1e-17


cdef bitgen_t* _bitgen(object rng) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef int64_t _crt(bitgen_t* bg, int64_t n, double a) noexcept nogil:
    cdef int64_t i, l = 0
    for i in range(n):
        if random_standard_uniform(bg) < a / (a + <double> i):
            l += 1
    return l


cdef void _mult(bitgen_t* bg, int64_t n, double* w, int K, int64_t* out,
                double* suf) noexcept nogil:
    # out is overwritten; suf must hold K + 1 doubles
    cdef int j
    cdef int64_t rem, x
    cdef double p
    cdef binomial_t bt
    for j in range(K):
        out[j] = 0
    if n <= 0:
        return
    memset(&bt, 0, sizeof(binomial_t))
    suf[K] = 0.0
    for j in range(K - 1, -1, -1):
        suf[j] = suf[j + 1] + w[j]
    rem = n
    for j in range(K - 1):
        if rem == 0:
            break
        if suf[j] > 0.0:
            p = w[j] / suf[j]
            if p > 1.0:
                p = 1.0
        else:
            p = 1.0 / (K - j)
        x = random_binomial(bg, p, rem, &bt)
        out[j] = x
        rem -= x
    out[K - 1] += rem


cdef int64_t _invert(bitgen_t* bg, int64_t lo, double* w, Py_ssize_t n) noexcept nogil:
    cdef double total = 0.0, acc = 0.0, u
    cdef Py_ssize_t j
    for j in range(n):
        total += w[j]
    u = random_standard_uniform(bg) * total
    for j in range(n):
        acc += w[j]
        if u < acc:
            return lo + j
    return lo + n - 1


def crt(rng, n, double a):
    cdef int64_t nn = n
    if nn <= 0:
        return 0
    cdef bitgen_t* bg = _bitgen(rng)
    return _crt(bg, nn, a)


def crt_many(rng, n, a):
    cdef cnp.ndarray[int64_t, ndim=1] fn = np.ascontiguousarray(n, dtype=np.int64).ravel()
    shape = np.shape(n)
    cdef cnp.ndarray[double, ndim=1] fa = np.ascontiguousarray(
        np.broadcast_to(np.asarray(a, dtype=np.float64), shape), dtype=np.float64).ravel()
    cdef cnp.ndarray[int64_t, ndim=1] fo = np.zeros(fn.shape[0], dtype=np.int64)
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t j
    with nogil:
        for j in range(fn.shape[0]):
            if fn[j] > 0:
                fo[j] = _crt(bg, fn[j], fa[j])
    return fo.reshape(shape)


def sumlog(rng, l, double p):
    cdef int64_t total = 0, k, i, nl = l
    cdef double c = -1.0 / log1p(-p), u, pk
    cdef bitgen_t* bg = _bitgen(rng)
    for i in range(nl):
        u = random_standard_uniform(bg)
        k = 1
        pk = c * p
        while u > pk and pk > FLOOR:
            u -= pk
            k += 1
            pk = pk * (p * (k - 1.0) / k)
        total += k
    return total


cdef list _bessel_table(double nu, double a):
    cdef double b = 0.25 * a * a, x, r
    cdef int64_t mode = <int64_t> floor((sqrt(nu * nu + a * a) - nu) / 2.0), n
    left = []
    x = 1.0
    n = mode
    while n > 0:
        x = x * ((n * (n + nu)) / b)
        n -= 1
        if x < TAIL:
            break
        left.append(x)
    w = left[::-1]
    w.append(1.0)
    x = 1.0
    n = mode
    while True:
        r = b / ((n + 1.0) * (n + nu + 1.0))
        x = x * r
        n += 1
        if x < TAIL and r < 0.5:
            break
        w.append(x)
    return [mode - len(left), w]


cdef inline double _sch_ratio(int64_t n, double h, double mu) noexcept nogil:
    return mu * (n + h) / (n * (n + 1.0))


cdef list _sch_table(double h, double mu):
    cdef int64_t mode = <int64_t> floor(((mu - 1.0) + sqrt((mu - 1.0) * (mu - 1.0) + 4.0 * mu * h)) / 2.0)
    cdef int64_t n
    cdef double x, r
    if mode < 1:
        mode = 1
    while mode > 1 and _sch_ratio(mode - 1, h, mu) < 1.0:
        mode -= 1
    while _sch_ratio(mode, h, mu) >= 1.0:
        mode += 1
    left = []
    x = 1.0
    n = mode
    while n > 1:
        x = x / _sch_ratio(n - 1, h, mu)
        n -= 1
        if x < TAIL:
            break
        left.append(x)
    w = left[::-1]
    w.append(1.0)
    x = 1.0
    n = mode
    while True:
        r = _sch_ratio(n, h, mu)
        x = x * r
        n += 1
        if x < TAIL and r < 0.5:
            break
        w.append(x)
    return [mode - len(left), w]


cdef int64_t _draw_table(object rng, list table):
    cdef cnp.ndarray[double, ndim=1] w = np.asarray(table[1], dtype=np.float64)
    cdef bitgen_t* bg = _bitgen(rng)
    return _invert(bg, table[0], &w[0], w.shape[0])


def bessel(rng, double nu, double a):
    if a <= 0.0:
        return 0
    return _draw_table(rng, _bessel_table(nu, a))


def sch(rng, h, double mu):
    return _draw_table(rng, _sch_table(<double> h, mu))


def mult(rng, n, w):
    cdef cnp.ndarray[double, ndim=1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef int K = ww.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] out = np.zeros(K, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] suf = np.zeros(K + 1)
    cdef bitgen_t* bg = _bitgen(rng)
    _mult(bg, n, &ww[0], K, &out[0], &suf[0])
    return out


def dirichlet(rng, conc):
    cdef cnp.ndarray[double, ndim=1] a = np.ascontiguousarray(conc, dtype=np.float64)
    cdef int K = a.shape[0], j
    cdef cnp.ndarray[double, ndim=1] out = np.empty(K)
    cdef cnp.ndarray[double, ndim=1] lg = np.empty(K)
    cdef bitgen_t* bg = _bitgen(rng)
    cdef double g, u, m = -INFINITY, s = 0.0, x
    for j in range(K):
        if a[j] <= 0.0:
            lg[j] = -INFINITY
        elif a[j] < 1.0:
            g = random_standard_gamma(bg, a[j] + 1.0)
            u = random_standard_uniform(bg)
            if u > 0.0:
                lg[j] = log(g) + log(u) / a[j]
            else:
                lg[j] = -INFINITY
        else:
            lg[j] = log(random_standard_gamma(bg, a[j]))
        if lg[j] > m:
            m = lg[j]
    if m == -INFINITY:
        out[:] = 1.0 / K
        return out
    for j in range(K):
        out[j] = exp(lg[j] - m)
        s += out[j]
    for j in range(K):
        x = out[j] / s
        out[j] = x if x > FLOOR else FLOOR
    return out


def allocate(rng, y, phi, theta):
    cdef int64_t[:, :] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef double[:, :] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[:, :] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t V = yy.shape[0], B = yy.shape[1], K = ph.shape[1], v, b, k
    y_vk_arr = np.zeros((V, K), dtype=np.int64)
    y_kb_arr = np.zeros((K, B), dtype=np.int64)
    cdef int64_t[:, :] y_vk = y_vk_arr
    cdef int64_t[:, :] y_kb = y_kb_arr
    cdef double[:] w = np.zeros(K)
    cdef double[:] suf = np.zeros(K + 1)
    cdef int64_t[:] x = np.zeros(K, dtype=np.int64)
    cdef bitgen_t* bg = _bitgen(rng)
    cdef int64_t n
    with nogil:
        for b in range(B):
            for v in range(V):
                n = yy[v, b]
                if n == 0:
                    continue
                for k in range(K):
                    w[k] = ph[v, k] * th[k, b]
                _mult(bg, n, &w[0], <int> K, &x[0], &suf[0])
                for k in range(K):
                    y_vk[v, k] += x[k]
                    y_kb[k, b] += x[k]
    return y_vk_arr, y_kb_arr


def backward_l(rng, y_kt, theta, pi, int M, double tau0, nu):
    cdef int64_t[:, :] y = np.ascontiguousarray(y_kt, dtype=np.int64)
    cdef double[:, :] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double[:, :, :] P = np.ascontiguousarray(pi, dtype=np.float64)
    cdef double[:] nn = np.ascontiguousarray(nu, dtype=np.float64)
    cdef Py_ssize_t K = y.shape[0], T = y.shape[1], t, k, k2, ii
    l_kk_arr = np.zeros((T, K, K), dtype=np.int64)
    l_dot_arr = np.zeros((T + 1, K), dtype=np.int64)
    l_first_arr = np.zeros(K, dtype=np.int64)
    cdef int64_t[:, :, :] l_kk = l_kk_arr
    cdef int64_t[:, :] l_dot = l_dot_arr
    cdef int64_t[:] l_first = l_first_arr
    cdef double[:] w = np.zeros(K)
    cdef double[:] suf = np.zeros(K + 1)
    cdef int64_t[:] x = np.zeros(K, dtype=np.int64)
    cdef bitgen_t* bg = _bitgen(rng)
    cdef int64_t m, lk
    cdef double s
    with nogil:
        for t in range(T - 1, 0, -1):
            ii = (t - 1) // M
            for k in range(K):
                m = y[k, t] + l_dot[t + 1, k]
                if m == 0:
                    continue
                s = 0.0
                for k2 in range(K):
                    w[k2] = P[ii, k, k2] * th[k2, t - 1]
                    s += w[k2]
                lk = _crt(bg, m, tau0 * s)
                _mult(bg, lk, &w[0], <int> K, &x[0], &suf[0])
                for k2 in range(K):
                    l_kk[t, k, k2] = x[k2]
                    l_dot[t, k2] += x[k2]
        for k in range(K):
            m = y[k, 0] + l_dot[1, k]
            if m > 0:
                l_first[k] = _crt(bg, m, tau0 * nn[k])
    return l_kk_arr, l_dot_arr, l_first_arr


def forward_theta(rng, y_kt, l_dot, pi, int M, double tau0, nu, delta, zeta):
    cdef int64_t[:, :] y = np.ascontiguousarray(y_kt, dtype=np.int64)
    cdef int64_t[:, :] ld = np.ascontiguousarray(l_dot, dtype=np.int64)
    cdef double[:, :, :] P = np.ascontiguousarray(pi, dtype=np.float64)
    cdef double[:] nn = np.ascontiguousarray(nu, dtype=np.float64)
    cdef double[:] de = np.ascontiguousarray(delta, dtype=np.float64)
    cdef double[:] ze = np.ascontiguousarray(zeta, dtype=np.float64)
    cdef Py_ssize_t K = y.shape[0], T = y.shape[1], t, k, k2, ii
    theta_arr = np.empty((K, T))
    cdef double[:, :] th = theta_arr
    cdef bitgen_t* bg = _bitgen(rng)
    cdef double rate, shape, s, x
    with nogil:
        rate = tau0 + de[0] + ze[1] * tau0
        for k in range(K):
            shape = <double> (y[k, 0] + ld[1, k]) + tau0 * nn[k]
            x = random_standard_gamma(bg, shape) / rate
            th[k, 0] = x if x > FLOOR else FLOOR
        for t in range(1, T):
            ii = (t - 1) // M
            rate = tau0 + de[t] + ze[t + 1] * tau0
            for k in range(K):
                s = 0.0
                for k2 in range(K):
                    s += P[ii, k, k2] * th[k2, t - 1]
                shape = <double> (y[k, t] + ld[t + 1, k]) + tau0 * s
                x = random_standard_gamma(bg, shape) / rate
                th[k, t] = x if x > FLOOR else FLOOR
    return theta_arr

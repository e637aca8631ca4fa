"""Pure-Python versions of the sampling kernels.

Every function here mirrors one in ``_kernels.pyx`` and consumes the
generator's bit stream in exactly the same order with the same floating
point arithmetic, so both backends return identical draws for identical
streams. Scalar draws go through ``Generator.random``, ``standard_gamma``
and ``binomial``, which call the same C routines the compiled module uses.
"""
import math

import numpy as np

FLOOR = 1e-300
TAIL = 1e-17


def crt(rng, n, a):
    n = int(n)
    if n <= 0:
        return 0
    u = rng.random(n)
    return int(np.count_nonzero(u < a / (a + np.arange(n, dtype=np.float64))))


def crt_many(rng, n, a):
    n = np.asarray(n, dtype=np.int64)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), n.shape)
    out = np.zeros(n.shape, dtype=np.int64)
    fn, fa, fo = n.ravel(), a.ravel(), out.reshape(-1)
    for j in range(fn.shape[0]):
        if fn[j] > 0:
            fo[j] = crt(rng, fn[j], fa[j])
    return out


def sumlog(rng, l, p):
    total = 0
    c = -1.0 / math.log1p(-p)
    for _ in range(int(l)):
        u = rng.random()
        k = 1
        pk = c * p
        while u > pk and pk > FLOOR:
            u -= pk
            k += 1
            pk = pk * (p * (k - 1.0) / k)
        total += k
    return total


def _invert(rng, lo, w):
    total = 0.0
    for x in w:
        total += x
    u = rng.random() * total
    acc = 0.0
    for j, x in enumerate(w):
        acc += x
        if u < acc:
            return lo + j
    return lo + len(w) - 1


def bessel(rng, nu, a):
    if a <= 0.0:
        return 0
    b = 0.25 * a * a
    mode = int(math.floor((math.sqrt(nu * nu + a * a) - nu) / 2.0))
    # weights relative to the mode via successive ratios b/((n+1)(n+nu+1))
    left = []
    x = 1.0
    n = mode
    while n > 0:
        x = x * ((n * (n + nu)) / b)
        n -= 1
        if x < TAIL:
            break
        left.append(x)
    lo = mode - len(left)
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
    return _invert(rng, lo, w)


def _sch_ratio(n, h, mu):
    return mu * (n + h) / (n * (n + 1.0))


def sch(rng, h, mu):
    h = float(h)
    mode = int(math.floor(((mu - 1.0) + math.sqrt((mu - 1.0) * (mu - 1.0) + 4.0 * mu * h)) / 2.0))
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
    lo = mode - len(left)
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
    return _invert(rng, lo, w)


def mult(rng, n, w):
    """Multinomial split of n with unnormalised nonnegative weights w."""
    K = len(w)
    out = np.zeros(K, dtype=np.int64)
    n = int(n)
    if n <= 0:
        return out
    suf = [0.0] * (K + 1)
    for j in range(K - 1, -1, -1):
        suf[j] = suf[j + 1] + float(w[j])
    rem = n
    for j in range(K - 1):
        if rem == 0:
            break
        if suf[j] > 0.0:
            p = float(w[j]) / suf[j]
            if p > 1.0:
                p = 1.0
        else:
            p = 1.0 / (K - j)
        x = int(rng.binomial(rem, p))
        out[j] = x
        rem -= x
    out[K - 1] += rem
    return out


def dirichlet(rng, conc):
    K = len(conc)
    lg = [0.0] * K
    for j in range(K):
        a = float(conc[j])
        if a <= 0.0:
            lg[j] = -math.inf
        elif a < 1.0:
            g = rng.standard_gamma(a + 1.0)
            u = rng.random()
            lg[j] = math.log(g) + math.log(u) / a if u > 0.0 else -math.inf
        else:
            lg[j] = math.log(rng.standard_gamma(a))
    m = max(lg)
    out = np.empty(K)
    if m == -math.inf:
        out[:] = 1.0 / K
        return out
    s = 0.0
    for j in range(K):
        out[j] = math.exp(lg[j] - m)
        s += out[j]
    for j in range(K):
        x = out[j] / s
        out[j] = x if x > FLOOR else FLOOR
    return out


def allocate(rng, y, phi, theta):
    """Split each count y[v, b] over factors with weights phi[v, k] theta[k, b].

    Returns (Σ_b allocations per (v, k), Σ_v allocations per (k, b))."""
    V, B = y.shape
    K = phi.shape[1]
    y_vk = np.zeros((V, K), dtype=np.int64)
    y_kb = np.zeros((K, B), dtype=np.int64)
    w = [0.0] * K
    for b in range(B):
        for v in range(V):
            n = int(y[v, b])
            if n == 0:
                continue
            for k in range(K):
                w[k] = float(phi[v, k]) * float(theta[k, b])
            x = mult(rng, n, w)
            y_vk[v] += x
            y_kb[:, b] += x
    return y_vk, y_kb


def backward_l(rng, y_kt, theta, pi, M, tau0, nu):
    """Backward pass of the auxiliary counts for the latent gamma chain."""
    K, T = y_kt.shape
    l_kk = np.zeros((T, K, K), dtype=np.int64)
    l_dot = np.zeros((T + 1, K), dtype=np.int64)
    l_first = np.zeros(K, dtype=np.int64)
    w = [0.0] * K
    for t in range(T - 1, 0, -1):
        P = pi[(t - 1) // M]
        for k in range(K):
            m = int(y_kt[k, t] + l_dot[t + 1, k])
            if m == 0:
                continue
            s = 0.0
            for k2 in range(K):
                w[k2] = float(P[k, k2]) * float(theta[k2, t - 1])
                s += w[k2]
            lk = crt(rng, m, tau0 * s)
            x = mult(rng, lk, w)
            l_kk[t, k] = x
            l_dot[t] += x
    for k in range(K):
        l_first[k] = crt(rng, int(y_kt[k, 0] + l_dot[1, k]), tau0 * float(nu[k]))
    return l_kk, l_dot, l_first


def forward_theta(rng, y_kt, l_dot, pi, M, tau0, nu, delta, zeta):
    K, T = y_kt.shape
    theta = np.empty((K, T))
    rate = tau0 + float(delta[0]) + float(zeta[1]) * tau0
    for k in range(K):
        shape = float(y_kt[k, 0] + l_dot[1, k]) + tau0 * float(nu[k])
        x = rng.standard_gamma(shape) / rate
        theta[k, 0] = x if x > FLOOR else FLOOR
    for t in range(1, T):
        P = pi[(t - 1) // M]
        rate = tau0 + float(delta[t]) + float(zeta[t + 1]) * tau0
        for k in range(K):
            s = 0.0
            for k2 in range(K):
                s += float(P[k, k2]) * theta[k2, t - 1]
            shape = float(y_kt[k, t] + l_dot[t + 1, k]) + tau0 * s
            x = rng.standard_gamma(shape) / rate
            theta[k, t] = x if x > FLOOR else FLOOR
    return theta

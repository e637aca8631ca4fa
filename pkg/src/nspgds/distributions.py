"""Seeded samplers and probability-mass oracles.

Random numbers come from counter-based Philox streams. A stream is keyed on
(seed, stream_id), and the stream id packs a variable tag, a flat index and
the sweep number, so any draw can be reproduced without replaying earlier
ones and the result does not depend on how work is split across threads.

The augmentation distributions (CRT, sum-logarithmic, Bessel, shifted
confluent hypergeometric) are drawn by the kernels in ``kernels``; this
module validates parameters and adds the pmf oracles used in tests.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

FLOOR = 1e-300
MASK64 = (1 << 64) - 1

# variable tags for stream derivation; values are part of the file formats
# (checkpoints replay streams), so never renumber them
TAGS = {
    'init': 1, 'generate': 2, 'mask': 3, 'impute': 4, 'allocate': 5,
    'phi': 6, 'delta': 7, 'backward': 8, 'chain': 9, 'nu': 10, 'pi': 11,
    'theta': 12, 'geweke': 13, 'test': 14, 'cparam': 15,
}


class ParameterError(ValueError):
    """A distribution parameter is outside its domain."""


def stream_id(tag, index=0, sweep=0):
    """Pack (tag, index, sweep) into one 64-bit id: 8 | 24 | 32 bits."""
    code = TAGS[tag] if isinstance(tag, str) else int(tag)
    if not 0 <= code < (1 << 8):
        raise ParameterError('tag out of range: %r' % (tag,))
    if not 0 <= index < (1 << 24):
        raise ParameterError('stream index out of range: %r' % (index,))
    if not 0 <= sweep < (1 << 32):
        raise ParameterError('sweep out of range: %r' % (sweep,))
    return (code << 56) | (index << 32) | sweep


class RngStream:
    """A reproducible random stream identified by (seed, stream_id)."""

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return 'RngStream(seed=%d, stream_id=%#x)' % (self.seed, self.stream_id)


def rng_for(seed, tag, index=0, sweep=0):
    """Generator for variable `tag`, flat index `index` at sweep `sweep`."""
    return RngStream(seed, stream_id(tag, index, sweep)).generator


def _check_positive(name, x, allow_zero=False):
    x = np.asarray(x, dtype=np.float64)
    bad = ~np.isfinite(x) | ((x < 0) if allow_zero else (x <= 0))
    if np.any(bad):
        raise ParameterError('%s must be %s and finite, got %r'
                             % (name, 'nonnegative' if allow_zero else 'positive', x[bad].ravel()[:3]))
    return x


# standard draws

def gamma(rng, shape, rate, size=None):
    """Gamma(shape, rate) draws floored at 1e-300."""
    shape = _check_positive('shape', shape)
    rate = _check_positive('rate', rate)
    return np.maximum(rng.standard_gamma(shape, size=size) / rate, FLOOR)


def beta(rng, a, b, size=None):
    _check_positive('a', a)
    _check_positive('b', b)
    return rng.beta(a, b, size=size)


def poisson(rng, lam, size=None):
    lam = _check_positive('rate', lam, allow_zero=True)
    return rng.poisson(lam, size=size)


def binomial(rng, n, p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p) | (p < 0) | (p > 1)):
        raise ParameterError('binomial probability outside [0, 1]')
    if np.any(np.asarray(n) < 0):
        raise ParameterError('binomial trials must be nonnegative')
    return rng.binomial(n, p)


def multinomial(rng, n, p):
    """Multinomial(n, p); p may be unnormalised nonnegative weights."""
    p = _check_positive('weights', p, allow_zero=True)
    if p.ndim != 1 or p.sum() <= 0:
        raise ParameterError('multinomial weights must be a nonzero vector')
    if int(n) < 0:
        raise ParameterError('multinomial trials must be nonnegative')
    return kernels.mult(rng, int(n), p)


def dirichlet(rng, conc):
    """Dirichlet draw computed in log space so tiny concentrations do not
    underflow to an all-zero vector; entries floored at 1e-300."""
    conc = _check_positive('concentration', conc)
    if conc.ndim != 1:
        raise ParameterError('concentration must be a vector')
    return kernels.dirichlet(rng, conc)


def dirichlet_columns(rng, conc):
    """Independent Dirichlet draw for every column of a K1 x K matrix."""
    conc = _check_positive('concentration', conc)
    out = np.empty_like(conc)
    for k in range(conc.shape[1]):
        out[:, k] = kernels.dirichlet(rng, conc[:, k])
    return out


# augmentation distributions

def sample_crt(rng, y, a):
    """Chinese restaurant table count: sum of Bernoulli(a / (a + n - 1))."""
    if int(y) < 0:
        raise ParameterError('CRT customers must be nonnegative')
    if not (a > 0 and math.isfinite(a)):
        raise ParameterError('CRT concentration must be positive, got %r' % (a,))
    return kernels.crt(rng, int(y), float(a))


def sample_crt_many(rng, y, a):
    y = np.asarray(y, dtype=np.int64)
    a = np.asarray(a, dtype=np.float64)
    if np.any(y < 0):
        raise ParameterError('CRT customers must be nonnegative')
    active = np.broadcast_to(a, y.shape)[y > 0]
    if np.any(~np.isfinite(active) | (active <= 0)):
        raise ParameterError('CRT concentration must be positive')
    return kernels.crt_many(rng, y, a)


def sample_sumlog(rng, l, p):
    """Sum of l logarithmic(p) draws, each by cdf inversion."""
    if not 0 < p < 1:
        raise ParameterError('logarithmic p must be in (0, 1), got %r' % (p,))
    if int(l) < 0:
        raise ParameterError('number of terms must be nonnegative')
    return kernels.sumlog(rng, int(l), float(p))


def sample_bessel(rng, nu, a):
    """Bessel(nu, a): P(n) ∝ (a/2)^(2n+nu) / (n! Γ(n+nu+1)), n >= 0."""
    if not (nu > -1 and math.isfinite(nu)):
        raise ParameterError('Bessel order must exceed -1, got %r' % (nu,))
    if not (a >= 0 and math.isfinite(a)):
        raise ParameterError('Bessel argument must be nonnegative, got %r' % (a,))
    return kernels.bessel(rng, float(nu), float(a))


def sample_sch(rng, h, mu):
    """Shifted confluent hypergeometric: P(n) ∝ mu^n Γ(n+h) / (Γ(n) n!), n >= 1.

    This is the law of g given h when g ~ Pois(λ), h | g ~ NB(g, p) and
    mu = λ(1 - p): the joint is λ^g/g! · Γ(h+g)/(h! Γ(g)) p^h (1-p)^g, which
    as a function of g >= 1 is proportional to the pmf above.
    """
    if int(h) < 1 or int(h) != h:
        raise ParameterError('SCH h must be a positive integer, got %r' % (h,))
    if not (mu > 0 and math.isfinite(mu)):
        raise ParameterError('SCH mu must be positive, got %r' % (mu,))
    return kernels.sch(rng, int(h), float(mu))


# pmf oracles

@dataclass
class DiscretePmf:
    support_offset: int
    weights: np.ndarray

    @property
    def support(self):
        return self.support_offset + np.arange(len(self.weights))

    def pmf(self, n):
        n = np.asarray(n) - self.support_offset
        out = np.zeros(n.shape)
        ok = (n >= 0) & (n < len(self.weights))
        out[ok] = self.weights[n[ok]]
        return out

    def mean(self):
        return float(np.dot(self.support, self.weights))


def _table_from_logw(lo, logw_fn, tail=1e-12, start=None):
    # walk outward from the mode until the relative weight drops below tail
    # squared, which leaves truncated mass far below `tail`
    mode = lo if start is None else max(lo, start)
    lm = logw_fn(mode)
    while logw_fn(mode + 1) > lm:
        mode += 1
        lm = logw_fn(mode)
    cut = math.log(tail) * 2
    left = mode
    while left > lo and logw_fn(left - 1) - lm > cut:
        left -= 1
    right = mode
    while logw_fn(right + 1) - lm > cut:
        right += 1
    lw = np.array([logw_fn(n) for n in range(left, right + 1)])
    w = np.exp(lw - lw.max())
    return DiscretePmf(left, w / w.sum())


def bessel_pmf(nu, a, tail=1e-12):
    if a == 0:
        return DiscretePmf(0, np.array([1.0]))
    la = math.log(a / 2)

    def lw(n):
        return (2 * n + nu) * la - math.lgamma(n + 1) - math.lgamma(n + nu + 1)
    return _table_from_logw(0, lw, tail, start=int((math.sqrt(nu * nu + a * a) - nu) / 2))


def sch_pmf(h, mu, tail=1e-12):
    lmu = math.log(mu)

    def lw(n):
        return n * lmu + math.lgamma(n + h) - math.lgamma(n) - math.lgamma(n + 1)
    return _table_from_logw(1, lw, tail)


def logarithmic_pmf(p, tail=1e-12):
    c = -1.0 / math.log1p(-p)

    def lw(n):
        return math.log(c) + n * math.log(p) - math.log(n)
    return _table_from_logw(1, lw, tail)


def crt_pmf(y, a):
    """Exact CRT pmf via unsigned Stirling numbers of the first kind."""
    s = [1.0]
    for n in range(y):
        # coefficients of a(a+1)...(a+n): multiply by (a + n)
        nxt = [0.0] * (len(s) + 1)
        for j, c in enumerate(s):
            nxt[j] += c * n
            nxt[j + 1] += c
        s = nxt
    w = np.array([c * a ** j for j, c in enumerate(s)])
    return DiscretePmf(0, w / w.sum())


def nb_logpmf(n, r, p):
    """log NB(n; r, p) with mean r p / (1 - p); n and r broadcast."""
    n = np.asarray(n, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    lg = np.vectorize(math.lgamma, otypes=[float])
    return lg(n + r) - lg(n + 1) - lg(r) + n * math.log(p) + r * math.log1p(-p)

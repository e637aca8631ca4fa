"""Data-augmented Gibbs sampler.

One sweep:

1. impute masked cells, allocate counts to factors, update Φ and δ, ζ;
2. backward pass of the auxiliary counts l for the gamma chain, including
   the first-step CRT count that carries the ν likelihood;
3. transition block, with θ integrated out: auxiliaries of the Dirichlet
   Markov chain drawn backward over intervals, then the chain's global
   parameters, then ν, ξ, β, then the transition matrices forward;
4. θ forward in time.

Steps 3 and 4 together draw (Π, chain parameters, ν, ξ, β, θ) from their
joint conditional given the auxiliary counts. Quantities that a step
integrates out are always redrawn before anything conditions on them, which
is what keeps the partially collapsed updates exact.
"""
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, kernels
from .distributions import FLOOR, ParameterError, dirichlet_columns, gamma, rng_for
from .model import CountData, Dims, Hyperparameters, State, prior_alpha, rates, sample_prior, transition_rate

CKPT_HEADER = 'nspgds-ckpt-v1'
Q_MAX = 1.0 - 1e-12
ALLOC_CHUNK = 8  # time steps per allocation stream


class InvariantError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 100
    seed: int = 0
    debug_invariants: bool = False
    threads: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        self.iterations, self.burn_in, self.thin = int(self.iterations), int(self.burn_in), int(self.thin)
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ParameterError('need 0 <= burn_in < iterations')
        if self.thin < 1:
            raise ParameterError('thin must be at least 1')
        if int(self.threads) < 1:
            raise ParameterError('threads must be at least 1')


@dataclass
class Aux:
    y: np.ndarray = None          # working counts with masked cells imputed
    y_vk: np.ndarray = None
    y_kt: np.ndarray = None
    zeta: np.ndarray = None
    l_kk: np.ndarray = None       # T x K x K, row 0 unused
    l_dot: np.ndarray = None      # (T+1) x K column margins
    l_first: np.ndarray = None    # K, CRT counts of the first step
    L: np.ndarray = None          # I x K x K per-interval sums
    n: np.ndarray = None          # I x K x K counts on each transition matrix
    q: np.ndarray = None          # I x K
    h: np.ndarray = None          # I x K x K
    g: np.ndarray = None          # (I-1) x K x K
    g_kkk: np.ndarray = None      # (I-1) x K x K x K, [j, k1, k2, k]
    n_k: np.ndarray = None
    rho_k: np.ndarray = None

    def to_dict(self):
        return {k: v.tolist() for k, v in asdict(self).items() if v is not None}


# observation side

def impute_missing(state, data, rng):
    y = data.counts.copy()
    miss = ~data.mask
    if miss.any():
        y[miss] = rng.poisson(rates(state)[miss])
    return y


def allocate_token_counts(state, y, seed, sweep, threads=1):
    """Multinomial split of every count over the K factors.

    Time is cut into fixed chunks, each with its own stream, so the result
    does not depend on the number of threads."""
    T = y.shape[1]
    starts = list(range(0, T, ALLOC_CHUNK))

    def run(ci):
        t0 = starts[ci]
        t1 = min(t0 + ALLOC_CHUNK, T)
        rng = rng_for(seed, 'allocate', ci, sweep)
        return kernels.allocate(rng, y[:, t0:t1], state.phi, state.theta[:, t0:t1])

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, range(len(starts))))
    else:
        parts = [run(ci) for ci in range(len(starts))]
    y_vk = sum(p[0] for p in parts)
    y_kt = np.concatenate([p[1] for p in parts], axis=1)
    return y_vk, y_kt


def sample_phi(y_vk, epsilon0, rng):
    return dirichlet_columns(rng, epsilon0 + y_vk)


def sample_delta(theta, y_kt, epsilon0, rng):
    return gamma(rng, epsilon0 + y_kt.sum(0), epsilon0 + theta.sum(0))


def compute_zeta(delta, tau0):
    T = len(delta)
    zeta = np.zeros(T + 1)
    for t in range(T - 1, -1, -1):
        zeta[t] = np.log(1.0 + delta[t] / tau0 + zeta[t + 1])
    return zeta


# gamma chain

def backward_sample_auxiliary(state, aux, hyper, dims, rng):
    aux.l_kk, aux.l_dot, aux.l_first = kernels.backward_l(
        rng, aux.y_kt, state.theta, state.pi, dims.M, hyper.tau0, state.nu)


def interval_sums(l_kk, M, I):
    """Counts of transitions that used each interval's matrix: step t uses
    the matrix of the interval holding t-1."""
    T, K = l_kk.shape[:2]
    L = np.zeros((I, K, K), dtype=np.int64)
    for t in range(1, T):
        L[(t - 1) // M] += l_kk[t]
    return L


def sample_theta(state, aux, hyper, dims, rng):
    return kernels.forward_theta(rng, aux.y_kt, aux.l_dot, state.pi, dims.M, hyper.tau0,
                                 state.nu, state.delta, aux.zeta)


# transition matrices

def _beta_q(rng, a, b):
    """q ~ Beta(a, b) elementwise; exactly 0 where a = 0, clamped below 1."""
    a = np.asarray(a, dtype=np.float64)
    q = np.zeros(a.shape)
    on = a > 0
    if on.any():
        q[on] = np.minimum(rng.beta(a[on], np.broadcast_to(b, a.shape)[on]), Q_MAX)
    return q


def _split(rng, g, weights):
    """Split counts g[k1, k] over k2 with weights[k1, k2, k]; returns [k1, k2, k]."""
    K = g.shape[0]
    out = np.zeros((K, K, K), dtype=np.int64)
    for k1 in range(K):
        for k in range(K):
            if g[k1, k] > 0:
                out[k1, :, k] = kernels.mult(rng, int(g[k1, k]), weights[k1, :, k])
    return out


def _split_weights(psi_j, pi_j):
    # weights[k1, k2, k] = psi[k, k1, k2] pi[k2, k]
    return np.einsum('kab,bk->abk', psi_j, pi_j)


def first_level_aux(state, aux, rng):
    """Augmentation of the first transition matrix against its ν/ξ prior."""
    a1 = prior_alpha(state.nu, state.xi)
    aux.q[0] = _beta_q(rng, aux.n[0].sum(0), a1.sum(0))
    aux.h[0] = kernels.crt_many(rng, aux.n[0], a1)


def sample_pi_columns(prior_conc, counts, rng):
    """Columns of a transition matrix from Dir(prior + counts)."""
    return dirichlet_columns(rng, np.maximum(prior_conc, FLOOR) + counts)


def sample_pi_last_interval(state, aux, hyper, rng):
    I = state.pi.shape[0]
    K = state.pi.shape[1]
    if I == 1:
        prior = prior_alpha(state.nu, state.xi)
    elif hyper.chain == 'dir-dir':
        prior = state.eta * K * state.pi[I - 2]
    else:
        prior = state.alpha[I - 1]
    return sample_pi_columns(prior, aux.L[I - 1], rng)


def sample_nu_xi_beta(state, aux, hyper, rng):
    """ν, ξ, β given the first-level augmentation, with θ and the transition
    matrices integrated out."""
    K = len(state.nu)
    e0, tau0 = hyper.epsilon0, hyper.tau0
    x = -np.log1p(-aux.q[0])
    h = aux.h[0]
    nu = state.nu.copy()
    xi = float(gamma(rng, e0 + np.trace(h), e0 + np.dot(nu, x)))
    n_k = np.zeros(K)
    rho_k = np.zeros(K)
    for k in range(K):
        n_k[k] = h[:, k].sum() + h[k, :].sum() - h[k, k] + aux.l_first[k]
        others = nu.sum() - nu[k]
        rho_k[k] = tau0 * aux.zeta[0] + x[k] * (xi + others) + (np.dot(nu, x) - nu[k] * x[k])
        nu[k] = float(gamma(rng, hyper.gamma0 / K + n_k[k], state.beta + rho_k[k]))
    state.nu = nu
    state.xi = xi
    state.beta = float(gamma(rng, e0 + hyper.gamma0, e0 + nu.sum()))
    aux.n_k, aux.rho_k = n_k, rho_k


def _setup_chain_aux(aux, I, K):
    aux.n = aux.L.copy()
    aux.q = np.zeros((I, K))
    aux.h = np.zeros((I, K, K), dtype=np.int64)
    aux.g = np.zeros((max(I - 1, 0), K, K), dtype=np.int64)
    aux.g_kkk = np.zeros((max(I - 1, 0), K, K, K), dtype=np.int64)


def sample_static(state, aux, hyper, dims, streams):
    I, K = state.pi.shape[:2]
    _setup_chain_aux(aux, I, K)
    first_level_aux(state, aux, streams('chain'))
    sample_nu_xi_beta(state, aux, hyper, streams('nu'))
    rng = streams('pi')
    state.pi[0] = sample_pi_columns(prior_alpha(state.nu, state.xi), aux.n[0], rng)


def sample_chain_dir_dir(state, aux, hyper, dims, streams):
    I, K = state.pi.shape[:2]
    _setup_chain_aux(aux, I, K)
    rng = streams('chain')
    eK = state.eta * K
    for i in range(I - 1, 0, -1):
        aux.q[i] = _beta_q(rng, aux.n[i].sum(0), eK)
        aux.h[i] = kernels.crt_many(rng, aux.n[i], np.maximum(eK * state.pi[i - 1], FLOOR))
        aux.n[i - 1] += aux.h[i]
    first_level_aux(state, aux, rng)
    state.eta = float(gamma(rng, hyper.e0 + aux.h[1:].sum(),
                            hyper.f0 - K * np.log1p(-aux.q[1:]).sum()))
    sample_nu_xi_beta(state, aux, hyper, streams('nu'))
    rng = streams('pi')
    state.pi[0] = sample_pi_columns(prior_alpha(state.nu, state.xi), aux.n[0], rng)
    for i in range(1, I):
        state.pi[i] = sample_pi_columns(state.eta * K * state.pi[i - 1], aux.n[i], rng)


def sample_chain_dir_gam_dir(state, aux, hyper, dims, streams):
    I, K = state.pi.shape[:2]
    e0 = hyper.epsilon0
    _setup_chain_aux(aux, I, K)
    rng = streams('chain')
    for i in range(I - 1, 0, -1):
        j = i - 1
        a = state.alpha[i]
        aux.q[i] = _beta_q(rng, aux.n[i].sum(0), a.sum(0))
        aux.h[i] = kernels.crt_many(rng, aux.n[i], a)
        lam = np.maximum(transition_rate(state.gamma[j], state.psi[j], state.pi[j]), FLOOR)
        aux.g[j] = kernels.crt_many(rng, aux.h[i], lam)
        aux.g_kkk[j] = _split(rng, aux.g[j], _split_weights(state.psi[j], state.pi[j]))
        aux.n[j] += aux.g_kkk[j].sum(0)
    first_level_aux(state, aux, rng)
    rng = streams('cparam')
    for j in range(I - 1):
        # c with α present, then γ and ψ with α and Π integrated out
        state.c[j] = gamma(rng, e0 + state.gamma[j], e0 + state.alpha[j + 1].sum(0))
        omega = np.log1p(-np.log1p(-aux.q[j + 1]) / state.c[j])
        state.gamma[j] = gamma(rng, e0 + aux.g[j].sum(0), e0 + omega)
        for k in range(K):
            state.psi[j, k] = dirichlet_columns(rng, e0 + aux.g_kkk[j, :, :, k])
    sample_nu_xi_beta(state, aux, hyper, streams('nu'))
    rng = streams('pi')
    state.alpha[0] = prior_alpha(state.nu, state.xi)
    state.pi[0] = sample_pi_columns(state.alpha[0], aux.n[0], rng)
    for i in range(1, I):
        j = i - 1
        lam = np.maximum(transition_rate(state.gamma[j], state.psi[j], state.pi[j]), FLOOR)
        state.alpha[i] = gamma(rng, lam + aux.h[i], state.c[j][None, :] - np.log1p(-aux.q[i])[None, :])
        state.pi[i] = sample_pi_columns(state.alpha[i], aux.n[i], rng)


def sample_pr_alpha_g(rng, g_old, h, lam, c, x, eps_alpha):
    """Joint update of (α, g) for one transition of the PR-Gam-Dir chain.

    h are the CRT counts on α, x = -ln(1 - q) per column, c the column
    rates. With eps_alpha > 0, α is drawn given the previous g and then g
    given α (Bessel). With eps_alpha = 0 the Bessel order would be -1, so g
    is drawn first with α integrated out (Poisson when h = 0, SCH otherwise)
    and α given g afterwards."""
    K = h.shape[0]
    g = np.zeros((K, K), dtype=np.int64)
    rate = (c + x)[None, :]
    if eps_alpha > 0:
        alpha = gamma(rng, g_old + eps_alpha + h, rate)
        for k1 in range(K):
            for k in range(K):
                g[k1, k] = kernels.bessel(rng, eps_alpha - 1.0, 2.0 * np.sqrt(alpha[k1, k] * c[k] * lam[k1, k]))
    else:
        mu = c[None, :] * lam / rate
        for k1 in range(K):
            for k in range(K):
                if h[k1, k] == 0:
                    g[k1, k] = rng.poisson(mu[k1, k])
                else:
                    g[k1, k] = kernels.sch(rng, int(h[k1, k]), float(mu[k1, k]))
        shape = (g + h).astype(np.float64)
        alpha = np.maximum(rng.standard_gamma(shape) / rate, FLOOR)
    return alpha, g


def sample_chain_pr_gam_dir(state, aux, hyper, dims, streams):
    I, K = state.pi.shape[:2]
    e0, ea = hyper.epsilon0, hyper.eps_alpha
    _setup_chain_aux(aux, I, K)
    rng = streams('chain')
    for i in range(I - 1, 0, -1):
        j = i - 1
        aux.q[i] = _beta_q(rng, aux.n[i].sum(0), state.alpha[i].sum(0))
        aux.h[i] = kernels.crt_many(rng, aux.n[i], state.alpha[i])
        x = -np.log1p(-aux.q[i])
        c = state.c[j]
        lam = np.maximum(transition_rate(state.gamma[j], state.psi[j], state.pi[j]), FLOOR)
        alpha, g = sample_pr_alpha_g(rng, state.g[j], aux.h[i], lam, c, x, ea)
        state.alpha[i] = alpha
        state.g[j] = g
        aux.g[j] = g
        aux.g_kkk[j] = _split(rng, g, _split_weights(state.psi[j], state.pi[j]))
        aux.n[j] += aux.g_kkk[j].sum(0)
        state.gamma[j] = gamma(rng, e0 + g.sum(0), e0 + 1.0)
        for k in range(K):
            state.psi[j, k] = dirichlet_columns(rng, e0 + aux.g_kkk[j, :, :, k])
        state.c[j] = gamma(rng, e0 + g.sum(0) + K * ea, e0 + alpha.sum(0))
    first_level_aux(state, aux, rng)
    sample_nu_xi_beta(state, aux, hyper, streams('nu'))
    rng = streams('pi')
    state.alpha[0] = prior_alpha(state.nu, state.xi)
    for i in range(I):
        state.pi[i] = sample_pi_columns(state.alpha[i], aux.n[i], rng)


CHAIN_SAMPLERS = {
    'static': sample_static,
    'dir-dir': sample_chain_dir_dir,
    'dir-gam-dir': sample_chain_dir_gam_dir,
    'pr-gam-dir': sample_chain_pr_gam_dir,
}


# invariants

def _simplex(name, x, axis):
    s = x.sum(axis)
    if not np.all(np.isfinite(x)) or np.any(x <= 0) or np.max(np.abs(s - 1)) > 1e-9:
        raise InvariantError('%s: entries must be positive and sum to 1 (max error %.3g)'
                             % (name, np.max(np.abs(s - 1))))


def _positive(name, x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise InvariantError('%s: values must be positive and finite' % name)


def check_step(step, state, aux, hyper, dims):
    """Invariants that must hold right after conditional `step`."""
    if step == 'allocate_token_counts':
        if not np.array_equal(aux.y_kt.sum(0), aux.y.sum(0)) or \
                not np.array_equal(aux.y_vk.sum(1), aux.y.sum(1)) or \
                np.any(aux.y_kt < 0) or np.any(aux.y_vk < 0):
            raise InvariantError('allocate_token_counts: allocations do not conserve the counts')
    elif step == 'sample_phi':
        _simplex('sample_phi: phi columns', state.phi, 0)
    elif step == 'sample_delta':
        _positive('sample_delta: delta', state.delta)
    elif step == 'compute_zeta':
        z, d = aux.zeta, state.delta
        T = len(d)
        if z[T] != 0 or np.any(z < 0):
            raise InvariantError('compute_zeta: zeta must be nonnegative with zeta[T] = 0')
        for t in range(T):
            if z[t] != np.log(1.0 + d[t] / hyper.tau0 + z[t + 1]):
                raise InvariantError('compute_zeta: recursion broken at t=%d' % t)
    elif step == 'backward_sample_auxiliary':
        T = aux.y_kt.shape[1]
        if np.any(aux.l_kk < 0) or np.any(aux.l_kk[0] != 0) or np.any(aux.l_dot[T] != 0):
            raise InvariantError('backward_sample_auxiliary: negative or misplaced counts')
        if not np.array_equal(aux.l_dot[1:T], aux.l_kk[1:].sum(1)) or np.any(aux.l_dot[0] != 0):
            raise InvariantError('backward_sample_auxiliary: column margins inconsistent')
        rows = aux.l_kk[1:].sum(2)              # l_{k.} per step
        m = aux.y_kt[:, 1:].T + aux.l_dot[2:T + 1]
        if np.any(rows > m) or np.any((rows > 0) != (m > 0)):
            raise InvariantError('backward_sample_auxiliary: CRT count outside [1, customers]')
        m1 = aux.y_kt[:, 0] + aux.l_dot[1]
        if np.any(aux.l_first > m1) or np.any((aux.l_first > 0) != (m1 > 0)):
            raise InvariantError('backward_sample_auxiliary: first-step CRT count out of range')
    elif step == 'transition_block':
        name = 'transition block (%s)' % hyper.chain
        for i in range(state.pi.shape[0]):
            _simplex('%s: pi[%d] columns' % (name, i), state.pi[i], 0)
        _positive('%s: nu' % name, state.nu)
        _positive('%s: xi, beta' % name, [state.xi, state.beta])
        if not np.array_equal(aux.L.sum(0), aux.l_kk.sum(0)):
            raise InvariantError('%s: interval sums do not add up to the step counts' % name)
        if np.any(aux.h > aux.n) or np.any((aux.h > 0) != (aux.n > 0)):
            raise InvariantError('%s: CRT count h outside [1, n]' % name)
        if np.any((aux.q < 0) | (aux.q >= 1)):
            raise InvariantError('%s: q outside [0, 1)' % name)
        if hyper.chain == 'dir-dir':
            _positive('%s: eta' % name, state.eta)
        if hyper.chain in ('dir-gam-dir', 'pr-gam-dir'):
            _positive('%s: alpha' % name, state.alpha)
            _positive('%s: gamma, c' % name, np.concatenate([state.gamma.ravel(), state.c.ravel()]))
            for j in range(state.psi.shape[0]):
                for k in range(state.psi.shape[1]):
                    _simplex('%s: psi[%d, %d] slices' % (name, j, k), state.psi[j, k], 0)
            if not np.array_equal(aux.g_kkk.sum(2), aux.g):
                raise InvariantError('%s: split of g does not conserve its totals' % name)
            if hyper.chain == 'dir-gam-dir' and (np.any(aux.g > aux.h[1:]) or
                                                 np.any((aux.g > 0) != (aux.h[1:] > 0))):
                raise InvariantError('%s: CRT count g outside [1, h]' % name)
    elif step == 'sample_theta':
        _positive('sample_theta: theta', state.theta)


# sweep

def gibbs_sweep(state, data, hyper, dims, seed, sweep, threads=1, debug=False, skip=()):
    """One pass over all conditionals; mutates and returns (state, aux)."""
    def streams(tag, index=0):
        return rng_for(seed, tag, index, sweep)

    def done(step):
        if debug:
            check_step(step, state, aux, hyper, dims)

    aux = Aux()
    aux.y = impute_missing(state, data, streams('impute'))
    aux.y_vk, aux.y_kt = allocate_token_counts(state, aux.y, seed, sweep, threads)
    done('allocate_token_counts')
    if 'phi' not in skip:
        state.phi = sample_phi(aux.y_vk, hyper.epsilon0, streams('phi'))
        done('sample_phi')
    if 'delta' not in skip:
        state.delta = sample_delta(state.theta, aux.y_kt, hyper.epsilon0, streams('delta'))
        done('sample_delta')
    aux.zeta = compute_zeta(state.delta, hyper.tau0)
    done('compute_zeta')
    backward_sample_auxiliary(state, aux, hyper, dims, streams('backward'))
    done('backward_sample_auxiliary')
    aux.L = interval_sums(aux.l_kk, dims.M, dims.I)
    if 'transition' not in skip:
        CHAIN_SAMPLERS[hyper.chain](state, aux, hyper, dims, streams)
        done('transition_block')
    if 'theta' not in skip:
        state.theta = sample_theta(state, aux, hyper, dims, streams('theta'))
        done('sample_theta')
    return state, aux


# posterior summary and driver

SAMPLE_FIELDS = ('theta', 'phi', 'pi', 'delta', 'nu', 'xi', 'beta', 'eta')


class PosteriorSummary:
    """Retained samples; means are computed from them on demand."""

    def __init__(self, dims, samples=None, sweeps=None):
        self.dims = dims
        self.samples = samples if samples is not None else []
        self.sweeps = sweeps if sweeps is not None else []

    def add(self, state, sweep):
        s = {}
        for name in SAMPLE_FIELDS:
            x = getattr(state, name)
            if x is not None:
                s[name] = x.copy() if isinstance(x, np.ndarray) else float(x)
        self.samples.append(s)
        self.sweeps.append(int(sweep))

    def __len__(self):
        return len(self.samples)

    def mean(self, name):
        if not self.samples:
            raise ValueError('no retained samples')
        acc = None
        for s in self.samples:
            acc = np.array(s[name], dtype=np.float64) if acc is None else acc + s[name]
        return acc / len(self.samples)

    def sample_rates(self, s):
        return (s['phi'] @ s['theta']) * s['delta'][None, :]

    def mean_rates(self):
        if not self.samples:
            raise ValueError('no retained samples')
        acc = None
        for s in self.samples:
            r = self.sample_rates(s)
            acc = r if acc is None else acc + r
        return acc / len(self.samples)

    def to_dict(self):
        return {
            'dims': asdict(self.dims),
            'sweeps': self.sweeps,
            'samples': [{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in s.items()}
                        for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d):
        samples = [{k: (np.array(v, dtype=np.float64) if isinstance(v, list) else v) for k, v in s.items()}
                   for s in d['samples']]
        return cls(Dims(**d['dims']), samples, list(d['sweeps']))


def config_hash(hyper, config, data):
    h = hashlib.sha256()
    h.update(json.dumps(hyper.as_dict(), sort_keys=True).encode())
    h.update(json.dumps([config.seed, config.burn_in, config.thin]).encode())
    h.update(np.ascontiguousarray(data.counts, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(data.mask, dtype=np.uint8).tobytes())
    return h.hexdigest()


def save_checkpoint(path, hyper, config, data, state, next_sweep, summary, aux=None):
    body = {
        'version': __version__,
        'config_hash': config_hash(hyper, config, data),
        'next_sweep': int(next_sweep),
        'seed': int(config.seed),
        'hyper': hyper.as_dict(),
        'state': state.to_dict(),
        'summary': summary.to_dict(),
        'aux': aux.to_dict() if aux is not None else None,
    }
    tmp = path + '.tmp'
    with open(tmp, 'w') as f:
        f.write(CKPT_HEADER + '\n')
        json.dump(body, f, sort_keys=True)
        f.write('\n')
    os.replace(tmp, path)


def load_checkpoint(path, hyper=None, config=None, data=None):
    with open(path) as f:
        header = f.readline().strip()
        if header != CKPT_HEADER:
            raise ParameterError('checkpoint %s has version %r, expected %r' % (path, header, CKPT_HEADER))
        body = json.loads(f.read())
    if hyper is not None and body['config_hash'] != config_hash(hyper, config, data):
        raise ParameterError('checkpoint %s was written for a different configuration or data' % path)
    return State.from_dict(body['state']), body['next_sweep'], PosteriorSummary.from_dict(body['summary'])


def initial_state(hyper, dims, data, seed):
    """A prior draw with δ rescaled so each step's modelled total matches the
    observed counts. Vague priors put the raw draw many orders of magnitude
    off the data, and imputing from it would swamp the first sweeps."""
    state = sample_prior(hyper, dims, rng_for(seed, 'init'))
    obs = data.mask
    base = (state.phi @ state.theta).sum(0)
    n_obs = obs.sum(0)
    per_cell = data.counts[obs].sum() / max(obs.sum(), 1)
    target = np.where(n_obs > 0, (data.counts * obs).sum(0) / np.maximum(n_obs, 1), per_cell) * data.V
    ok = base > 0
    state.delta = np.where(ok, np.maximum(target, 1.0) / np.where(ok, base, 1.0), state.delta)
    state.delta = np.maximum(state.delta, FLOOR)
    return state


def run_inference(config, hyper, data, checkpoint=None, resume=False, progress=None, skip=()):
    """Run the sampler; returns (PosteriorSummary, final State)."""
    dims = Dims.for_data(data.V, data.T, hyper)
    if resume and checkpoint and os.path.exists(checkpoint):
        state, start, summary = load_checkpoint(checkpoint, hyper, config, data)
    else:
        state = initial_state(hyper, dims, data, config.seed)
        start, summary = 0, PosteriorSummary(dims)
    aux = None
    for s in range(start, config.iterations):
        state, aux = gibbs_sweep(state, data, hyper, dims, config.seed, s, config.threads,
                                 config.debug_invariants, skip)
        if s >= config.burn_in and (s - config.burn_in + 1) % config.thin == 0:
            summary.add(state, s)
        if checkpoint and config.checkpoint_every and (s + 1) % config.checkpoint_every == 0:
            save_checkpoint(checkpoint, hyper, config, data, state, s + 1, summary, aux)
        if progress is not None:
            progress(s, state)
    if checkpoint:
        save_checkpoint(checkpoint, hyper, config, data, state, config.iterations, summary, aux)
    return summary, state

"""Model definition: hyperparameters, latent state, sub-interval indexing,
forward simulation and Poisson rates.

Time is 0-based in code. Step t (t >= 1) evolves from step t-1 with the
transition matrix of the interval containing t-1, i.e. ``pi[(t-1) // M]``.
Columns of every transition matrix are on the simplex: ``pi[i][:, k]`` is
where the mass of factor k moves to.

Arrays indexed by transition (psi, gamma, c and the Poisson-randomised g)
have a leading axis of length I-1; entry j belongs to the step from
interval j to interval j+1.
"""
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .distributions import FLOOR, ParameterError, dirichlet_columns, gamma, rng_for

CHAINS = ('dir-dir', 'dir-gam-dir', 'pr-gam-dir', 'static')
_ALIASES = {
    'dirdir': 'dir-dir', 'dir_dir': 'dir-dir',
    'dirgamdir': 'dir-gam-dir', 'dir_gam_dir': 'dir-gam-dir',
    'prgamdir': 'pr-gam-dir', 'pr_gam_dir': 'pr-gam-dir',
}


def chain_name(name):
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    if key not in CHAINS:
        raise ParameterError('unknown chain %r, expected one of %s' % (name, ', '.join(CHAINS)))
    return key


@dataclass
class Hyperparameters:
    K: int = 10
    M: int = 1
    tau0: float = 1.0
    gamma0: float = 50.0
    epsilon0: float = 0.1
    e0: float = 0.1
    f0: float = 0.1
    eps_alpha: float = 1.0
    chain: str = 'dir-dir'

    def __post_init__(self):
        self.chain = chain_name(self.chain)
        self.K = int(self.K)
        self.M = int(self.M)
        for name in ('tau0', 'gamma0', 'epsilon0', 'e0', 'f0'):
            x = float(getattr(self, name))
            if not (x > 0 and math.isfinite(x)):
                raise ParameterError('%s must be positive, got %r' % (name, x))
            setattr(self, name, x)
        self.eps_alpha = float(self.eps_alpha)
        if not (self.eps_alpha >= 0 and math.isfinite(self.eps_alpha)):
            raise ParameterError('eps_alpha must be nonnegative')
        if self.K < 1:
            raise ParameterError('K must be at least 1')
        if self.M < 1:
            raise ParameterError('M must be at least 1')

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Dims:
    V: int
    T: int
    K: int
    M: int

    def __post_init__(self):
        for name in ('V', 'T', 'K', 'M'):
            if int(getattr(self, name)) < 1:
                raise ParameterError('%s must be positive' % name)
            setattr(self, name, int(getattr(self, name)))

    @property
    def I(self):
        return -(-self.T // self.M)

    @classmethod
    def for_data(cls, V, T, hyper):
        # the static model is the single-interval special case
        M = T if hyper.chain == 'static' else min(hyper.M, T)
        return cls(V, T, hyper.K, M)


def interval_of(t, M, T=None):
    """1-based interval index of 1-based step t: ceil(t / M)."""
    if t < 1 or (T is not None and t > T):
        raise IndexError('time step %r out of range' % (t,))
    return -(-int(t) // int(M))


@dataclass
class CountData:
    counts: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            raise ParameterError('counts must be a V x T matrix')
        if np.any(self.counts < 0) or np.any(self.counts != np.round(self.counts)):
            raise ParameterError('counts must be nonnegative integers')
        self.counts = self.counts.astype(np.int64)
        if self.mask is None:
            self.mask = np.ones(self.counts.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.counts.shape:
            raise ParameterError('mask shape %s does not match counts %s'
                                 % (self.mask.shape, self.counts.shape))

    @property
    def V(self):
        return self.counts.shape[0]

    @property
    def T(self):
        return self.counts.shape[1]

    def with_mask(self, mask):
        return CountData(self.counts.copy(), mask)


_STATE_ARRAYS = ('theta', 'phi', 'pi', 'delta', 'nu', 'alpha', 'psi', 'gamma', 'c', 'g')


@dataclass
class State:
    theta: np.ndarray
    phi: np.ndarray
    pi: np.ndarray
    delta: np.ndarray
    nu: np.ndarray
    xi: float
    beta: float
    eta: float = None
    alpha: np.ndarray = None
    psi: np.ndarray = None
    gamma: np.ndarray = None
    c: np.ndarray = None
    g: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def copy(self):
        kw = {}
        for f in fields(self):
            x = getattr(self, f.name)
            kw[f.name] = x.copy() if isinstance(x, (np.ndarray, dict)) else x
        return State(**kw)

    def to_dict(self):
        out = {}
        for f in fields(self):
            if f.name == 'extra':
                continue
            x = getattr(self, f.name)
            if x is None:
                continue
            out[f.name] = x.tolist() if isinstance(x, np.ndarray) else float(x)
        return out

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for k, x in d.items():
            if k in _STATE_ARRAYS:
                kw[k] = np.array(x, dtype=np.int64 if k == 'g' else np.float64)
            else:
                kw[k] = float(x)
        return cls(**kw)


def prior_alpha(nu, xi):
    """Dirichlet concentrations of the first transition matrix:
    nu[k1] nu[k] off the diagonal and xi nu[k] on it (column k)."""
    a = np.outer(nu, nu)
    np.fill_diagonal(a, xi * nu)
    return np.maximum(a, FLOOR)


def transition_rate(gamma_j, psi_j, pi_j):
    """λ[k1, k] = gamma[k] Σ_k2 psi[k, k1, k2] pi[k2, k]."""
    return gamma_j[None, :] * np.einsum('kab,bk->ak', psi_j, pi_j)


def dir_dir_transition(rng, pi_prev, eta):
    """Next transition matrix of the Dirichlet-Dirichlet chain: every column
    is Dir(ηK times the previous column), so its mean is the previous matrix."""
    K = pi_prev.shape[1]
    return dirichlet_columns(rng, np.maximum(eta * K * pi_prev, FLOOR))


def sample_prior(hyper, dims, rng, fixed=None):
    """Draw every latent variable top-down from the prior.

    `fixed` optionally pins named quantities (eta, delta, xi, beta, nu) to
    given values, which is used to build well-conditioned synthetic data."""
    fixed = fixed or {}
    K, V, T, I, M = dims.K, dims.V, dims.T, dims.I, dims.M
    e0 = hyper.epsilon0
    beta = float(fixed.get('beta', gamma(rng, e0, e0)))
    xi = float(fixed.get('xi', gamma(rng, e0, e0)))
    nu = np.asarray(fixed['nu'], dtype=float) * np.ones(K) if 'nu' in fixed \
        else gamma(rng, hyper.gamma0 / K, beta, size=K)
    pi = np.empty((I, K, K))
    pi[0] = dirichlet_columns(rng, prior_alpha(nu, xi))
    st = dict(theta=None, phi=None, pi=pi, delta=None, nu=nu, xi=xi, beta=beta)
    if hyper.chain == 'dir-dir':
        eta = float(fixed.get('eta', gamma(rng, hyper.e0, hyper.f0)))
        for i in range(1, I):
            pi[i] = dir_dir_transition(rng, pi[i - 1], eta)
        st['eta'] = eta
    elif hyper.chain in ('dir-gam-dir', 'pr-gam-dir'):
        alpha = np.empty((I, K, K))
        alpha[0] = prior_alpha(nu, xi)
        psi = np.empty((I - 1, K, K, K))
        gam = np.empty((I - 1, K))
        c = np.empty((I - 1, K))
        g = np.zeros((I - 1, K, K), dtype=np.int64)
        for j in range(I - 1):
            gam[j] = gamma(rng, e0, e0, size=K)
            c[j] = gamma(rng, e0, e0, size=K)
            for k in range(K):
                psi[j, k] = dirichlet_columns(rng, np.full((K, K), e0))
            lam = transition_rate(gam[j], psi[j], pi[j])
            if hyper.chain == 'dir-gam-dir':
                alpha[j + 1] = gamma(rng, np.maximum(lam, FLOOR), c[j][None, :])
            else:
                g[j] = rng.poisson(lam)
                shape = g[j] + hyper.eps_alpha
                alpha[j + 1] = np.where(shape > 0, rng.standard_gamma(np.maximum(shape, FLOOR)), 0.0)
                alpha[j + 1] = np.maximum(alpha[j + 1] / c[j][None, :], FLOOR)
            pi[j + 1] = dirichlet_columns(rng, alpha[j + 1])
        st.update(alpha=alpha, psi=psi, gamma=gam, c=c)
        if hyper.chain == 'pr-gam-dir':
            st['g'] = g
    theta = np.empty((K, T))
    theta[:, 0] = gamma(rng, hyper.tau0 * nu, hyper.tau0)
    for t in range(1, T):
        shape = hyper.tau0 * pi[(t - 1) // M] @ theta[:, t - 1]
        theta[:, t] = gamma(rng, np.maximum(shape, FLOOR), hyper.tau0)
    st['theta'] = theta
    if 'delta' in fixed:
        st['delta'] = np.asarray(fixed['delta'], dtype=float) * np.ones(T)
    else:
        st['delta'] = gamma(rng, e0, e0, size=T)
    st['phi'] = dirichlet_columns(rng, np.full((V, K), e0))
    return State(**st)


def rates(state):
    """V x T matrix of Poisson rates δ^(t) Φ θ^(t)."""
    return (state.phi @ state.theta) * state.delta[None, :]


def predictive_rate(state, t):
    """Poisson rates for 1-based step t."""
    if not 1 <= t <= state.theta.shape[1]:
        raise IndexError('time step %r out of range' % (t,))
    return state.delta[t - 1] * (state.phi @ state.theta[:, t - 1])


def sample_counts(state, rng):
    return rng.poisson(rates(state)).astype(np.int64)


def generate_synthetic(hyper, dims, rng, fixed=None):
    """Sample (state, fully observed data) from the generative model.

    `rng` is a Generator or an integer seed."""
    if not isinstance(rng, np.random.Generator):
        rng = rng_for(rng, 'generate')
    state = sample_prior(hyper, dims, rng, fixed)
    return state, CountData(sample_counts(state, rng))


def log_likelihood(state, data):
    lam = rates(state)
    y = data.counts
    obs = data.mask
    lgam = np.vectorize(math.lgamma, otypes=[float])(y[obs] + 1.0)
    return float(np.sum(y[obs] * np.log(lam[obs]) - lam[obs] - lgam))

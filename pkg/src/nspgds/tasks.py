"""Evaluation tasks: smoothing, forecasting, metrics and the Geweke test."""
from dataclasses import dataclass

import numpy as np

from .distributions import ParameterError, rng_for
from .gibbs import SamplerConfig, gibbs_sweep, run_inference
from .model import CountData, Dims, Hyperparameters, generate_synthetic, sample_counts, sample_prior


def mask_for_smoothing(data, fraction=0.1, seed=0):
    """Hide a random `fraction` of cells, never two adjacent steps in a row.

    Cells are visited in random order and kept when both temporal
    neighbours in the same row are still observed."""
    if not 0 < fraction < 1:
        raise ParameterError('mask fraction must be in (0, 1)')
    V, T = data.counts.shape
    want = int(np.floor(fraction * V * T))
    if want == 0:
        return data.with_mask(np.ones((V, T), dtype=bool))
    rng = rng_for(seed, 'mask')
    hidden = np.zeros((V, T), dtype=bool)
    got = 0
    for cell in rng.permutation(V * T):
        v, t = divmod(int(cell), T)
        if (t > 0 and hidden[v, t - 1]) or (t + 1 < T and hidden[v, t + 1]):
            continue
        hidden[v, t] = True
        got += 1
        if got == want:
            break
    if got < want:
        raise ParameterError('cannot hide %d non-adjacent cells of a %dx%d matrix' % (want, V, T))
    return data.with_mask(~hidden)


def smooth_predict(summary, mask):
    """Posterior mean rate at every hidden cell, in row-major order."""
    return summary.mean_rates()[~np.asarray(mask, dtype=bool)]


def forecast(summary, steps):
    """V x steps matrix of forecast rates averaged over retained samples.

    Each sample rolls its last θ forward with the last transition matrix and
    scales by the mean δ of the last interval."""
    if steps < 1:
        raise ParameterError('forecast horizon must be at least 1')
    if not len(summary):
        raise ValueError('no retained samples')
    dims = summary.dims
    last = (dims.I - 1) * dims.M
    out = np.zeros((dims.V, steps))
    for s in summary.samples:
        P = s['pi'][-1]
        d = float(np.mean(s['delta'][last:]))
        th = s['theta'][:, -1]
        for j in range(steps):
            th = P @ th
            out[:, j] += d * (s['phi'] @ th)
    return out / len(summary)


def compute_metrics(truth, pred):
    """Mean absolute error and mean relative error |y - ŷ| / (y + 1)."""
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.size == 0:
        raise ValueError('no cells to evaluate')
    if truth.shape != pred.shape:
        raise ParameterError('truth and prediction sizes differ')
    err = np.abs(truth - pred)
    return {'MAE': float(err.mean()), 'MRE': float(np.mean(err / (truth + 1.0)))}


def run_smoothing(data, hyper, config, fraction=0.1, mask_seed=0, **kw):
    masked = data if not data.mask.all() else mask_for_smoothing(data, fraction, mask_seed)
    summary, state = run_inference(config, hyper, masked, **kw)
    pred = smooth_predict(summary, masked.mask)
    return compute_metrics(data.counts[~masked.mask], pred), summary, masked


def run_forecast(data, hyper, config, steps, **kw):
    if steps >= data.T:
        raise ParameterError('forecast horizon must be shorter than the series')
    train = CountData(data.counts[:, :-steps], data.mask[:, :-steps])
    summary, state = run_inference(config, hyper, train, **kw)
    pred = forecast(summary, steps)
    return compute_metrics(data.counts[:, -steps:], pred), summary


# synthetic benchmark

RECOVERY_DIMS = dict(V=20, T=80, K=3, M=20)


def recovery_instance(seed, chain='dir-dir'):
    """Well-conditioned synthetic data with changing dynamics.

    The first transition matrix is persistent and later ones drift with a
    moderate η; δ is held at a fixed scale so counts are informative."""
    K = RECOVERY_DIMS['K']
    hyper = Hyperparameters(K=K, M=RECOVERY_DIMS['M'], chain=chain)
    dims = Dims(**RECOVERY_DIMS)
    fixed = {'eta': 1.0, 'delta': 1.0, 'nu': 10.0, 'xi': 40.0, 'beta': 1.0}
    state, data = generate_synthetic(hyper, dims, seed, fixed)
    return state, data


# Geweke test

GEWEKE_HYPER = dict(tau0=1.0, gamma0=20.0, epsilon0=10.0, e0=10.0, f0=10.0, eps_alpha=1.0)


def geweke_statistics(state):
    """Named scalar functions of the parameters: first and second moments."""
    K, T = state.theta.shape
    out = {}

    def both(name, x):
        out[name] = float(x)
        out[name + '^2'] = float(x) ** 2

    for t in sorted({0, (T - 1) // 2, T - 1}):
        for k in range(min(K, 2)):
            both('theta[%d,%d]' % (k, t), state.theta[k, t])
    for i in range(state.pi.shape[0]):
        for k in range(min(K, 2)):
            both('pi[%d][0,%d]' % (i, k), state.pi[i][0, k])
    both('delta[0]', state.delta[0])
    both('delta[T-1]', state.delta[-1])
    for k in range(min(K, 2)):
        both('nu[%d]' % k, state.nu[k])
    out['xi'] = state.xi
    out['beta'] = state.beta
    if state.eta is not None:
        both('eta', state.eta)
    if state.gamma is not None and state.gamma.size:
        out['gamma[0,0]'] = float(state.gamma[0, 0])
        out['c[0,0]'] = float(state.c[0, 0])
    return out


@dataclass
class GewekeReport:
    names: list
    mean_prior: np.ndarray
    mean_chain: np.ndarray
    z: np.ndarray
    n: int

    def flagged(self, threshold=4.0):
        return [nm for nm, z in zip(self.names, self.z) if not abs(z) <= threshold]

    def lines(self):
        return ['%-16s prior %10.4g  chain %10.4g  z %7.2f' % row
                for row in zip(self.names, self.mean_prior, self.mean_chain, self.z)]


def _batch_var(x, batches):
    """Long-run variance of the mean of x by non-overlapping batch means."""
    n = len(x) // batches * batches
    b = x[:n].reshape(batches, -1)
    size = b.shape[1]
    return size * b.mean(1).var(ddof=1)


def geweke_test(chain, n, seed=0, dims=None, hyper=None, skip=(), batches=25):
    """Compare marginal-conditional draws from the prior against a chain that
    alternates Gibbs sweeps with fresh data. Returns a GewekeReport."""
    if int(n) < 1:
        raise ParameterError('Geweke test needs at least one sample')
    if n < 2 * batches:
        batches = max(2, n // 2)
    dims = dims or Dims(V=3, T=8, K=2, M=4)
    if hyper is None:
        hyper = Hyperparameters(K=dims.K, M=dims.M, chain=chain, **GEWEKE_HYPER)
    if chain == 'static':
        dims = Dims(dims.V, dims.T, dims.K, dims.T)
    names = None
    prior = []
    for s in range(n):
        st = sample_prior(hyper, dims, rng_for(seed, 'geweke', 0, s))
        row = geweke_statistics(st)
        names = names or list(row)
        prior.append([row[k] for k in names])
    rng = rng_for(seed, 'geweke', 1, 0)
    state = sample_prior(hyper, dims, rng)
    data = CountData(sample_counts(state, rng))
    sc = []
    for s in range(n):
        state, _ = gibbs_sweep(state, data, hyper, dims, seed + 1, s, skip=skip)
        data = CountData(sample_counts(state, rng_for(seed, 'geweke', 2, s)))
        row = geweke_statistics(state)
        sc.append([row[k] for k in names])
    prior, sc = np.array(prior), np.array(sc)
    mp, mc = prior.mean(0), sc.mean(0)
    var = prior.var(0, ddof=1) / n + np.array([_batch_var(sc[:, j], batches) for j in range(sc.shape[1])]) / n
    with np.errstate(divide='ignore', invalid='ignore'):
        z = (mp - mc) / np.sqrt(var)
    z = np.where(var > 0, z, np.where(mp == mc, 0.0, np.inf))
    return GewekeReport(names, mp, mc, z, n)


def geweke_harness(hyper, dims, chain_kind, n_samples, seed=0, skip=()):
    """Geweke test with explicit hyperparameters (chain taken from chain_kind)."""
    kw = hyper.as_dict()
    kw.update(chain=chain_kind, K=dims.K, M=dims.M)
    return geweke_test(chain_kind, n_samples, seed, dims, Hyperparameters(**kw), skip)

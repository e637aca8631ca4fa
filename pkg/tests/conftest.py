import numpy as np
import pytest
from scipy import stats


def _merge(expected, min_expected=5.0):
    """Group consecutive cells until each group has enough expected mass."""
    groups, cur, acc = [], [], 0.0
    for j, e in enumerate(expected):
        cur.append(j)
        acc += e
        if acc >= min_expected:
            groups.append(cur)
            cur, acc = [], 0.0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    return groups


def gof_pvalue(draws, support, pmf):
    """Chi-square goodness of fit of integer draws against a pmf on `support`.

    Draws outside the support land in the last group."""
    draws = np.asarray(draws)
    n = len(draws)
    support = np.asarray(support)
    pmf = np.asarray(pmf, dtype=float)
    pmf = pmf / pmf.sum()
    obs = np.array([np.count_nonzero(draws == s) for s in support], dtype=float)
    obs[-1] += np.count_nonzero(draws > support[-1])
    obs[0] += np.count_nonzero(draws < support[0])
    groups = _merge(pmf * n)
    o = np.array([obs[g].sum() for g in groups])
    e = np.array([pmf[g].sum() * n for g in groups])
    if len(o) < 2:
        return 1.0
    return stats.chisquare(o, e * o.sum() / e.sum()).pvalue


def two_sample_pvalue(a, b):
    """Chi-square homogeneity test between two samples of hashable outcomes."""
    keys = sorted(set(a) | set(b))
    idx = {k: j for j, k in enumerate(keys)}
    ca = np.zeros(len(keys))
    cb = np.zeros(len(keys))
    for x in a:
        ca[idx[x]] += 1
    for x in b:
        cb[idx[x]] += 1
    # merge rare outcomes, ordered by frequency, into one pooled cell
    tot = ca + cb
    order = np.argsort(-tot, kind='stable')
    keep = [j for j in order if tot[j] >= 10]
    rare = [j for j in order if tot[j] < 10]
    rows_a = [ca[j] for j in keep] + ([ca[rare].sum()] if rare else [])
    rows_b = [cb[j] for j in keep] + ([cb[rare].sum()] if rare else [])
    table = np.array([rows_a, rows_b])
    table = table[:, table.sum(0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return stats.chi2_contingency(table, correction=False).pvalue


@pytest.fixture
def rng():
    from nspgds.distributions import rng_for
    return rng_for(12345, 'test')

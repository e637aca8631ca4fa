"""Compiled vs pure-Python kernels: best time per kernel call, then time per full Gibbs sweep.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from nspgds import _kernels_py as py
from nspgds.distributions import rng_for

try:
    from nspgds import _kernels as cy
except ImportError:
    cy = None


def timeit(fn, repeat):
    best = float('inf')
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def flat(x):
    if isinstance(x, (list, tuple)):
        return [v for item in x for v in flat(item)]
    return np.asarray(x, dtype=float).ravel().tolist()


SWEEP = """
import time
from nspgds import kernels
from nspgds.distributions import rng_for
from nspgds.gibbs import gibbs_sweep
from nspgds.model import Dims, Hyperparameters, sample_prior
from nspgds.tasks import recovery_instance
_, data = recovery_instance(0)
h = Hyperparameters(K=3, M=20, chain='dir-dir')
d = Dims.for_data(data.V, data.T, h)
state = sample_prior(h, d, rng_for(0, 'init'))
t = time.perf_counter()
for s in range(%d):
    state, _ = gibbs_sweep(state, data, h, d, 0, s)
print(kernels.BACKEND, (time.perf_counter() - t) / %d)
"""


def sweep_time(pure, sweeps):
    env = dict(os.environ)
    env.pop('NSPGDS_PURE_PYTHON', None)
    if pure:
        env['NSPGDS_PURE_PYTHON'] = '1'
    out = subprocess.run([sys.executable, '-c', SWEEP % (sweeps, sweeps)], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    return out[0], float(out[1])


def cases():
    r = np.random.default_rng(0)
    V, K, T, M = 100, 10, 100, 10
    y = r.poisson(5, size=(V, T))
    phi = r.dirichlet(np.ones(V), size=K).T
    theta = r.gamma(2.0, size=(K, T))
    pi = np.stack([r.dirichlet(np.ones(K), size=K).T for _ in range(T // M)])
    y_kt = r.poisson(40, size=(K, T))
    l_dot = np.zeros((T + 1, K), dtype=np.int64)
    l_dot[1:T] = r.poisson(20, size=(T - 1, K))
    zeta = np.linspace(2.0, 0.0, T + 1)
    nu = np.ones(K)
    delta = np.ones(T)
    return {
        'crt(n=2000)': lambda m, g: m.crt(g, 2000, 3.0),
        'bessel x200': lambda m, g: [m.bessel(g, 0.0, 25.0) for _ in range(200)],
        'sch x200': lambda m, g: [m.sch(g, 20, 8.0) for _ in range(200)],
        'dirichlet(K=50) x100': lambda m, g: [m.dirichlet(g, np.full(50, 0.3)) for _ in range(100)],
        'allocate 100x100, K=10': lambda m, g: m.allocate(g, y, phi, theta),
        'backward_l T=100, K=10': lambda m, g: m.backward_l(g, y_kt, theta, pi, M, 1.0, nu),
        'forward_theta T=100, K=10': lambda m, g: m.forward_theta(g, y_kt, l_dot, pi, M, 1.0, nu, delta, zeta),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument('--repeat', type=int, default=5)
    p.add_argument('--sweeps', type=int, default=20)
    args = p.parse_args(argv)
    print('%-28s %12s %12s %9s' % ('kernel', 'python (ms)', 'compiled (ms)', 'speedup'))
    for name, fn in cases().items():
        tp = timeit(lambda: fn(py, rng_for(0, 'test')), args.repeat)
        if cy is None:
            print('%-28s %12.3f %12s %9s' % (name, 1e3 * tp, 'n/a', ''))
            continue
        tc = timeit(lambda: fn(cy, rng_for(0, 'test')), args.repeat)
        same = flat(fn(py, rng_for(1, 'test'))) == flat(fn(cy, rng_for(1, 'test')))
        print('%-28s %12.3f %12.3f %8.1fx%s' % (name, 1e3 * tp, 1e3 * tc, tp / tc, '' if same else '  MISMATCH'))
    # whole sweeps on the 20 x 80, K = 3 recovery instance; the backend is picked at import
    times = dict(sweep_time(pure, args.sweeps) for pure in (True, False))
    tp = times.get('python')
    tc = times.get('compiled')
    print('%-28s %12.3f %12s %9s' % ('gibbs sweep (dir-dir)', 1e3 * tp, '%.3f' % (1e3 * tc) if tc else 'n/a',
                                     '%.1fx' % (tp / tc) if tc else ''))


if __name__ == '__main__':
    main()

"""Command-line interface.

    nspgds generate --K 3 --M 10 --seed 1 --out run/
    nspgds fit --data run/counts.csv --chain dir-dir --out fit/
    nspgds smooth --data run/counts.csv --seed 0 --out smooth/
    nspgds forecast --data run/counts.csv --forecast-steps 2 --out fc/
    nspgds report --out fit/ --emit-svg

Every command reads optional defaults from --config (key=value lines, '#'
comments); flags given on the command line win. All outputs are text:

    counts.csv          V rows x T columns of integers
    mask.csv            zero-based "v,t" pairs of unobserved cells
    metrics.csv         task,chain,seed,metric,value
    manifest.json       configuration echo, seed, package version, backend
    checkpoint.txt      resumable sampler state
    posterior_*.csv     posterior means
"""
import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from math import lgamma

import numpy as np

from . import __version__, kernels
from .distributions import ParameterError
from .gibbs import SamplerConfig, load_checkpoint, run_inference
from .model import CHAINS, CountData, Dims, Hyperparameters, chain_name, generate_synthetic
from .tasks import compute_metrics, forecast, mask_for_smoothing, smooth_predict

METRICS_HEADER = ('task', 'chain', 'seed', 'metric', 'value')


class ParseError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = 'fit'
    K: int = 10
    M: int = 1
    tau0: float = 1.0
    gamma0: float = 50.0
    epsilon0: float = 0.1
    e0: float = 0.1
    f0: float = 0.1
    eps_alpha: float = 1.0
    chain: str = 'dir-dir'
    iters: int = 4000
    burnin: int = 2000
    thin: int = 100
    seed: int = 0
    threads: int = 1
    checkpoint_every: int = 500
    stop_after: int = 0
    debug: bool = False
    data: str = None
    mask: str = None
    out: str = 'out'
    mask_fraction: float = 0.1
    forecast_steps: int = 2
    emit_svg: bool = False
    resume: bool = False
    V: int = 20
    T: int = 80

    def hyper(self):
        return Hyperparameters(K=self.K, M=self.M, tau0=self.tau0, gamma0=self.gamma0,
                               epsilon0=self.epsilon0, e0=self.e0, f0=self.f0,
                               eps_alpha=self.eps_alpha, chain=self.chain)

    def sampler(self):
        return SamplerConfig(iterations=self.iters, burn_in=self.burnin, thin=self.thin, seed=self.seed,
                             debug_invariants=self.debug, threads=self.threads,
                             checkpoint_every=self.checkpoint_every)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if kind is bool:
        if isinstance(value, bool):
            return value
        v = str(value).strip().lower()
        if v in ('1', 'true', 'yes', 'on'):
            return True
        if v in ('0', 'false', 'no', 'off'):
            return False
        raise ParseError('%s expects a boolean, got %r' % (key, value))
    if kind is str:
        return None if value is None else str(value)
    try:
        return kind(value)
    except ValueError:
        raise ParseError('%s expects %s, got %r' % (key, kind.__name__, value))


def read_config(path):
    """key=value lines; '#' starts a comment. Keys match the long flags."""
    out = {}
    with open(path) as f:
        for no, line in enumerate(f, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ParseError('%s:%d: expected key=value' % (path, no))
            key, value = (s.strip() for s in line.split('=', 1))
            key = key.replace('-', '_')
            if key not in _TYPES or key == 'command':
                raise ParseError('%s:%d: unknown key %r' % (path, no, key))
            out[key] = _coerce(key, value)
    return out


# data files

def load_counts(path, mask_path=None):
    with open(path, newline='') as f:
        rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError('%s: no data' % path)
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    # a header usually comes with a name column; drop a leading non-numeric column too
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = [r[1:] for r in rows]
    if not rows:
        raise ParseError('%s: no data rows' % path)
    T = len(rows[0])
    counts = np.zeros((len(rows), T), dtype=np.int64)
    for v, r in enumerate(rows):
        if len(r) != T:
            raise ParseError('%s: row %d has %d columns, expected %d' % (path, v, len(r), T))
        for t, cell in enumerate(r):
            try:
                x = float(cell)
            except ValueError:
                x = -1.0
            if x < 0 or x != int(x):
                raise ParseError('%s: cell (row %d, column %d) = %r is not a nonnegative integer'
                                 % (path, v, t, cell.strip()))
            counts[v, t] = int(x)
    data = CountData(counts)
    if mask_path:
        data = data.with_mask(load_mask(mask_path, counts.shape))
    return data


def load_mask(path, shape):
    mask = np.ones(shape, dtype=bool)
    with open(path, newline='') as f:
        for no, r in enumerate(csv.reader(f), 1):
            if not r or r[0].strip().startswith('#') or r[0].strip() == 'v':
                continue
            try:
                v, t = int(r[0]), int(r[1])
            except (ValueError, IndexError):
                raise ParseError('%s:%d: expected "v,t"' % (path, no))
            if not (0 <= v < shape[0] and 0 <= t < shape[1]):
                raise ParseError('%s:%d: cell (%d, %d) outside a %dx%d matrix' % (path, no, v, t, *shape))
            mask[v, t] = False
    return mask


def write_counts(path, counts):
    with open(path, 'w', newline='') as f:
        csv.writer(f, lineterminator='\n').writerows(np.asarray(counts).tolist())


def write_mask(path, mask):
    with open(path, 'w', newline='') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(['v', 't'])
        for v, t in zip(*np.nonzero(~mask)):
            w.writerow([int(v), int(t)])


def write_matrix(path, x, header=None):
    with open(path, 'w', newline='') as f:
        w = csv.writer(f, lineterminator='\n')
        if header:
            w.writerow(header)
        for row in np.atleast_2d(x):
            w.writerow([repr(float(v)) for v in row])


def write_metrics(path, rows):
    with open(path, 'w', newline='') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], r[2], r[3], repr(float(r[4]))])


def write_manifest(out, cfg, extra=None):
    body = {
        'package': 'nspgds',
        'version': __version__,
        'backend': kernels.BACKEND,
        'seed': cfg.seed,
        'config': asdict(cfg),
    }
    body.update(extra or {})
    with open(os.path.join(out, 'manifest.json'), 'w') as f:
        json.dump(body, f, indent=2, sort_keys=True)
        f.write('\n')


def write_posterior(out, summary):
    write_matrix(os.path.join(out, 'posterior_theta.csv'), summary.mean('theta'))
    write_matrix(os.path.join(out, 'posterior_phi.csv'), summary.mean('phi'))
    write_matrix(os.path.join(out, 'posterior_delta.csv'), summary.mean('delta'))
    write_matrix(os.path.join(out, 'posterior_nu.csv'), summary.mean('nu'))
    write_matrix(os.path.join(out, 'posterior_rates.csv'), summary.mean_rates())
    pi = summary.mean('pi')
    with open(os.path.join(out, 'posterior_pi.csv'), 'w', newline='') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(['interval', 'to', 'from', 'value'])
        for i in range(pi.shape[0]):
            for k1 in range(pi.shape[1]):
                for k in range(pi.shape[2]):
                    w.writerow([i, k1, k, repr(float(pi[i, k1, k]))])


def read_posterior_pi(out):
    path = os.path.join(out, 'posterior_pi.csv')
    rows = []
    with open(path, newline='') as f:
        r = csv.reader(f)
        next(r)
        for i, k1, k, v in r:
            rows.append((int(i), int(k1), int(k), float(v)))
    I = max(r[0] for r in rows) + 1
    K = max(r[1] for r in rows) + 1
    pi = np.zeros((I, K, K))
    for i, k1, k, v in rows:
        pi[i, k1, k] = v
    return pi


# plots

def heatmap_svg(mat, title, cell=36):
    """Standalone SVG heatmap of a column-stochastic matrix."""
    K1, K = mat.shape
    pad, top = 40, 40
    w, h = pad + K * cell + 10, top + K1 * cell + 10
    out = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" font-family="sans-serif" '
           'font-size="10">' % (w, h),
           '<text x="%d" y="16" font-size="12">%s</text>' % (pad, title)]
    for k in range(K):
        out.append('<text x="%d" y="%d" text-anchor="middle">%d</text>' % (pad + k * cell + cell // 2, top - 6, k))
    for k1 in range(K1):
        out.append('<text x="%d" y="%d" text-anchor="end">%d</text>' % (pad - 6, top + k1 * cell + cell // 2 + 3, k1))
        for k in range(K):
            v = float(np.clip(mat[k1, k], 0, 1))
            shade = int(round(255 * (1 - v)))
            out.append('<rect x="%d" y="%d" width="%d" height="%d" fill="rgb(%d,%d,255)" stroke="#ccc">'
                       '<title>pi[%d,%d] = %.4f</title></rect>'
                       % (pad + k * cell, top + k1 * cell, cell, cell, shade, shade, k1, k, v))
    out.append('</svg>')
    return '\n'.join(out) + '\n'


def emit_heatmaps(out, pi):
    paths = []
    for i in range(pi.shape[0]):
        p = os.path.join(out, 'pi_interval_%d.svg' % (i + 1))
        with open(p, 'w') as f:
            f.write(heatmap_svg(pi[i], 'transition matrix, interval %d' % (i + 1)))
        paths.append(p)
    return paths


# commands

def _need_data(cfg):
    if not cfg.data:
        raise ParseError('--data is required for %s' % cfg.command)
    if not os.path.exists(cfg.data):
        raise ParseError('data file %s does not exist' % cfg.data)
    if cfg.mask and not os.path.exists(cfg.mask):
        raise ParseError('mask file %s does not exist' % cfg.mask)
    return load_counts(cfg.data, cfg.mask)


def _infer(cfg, data):
    """Run (or resume) the sampler; None when stopped early on request."""
    ckpt = os.path.join(cfg.out, 'checkpoint.txt')
    sampler = cfg.sampler()
    if cfg.stop_after:
        sampler.iterations = min(cfg.stop_after, sampler.iterations)
        if sampler.iterations < cfg.iters:
            sampler.checkpoint_every = sampler.checkpoint_every or cfg.stop_after
            run_inference(sampler, cfg.hyper(), data, checkpoint=ckpt, resume=cfg.resume)
            return None
    summary, _ = run_inference(sampler, cfg.hyper(), data, checkpoint=ckpt, resume=cfg.resume)
    write_posterior(cfg.out, summary)
    if cfg.emit_svg:
        emit_heatmaps(cfg.out, summary.mean('pi'))
    return summary


def cmd_generate(cfg):
    hyper = cfg.hyper()
    dims = Dims.for_data(cfg.V, cfg.T, hyper)
    state, data = generate_synthetic(hyper, dims, cfg.seed)
    write_counts(os.path.join(cfg.out, 'counts.csv'), data.counts)
    with open(os.path.join(cfg.out, 'truth.json'), 'w') as f:
        json.dump(state.to_dict(), f, sort_keys=True)
        f.write('\n')
    write_manifest(cfg.out, cfg, {'dims': asdict(dims)})
    return 0


def cmd_fit(cfg):
    data = _need_data(cfg)
    summary = _infer(cfg, data)
    if summary is None:
        return 0
    fitted = summary.mean_rates()
    obs = data.mask
    err = compute_metrics(data.counts[obs], fitted[obs])
    lam = fitted[obs]
    y = data.counts[obs]
    ll = float(np.sum(y * np.log(lam) - lam) - sum(lgamma(v + 1.0) for v in y.tolist()))
    rows = [('fit', cfg.chain, cfg.seed, 'loglik_mean_rate', ll),
            ('fit', cfg.chain, cfg.seed, 'MAE', err['MAE']),
            ('fit', cfg.chain, cfg.seed, 'MRE', err['MRE']),
            ('fit', cfg.chain, cfg.seed, 'retained', len(summary))]
    write_metrics(os.path.join(cfg.out, 'metrics.csv'), rows)
    write_manifest(cfg.out, cfg, {'dims': asdict(summary.dims)})
    return 0


def cmd_smooth(cfg):
    data = _need_data(cfg)
    if data.mask.all():
        data = mask_for_smoothing(data, cfg.mask_fraction, cfg.seed)
    write_mask(os.path.join(cfg.out, 'mask.csv'), data.mask)
    summary = _infer(cfg, data)
    if summary is None:
        return 0
    m = compute_metrics(data.counts[~data.mask], smooth_predict(summary, data.mask))
    write_metrics(os.path.join(cfg.out, 'metrics.csv'),
                  [('smoothing', cfg.chain, cfg.seed, k, m[k]) for k in ('MAE', 'MRE')])
    write_manifest(cfg.out, cfg, {'dims': asdict(summary.dims), 'masked_cells': int((~data.mask).sum())})
    return 0


def cmd_forecast(cfg):
    data = _need_data(cfg)
    S = cfg.forecast_steps
    if S < 1:
        raise ParameterError('--forecast-steps must be at least 1')
    if S >= data.T:
        raise ParameterError('--forecast-steps must be shorter than the series (T=%d)' % data.T)
    train = CountData(data.counts[:, :-S], data.mask[:, :-S])
    summary = _infer(cfg, train)
    if summary is None:
        return 0
    pred = forecast(summary, S)
    write_matrix(os.path.join(cfg.out, 'forecast.csv'), pred)
    held = data.mask[:, -S:]
    m = compute_metrics(data.counts[:, -S:][held], pred[held])
    write_metrics(os.path.join(cfg.out, 'metrics.csv'),
                  [('forecasting', cfg.chain, cfg.seed, k, m[k]) for k in ('MAE', 'MRE')])
    write_manifest(cfg.out, cfg, {'dims': asdict(summary.dims)})
    return 0


def cmd_report(cfg):
    if os.path.exists(os.path.join(cfg.out, 'posterior_pi.csv')):
        pi = read_posterior_pi(cfg.out)
    elif os.path.exists(os.path.join(cfg.out, 'checkpoint.txt')):
        _, _, summary = load_checkpoint(os.path.join(cfg.out, 'checkpoint.txt'))
        pi = summary.mean('pi')
    else:
        raise ParseError('nothing to report in %s: run fit first' % cfg.out)
    for i in range(pi.shape[0]):
        d = np.diag(pi[i])
        print('interval %d: mean self-transition %.3f, min %.3f, max %.3f' % (i + 1, d.mean(), d.min(), d.max()))
    if cfg.emit_svg:
        for p in emit_heatmaps(cfg.out, pi):
            print('wrote', p)
    return 0


COMMANDS = {'generate': cmd_generate, 'fit': cmd_fit, 'smooth': cmd_smooth,
            'forecast': cmd_forecast, 'report': cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog='nspgds', description='Non-stationary Poisson-gamma dynamical systems.')
    p.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    sub = p.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        s.add_argument('--config', help='key=value file of defaults')
        s.add_argument('--out', help='output directory')
        s.add_argument('--seed', type=int)
        if name == 'report':
            s.add_argument('--emit-svg', dest='emit_svg', action='store_true')
            continue
        s.add_argument('--chain', choices=CHAINS + ('dirdir', 'dirgamdir', 'prgamdir'))
        s.add_argument('--K', type=int)
        s.add_argument('--M', type=int)
        for h in ('tau0', 'gamma0', 'epsilon0', 'e0', 'f0', 'eps_alpha'):
            s.add_argument('--' + h.replace('_', '-'), dest=h, type=float)
        if name == 'generate':
            s.add_argument('--V', type=int)
            s.add_argument('--T', type=int)
            continue
        s.add_argument('--data')
        s.add_argument('--mask')
        s.add_argument('--iters', type=int)
        s.add_argument('--burnin', type=int)
        s.add_argument('--thin', type=int)
        s.add_argument('--threads', type=int)
        s.add_argument('--checkpoint-every', dest='checkpoint_every', type=int)
        s.add_argument('--stop-after', dest='stop_after', type=int,
                       help='checkpoint and stop after this many sweeps')
        s.add_argument('--resume', action='store_true')
        s.add_argument('--debug', action='store_true', help='check invariants after every conditional')
        s.add_argument('--emit-svg', dest='emit_svg', action='store_true')
        if name == 'smooth':
            s.add_argument('--mask-fraction', dest='mask_fraction', type=float)
        if name == 'forecast':
            s.add_argument('--forecast-steps', dest='forecast_steps', type=int)
    return p


def resolve_config(args):
    values = {}
    cfg_path = getattr(args, 'config', None)
    if cfg_path:
        if not os.path.exists(cfg_path):
            raise ParseError('config file %s does not exist' % cfg_path)
        values.update(read_config(cfg_path))
    for k, v in vars(args).items():
        if k != 'config':
            values[k] = v
    cfg = RunConfig(**values)
    cfg.chain = chain_name(cfg.chain)
    return cfg


def run_command(argv):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        return COMMANDS[cfg.command](cfg)
    except (ParseError, ParameterError, OSError) as e:
        print('nspgds %s: error: %s' % (args.command, e), file=sys.stderr)
        return 2


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == '__main__':
    main()

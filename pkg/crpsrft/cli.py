"""Command-line interface

Each subcommand runs one stage of the pipeline and writes artifacts that embed
the hash of the configuration that produced them::

    crpsrft generate-data --config c.json --out data.bin
    crpsrft train-det --config c.json --data data.bin --out det.ckpt
    crpsrft retrofit-crps --config r.json --data data.bin --init det.ckpt --out crps.ckpt --match f.json
    crpsrft finetune-det --config f.json --data data.bin --init det.ckpt --out ft.ckpt --match r.json
    crpsrft evaluate --model crps.ckpt --baseline ft.ckpt --data data.bin --M 16 --out results
    crpsrft ensemble-scaling --model crps.ckpt --data data.bin --out results
    crpsrft report --runs results/*_records.csv --out results/merged.csv

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures
and 4 on I/O errors.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path

import torch

from . import __version__
from .dynamics.dataset import generate_dataset, write_dataset, read_dataset
from .errors import ConfigError, NumericalError
from .evaluation.bootstrap import MetricsReport, paired_improvement
from .evaluation.harness import evaluate_model
from .evaluation.report import (write_records_csv, write_improvement_csv, write_lead_time_dat, write_scaling_dat,
                                merge_runs)
from .evaluation.scaling import ensemble_scaling_sweep
from .models.checkpoint import save_bundle, load_bundle
from .training.trainer import train_deterministic, retrofit_crps, member_forward_budget
from .utils.binary import sha256_hex
from .utils.config import RunConfig, load_config
from .utils.parallel import n_threads

# License: BSD 3 clause

logger = logging.getLogger('crpsrft')

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4
IMPROVEMENT_METRICS = ('fcrps', 'vrmse')


def file_hash(path):
    """SHA-256 of a file's content, first 16 hex digits"""
    return sha256_hex(Path(path).read_bytes())[:16]


def _config(args, retrofit=False):
    if args.config is None:
        return RunConfig.from_dict({}, seed=args.seed, retrofit=retrofit)
    return load_config(args.config, seed=args.seed, retrofit=retrofit)


def _dataset(args, config):
    path = args.data or config.paths.data
    if path is None:
        raise ConfigError('No dataset given: pass --data or set paths.data in the configuration.')
    return read_dataset(path)


def _out_dir(args, config):
    out_dir = Path(args.out or config.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _run_id(args, config, model):
    return args.run_id or config.paths.run_id or Path(model).stem


def _check_match(args, config, peer_retrofit):
    """Refuses to train unless the peer configuration performs as many member-forward passes"""
    if args.match is None:
        return
    own = member_forward_budget(config.train)
    peer = member_forward_budget(load_config(args.match, retrofit=peer_retrofit).train)
    if own != peer:
        raise ConfigError(f'Compute mismatch: this run performs {own} member-forward passes but the peer '
                          f'configuration {args.match} performs {peer}. Adjust epochs, steps_per_epoch, '
                          'batch_size or M_train.')
    logger.info(f'Compute matched with {args.match}: {own} member-forward passes.')


def _save_run(bundle, log, args, config, dataset, pipeline, init=None):
    config_hash = config.config_hash()
    provenance = {
        'config_hash': config_hash,
        'dataset_hash': dataset.content_hash(),
        'pipeline': pipeline,
        'init_hash': None if init is None else file_hash(init),
        'member_forwards': log.member_forwards,
        'best_epoch': log.best_epoch,
        'best_val_loss': log.best_val_loss,
        'version': __version__,
    }
    out = Path(args.out)
    save_bundle(bundle, out, provenance)
    log_path = Path(args.log) if args.log else out.with_suffix('.log.csv')
    log.to_csv(log_path, config_hash=config_hash)
    logger.info(f'{pipeline}: best validation loss {log.best_val_loss:.6g} at epoch {log.best_epoch}, '
                f'{log.member_forwards} member-forward passes. Wrote {out} and {log_path}.')


def generate_data(args):
    config = _config(args)
    config_hash = config.config_hash()
    dataset = generate_dataset(config.system, threads=args.threads)
    path = write_dataset(dataset, args.out, provenance={'config_hash': config_hash, 'version': __version__})
    spec = dataset.spec
    counts = [int((dataset.splits == label).sum()) for label in range(3)]
    print(f'{spec.system}: {dataset.n_trajectories} trajectories of {dataset.n_steps} frames '
          f'on a {dataset.grid} grid, train/val/test {counts[0]}/{counts[1]}/{counts[2]}')
    print(f'channel mean {dataset.mean.tolist()}, std {dataset.std.tolist()}')
    print(f'regenerated trajectories: {int((dataset.regenerations > 0).sum())}')
    print(f'wrote {path} (content hash {dataset.content_hash()}, config hash {config_hash})')


def train_det(args):
    config = _config(args)
    dataset = _dataset(args, config)
    config.check_data(dataset)
    bundle, log = train_deterministic(dataset, config.backbone, config.train, verbose=args.verbose)
    _save_run(bundle, log, args, config, dataset, 'train-det')


def _init_path(args, config):
    init = args.init or config.paths.init
    if init is None:
        raise ConfigError('No base checkpoint given: pass --init or set paths.init in the configuration.')
    return init


def finetune_det(args):
    config = _config(args)
    _check_match(args, config, peer_retrofit=True)
    dataset = _dataset(args, config)
    init = _init_path(args, config)
    bundle, log = train_deterministic(dataset, train_config=config.train, init=init, verbose=args.verbose)
    _save_run(bundle, log, args, config, dataset, 'finetune-det', init=init)


def retrofit(args):
    config = _config(args, retrofit=True)
    _check_match(args, config, peer_retrofit=False)
    dataset = _dataset(args, config)
    init = _init_path(args, config)
    bundle, log = retrofit_crps(dataset, init, config.noise, config.train, zero_init=args.zero_init,
                                verbose=args.verbose)
    _save_run(bundle, log, args, config, dataset, 'retrofit-crps', init=init)


def _write_evaluation(report, out_dir, run_id, config_hash, dataset_hash):
    report.to_json(out_dir/f'{run_id}_report.json')
    write_records_csv(report.records, out_dir/f'{run_id}_records.csv', config_hash=config_hash, run_id=run_id,
                      dataset_hash=dataset_hash)
    write_lead_time_dat(report, out_dir, prefix=f'{run_id}_', config_hash=config_hash)


def evaluate(args):
    config = _config(args)
    eval_config = config.eval
    if args.M is not None:
        eval_config = replace(eval_config, n_members=args.M)
    if args.steps is not None:
        eval_config = replace(eval_config, n_steps=args.steps)
    config = replace(config, eval=eval_config.validate())
    dataset = _dataset(args, config)
    out_dir = _out_dir(args, config)
    config_hash, dataset_hash = config.config_hash(), dataset.content_hash()

    run_id = _run_id(args, config, args.model)
    report = evaluate_model(load_bundle(args.model), dataset, eval_config, model_id=run_id, threads=args.threads,
                            verbose=args.verbose)
    report.provenance.update(config_hash=config_hash, model_hash=file_hash(args.model))
    _write_evaluation(report, out_dir, run_id, config_hash, dataset_hash)
    if args.baseline is None:
        return

    baseline_id = Path(args.baseline).stem
    if baseline_id == run_id:
        baseline_id = f'{baseline_id}_baseline'
    baseline = evaluate_model(load_bundle(args.baseline), dataset, eval_config, model_id=baseline_id,
                              threads=args.threads, verbose=args.verbose)
    baseline.provenance.update(config_hash=config_hash, model_hash=file_hash(args.baseline))
    _write_evaluation(baseline, out_dir, baseline_id, config_hash, dataset_hash)

    improvements = []
    for metric in IMPROVEMENT_METRICS:
        imp = paired_improvement(baseline.records, report.records, metric=metric, n_boot=eval_config.n_boot,
                                 levels=tuple(eval_config.levels), seed=eval_config.seed)
        improvements.append(imp)
        intervals = ', '.join(f'{key} [{imp[key][0]:.2f}, {imp[key][1]:.2f}]' for key in imp if key.startswith('ci'))
        print(f'{metric}: {run_id} improves on {baseline_id} by {imp["median"]:.2f}% ({intervals})')
    write_improvement_csv(improvements, out_dir/f'{run_id}_vs_{baseline_id}_improvement.csv', config_hash=config_hash)


def ensemble_scaling(args):
    config = _config(args)
    eval_config = config.eval
    if args.sizes:
        eval_config = replace(eval_config, ensemble_sizes=args.sizes)
    if args.steps is not None:
        eval_config = replace(eval_config, n_steps=args.steps)
    config = replace(config, eval=eval_config.validate())
    dataset = _dataset(args, config)
    out_dir = _out_dir(args, config)
    config_hash = config.config_hash()
    run_id = _run_id(args, config, args.model)
    table = ensemble_scaling_sweep(load_bundle(args.model), dataset, ensemble_sizes=eval_config.ensemble_sizes,
                                   seed=eval_config.seed, split=eval_config.split, n_steps=eval_config.n_steps,
                                   noise_per_step=eval_config.noise_per_step,
                                   max_trajectories=eval_config.max_trajectories, threads=args.threads)
    table.provenance.update(config_hash=config_hash, model_hash=file_hash(args.model), run_id=run_id)
    table.to_json(out_dir/f'{run_id}_scaling.json')
    write_scaling_dat(table, out_dir/f'{run_id}_scaling.dat', config_hash=config_hash)
    for row in table.rows():
        print(f'M={row["M"]}: median rollout VRMSE {row["median_vrmse"]:.6g}, normalised {row["normalised"]:.4f}')


def report(args):
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_rows = merge_runs(args.runs, out)
    print(f'merged {n_rows} rows from {len(args.runs)} runs into {out}')
    for path in args.reports:
        metrics = MetricsReport.from_json(path)
        run_id = metrics.provenance.get('model_id') or Path(path).stem
        write_lead_time_dat(metrics, out.parent, prefix=f'{run_id}_',
                            config_hash=metrics.provenance.get('config_hash'))


def build_parser():
    parser = argparse.ArgumentParser(prog='crpsrft', description='Retrofitting deterministic neural surrogates '
                                     'into ensemble forecasters with the fair CRPS.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run configuration')
    common.add_argument('--seed', type=int, default=None, help='overrides the seed of the configuration')
    common.add_argument('--threads', type=int, default=None,
                        help='worker threads, capped by the CRPSRFT_THREADS environment variable')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging and progress bars')
    commands = parser.add_subparsers(dest='command', required=True)

    sub = commands.add_parser('generate-data', parents=[common], help='solve a dynamical system')
    sub.add_argument('--out', required=True, help='dataset file')
    sub.set_defaults(func=generate_data)

    for name, func, summary in [('train-det', train_det, 'pretrain a deterministic model'),
                             ('finetune-det', finetune_det, 'continue training a deterministic model'),
                             ('retrofit-crps', retrofit, 'retrofit a deterministic model with the fair CRPS')]:
        sub = commands.add_parser(name, parents=[common], help=summary)
        sub.add_argument('--data', help='dataset file')
        sub.add_argument('--out', required=True, help='checkpoint file')
        sub.add_argument('--log', help='training log CSV, next to the checkpoint by default')
        if name != 'train-det':
            sub.add_argument('--init', help='checkpoint to start from')
            sub.add_argument('--match', help='configuration of the peer run to match in compute')
        if name == 'retrofit-crps':
            sub.add_argument('--zero-init', action='store_true', help='start with the noise switched off')
        sub.set_defaults(func=func)

    sub = commands.add_parser('evaluate', parents=[common], help='roll out and score a model')
    sub.add_argument('--model', required=True, help='checkpoint to evaluate')
    sub.add_argument('--baseline', help='checkpoint of the baseline of a paired comparison')
    sub.add_argument('--data', help='dataset file')
    sub.add_argument('--M', type=int, default=None, help='ensemble size')
    sub.add_argument('--steps', type=int, default=None, help='rollout horizon')
    sub.add_argument('--run-id', help='name of the run, by default the model file name')
    sub.add_argument('--out', help='output directory')
    sub.set_defaults(func=evaluate)

    sub = commands.add_parser('ensemble-scaling', parents=[common], help='rollout error against ensemble size')
    sub.add_argument('--model', required=True)
    sub.add_argument('--data', help='dataset file')
    sub.add_argument('--sizes', type=int, nargs='+', help='ensemble sizes')
    sub.add_argument('--steps', type=int, default=None, help='rollout horizon')
    sub.add_argument('--run-id')
    sub.add_argument('--out', help='output directory')
    sub.set_defaults(func=ensemble_scaling)

    sub = commands.add_parser('report', parents=[common], help='merge evaluation runs')
    sub.add_argument('--runs', nargs='*', default=[], help='per-trajectory CSV files written by evaluate')
    sub.add_argument('--reports', nargs='*', default=[], help='report JSON files to turn into lead-time curves')
    sub.add_argument('--out', required=True, help='merged CSV')
    sub.set_defaults(func=report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    torch.set_num_threads(n_threads(args.threads))
    try:
        args.func(args)
    except NumericalError as err:
        logger.error(f'Numerical failure: {err}')
        return EXIT_NUMERIC
    except OSError as err:
        logger.error(f'I/O error: {err}')
        return EXIT_IO
    except ValueError as err:
        # ConfigError, StabilityError and ShapeError
        logger.error(f'Configuration error: {err}')
        return EXIT_CONFIG
    return EXIT_OK

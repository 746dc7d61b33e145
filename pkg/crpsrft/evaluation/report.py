"""CSV, JSON and gnuplot outputs of evaluations

Every file starts with ``# key=value`` comment lines carrying its provenance
(config hash, run id, dataset hash), followed by the data.
"""

import csv
import logging
import math
from pathlib import Path

from ..errors import ConfigError, FormatError
from .records import FRAME_METRICS

# License: BSD 3 clause

logger = logging.getLogger(__name__)

RECORD_COLUMNS = (('trajectory', 'n_members') + FRAME_METRICS
                  + ('ssr_inf_frames', 'single_member_frames', 'diverged_fraction'))
RUN_COLUMNS = ('run_id', 'config_hash', 'dataset_hash')
IMPROVEMENT_COLUMNS = ('metric', 'metric_prob', 'median', 'n_boot', 'seed')


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _write_csv(path, columns, rows, meta=None):
    path = Path(path)
    with open(path, 'w', newline='') as f:
        for key, value in sorted((meta or {}).items()):
            if value is not None:
                f.write(f'# {key}={value}\n')
        writer = csv.DictWriter(f, fieldnames=list(columns), restval='')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(v) for k, v in row.items()})
    return path


def read_csv(path):
    """Reads a CSV written by this module

    Returns
    -------
    meta : dict
        the ``# key=value`` comment lines
    columns : list of str
    rows : list of dict of str
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f'No such run file: {path}.')
    meta, lines = {}, []
    with open(path, newline='') as f:
        for line in f:
            if line.startswith('#'):
                key, _, value = line[1:].strip().partition('=')
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        raise FormatError(f'{path}: missing CSV header.')
    return meta, list(reader.fieldnames), list(reader)


def _record_columns(rows):
    columns = list(RECORD_COLUMNS)
    for row in rows:
        columns += [key for key in row if key not in columns]
    return columns


def write_records_csv(records, path, config_hash=None, run_id=None, dataset_hash=None):
    """Flat per-trajectory table, one row per record and one column per metric and channel"""
    rows = [r.to_row() for r in records]
    meta = {'config_hash': config_hash, 'run_id': run_id, 'dataset_hash': dataset_hash}
    return _write_csv(path, _record_columns(rows), rows, meta)


def write_improvement_csv(improvements, path, config_hash=None):
    """Paired relative improvements (percent), one row per metric

    Each confidence level ``ci<level>`` of the summaries gives a pair of
    ``ci<level>_lo``, ``ci<level>_hi`` columns.
    """
    rows, intervals = [], []
    for imp in improvements:
        row = {'metric': imp['metric'], 'metric_prob': imp.get('metric_prob', imp['metric']),
               'median': imp['median'], 'n_boot': imp['n_boot'], 'seed': imp['seed']}
        for key, value in imp.items():
            if key.startswith('ci'):
                row[f'{key}_lo'], row[f'{key}_hi'] = value
                if key not in intervals:
                    intervals.append(key)
        rows.append(row)
    columns = list(IMPROVEMENT_COLUMNS[:3]) + [f'{key}_{end}' for key in intervals for end in ('lo', 'hi')]
    columns += IMPROVEMENT_COLUMNS[3:]
    return _write_csv(path, columns, rows, {'config_hash': config_hash})


def merge_runs(paths, out_path):
    """Concatenates per-trajectory tables of several runs into one CSV

    Each row is prefixed with the run id (the file's ``run_id``, or its stem),
    config hash and dataset hash of its run.

    Raises
    ------
    ConfigError
        if two tables of the same run id declare different dataset hashes
    FileNotFoundError
        if a run file is missing

    Returns
    -------
    int
        number of merged rows
    """
    merged, dataset_hashes = [], {}
    columns = list(RUN_COLUMNS) + list(RECORD_COLUMNS)
    for path in paths:
        meta, file_columns, rows = read_csv(path)
        run_id = meta.get('run_id') or Path(path).stem
        dataset_hash = meta.get('dataset_hash', '')
        if dataset_hashes.setdefault(run_id, dataset_hash) != dataset_hash:
            raise ConfigError(f'Run {run_id} declares dataset hash {dataset_hash} in {path} but '
                              f'{dataset_hashes[run_id]} elsewhere, refusing to merge.')
        columns += [c for c in file_columns if c not in columns]
        for row in rows:
            merged.append(dict(run_id=run_id, config_hash=meta.get('config_hash', ''),
                               dataset_hash=dataset_hash, **row))
    _write_csv(out_path, columns, merged)
    logger.info(f'Merged {len(merged)} rows from {len(paths)} runs into {out_path}.')
    return len(merged)


def write_dat(path, x, y, columns=('x', 'y'), meta=None):
    """Two-column whitespace-separated file for gnuplot"""
    path = Path(path)
    lines = [f'# {key}={value}' for key, value in sorted((meta or {}).items()) if value is not None]
    lines.append(f'# {columns[0]} {columns[1]}')
    for a, b in zip(x, y):
        b = float(b)
        lines.append(f'{a} {repr(b) if math.isfinite(b) else "nan"}')
    path.write_text('\n'.join(lines) + '\n')
    return path


def write_lead_time_dat(report, out_dir, prefix='', config_hash=None):
    """One ``<prefix>leadtime_<metric>.dat`` file per frame metric: lead time (steps) vs median"""
    out_dir = Path(out_dir)
    paths = []
    for metric, curve in report.lead_time.items():
        paths.append(write_dat(out_dir/f'{prefix}leadtime_{metric}.dat', range(1, len(curve) + 1), curve,
                               columns=('lead_time', metric), meta={'config_hash': config_hash}))
    return paths


def write_scaling_dat(table, path, config_hash=None):
    """Ensemble size vs normalised median rollout VRMSE"""
    return write_dat(path, table.ensemble_sizes, table.normalised, columns=('M', 'normalised_vrmse'),
                     meta={'config_hash': config_hash})

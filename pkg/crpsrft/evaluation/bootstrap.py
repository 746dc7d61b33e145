"""Bootstrap aggregation of trajectory records

Trajectories are resampled with replacement; the median of each resample
forms the bootstrap distribution, whose median is the central estimate and
whose percentiles give the confidence intervals.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..utils.binary import strict_json, nan_for_null
from ..utils.seeding import numpy_rng
from .records import TrajectoryRecord, METRICS, FRAME_METRICS

# License: BSD 3 clause

CI_LEVELS = (95, 68)
N_BOOT = 100


def _nanmedian(values, axis=None):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        return np.nanmedian(values, axis=axis)


def _interval(samples, level):
    tail = (100 - level)/2
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        lo, hi = np.nanpercentile(samples, [tail, 100 - tail])
    return [float(lo), float(hi)]


def bootstrap_summary(samples, levels=CI_LEVELS):
    """Median and percentile intervals of a bootstrap distribution

    Returns
    -------
    dict
        ``{'median': m, 'ci95': [lo, hi], 'ci68': [lo, hi], ...}``
    """
    samples = np.asarray(samples, dtype=np.float64)
    summary = {'median': float(_nanmedian(samples))}
    for level in levels:
        summary[f'ci{level}'] = _interval(samples, level)
    return summary


def resample_indices(n, n_boot, seed):
    """(n_boot, n) trajectory indices drawn with replacement from the stream `seed`"""
    return numpy_rng(seed).integers(0, n, size=(n_boot, n))


@dataclass
class MetricsReport:
    """Aggregated verification of a model over a set of trajectories

    Parameters
    ----------
    records : list of TrajectoryRecord
    summary : dict
        per metric, the bootstrap median and confidence intervals
    lead_time : dict
        per frame metric, the median over trajectories at every rollout step
    """
    records: list
    summary: dict
    lead_time: dict
    n_boot: int = N_BOOT
    seed: int = 0
    levels: tuple = CI_LEVELS
    provenance: dict = field(default_factory=dict)

    def median(self, metric):
        return self.summary[metric]['median']

    def to_dict(self):
        return {
            'n_boot': self.n_boot,
            'seed': self.seed,
            'levels': list(self.levels),
            'summary': self.summary,
            'lead_time': self.lead_time,
            'provenance': self.provenance,
            'records': [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(records=[TrajectoryRecord.from_dict(nan_for_null(r)) for r in d['records']],
                   summary=nan_for_null(d['summary']), lead_time=nan_for_null(d['lead_time']),
                   n_boot=d['n_boot'], seed=d['seed'], levels=tuple(d['levels']), provenance=d.get('provenance', {}))

    def to_json(self, path):
        path = Path(path)
        # non-finite values, e.g. the spread of single-member records, are written as null
        path.write_text(json.dumps(strict_json(self.to_dict()), indent=2, sort_keys=True, allow_nan=False))
        return path

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def bootstrap_aggregate(records, metrics=METRICS, n_boot=N_BOOT, levels=CI_LEVELS, seed=0):
    """Bootstrap medians and confidence intervals of trajectory records

    Parameters
    ----------
    records : list of TrajectoryRecord
        at least two
    metrics : tuple of str
    n_boot : int, default is 100
    levels : tuple of int, default is (95, 68)
        confidence levels, in percent
    seed : int

    Returns
    -------
    MetricsReport
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError(f'Bootstrap aggregation needs at least 2 trajectory records, but got {len(records)}.')
    if n_boot < 1:
        raise ValueError(f'Got n_boot={n_boot}, expected at least one resample.')
    index = resample_indices(len(records), n_boot, seed)
    summary = {}
    for metric in metrics:
        values = np.array([r.value(metric) for r in records], dtype=np.float64)
        summary[metric] = bootstrap_summary(_nanmedian(values[index], axis=1), levels)
    lead_time = {}
    for metric in FRAME_METRICS:
        curves = [r.lead_time[metric] for r in records if metric in r.lead_time]
        if curves and len({len(c) for c in curves}) == 1:
            lead_time[metric] = _nanmedian(np.array(curves, dtype=np.float64), axis=0).tolist()
    return MetricsReport(records, summary, lead_time, n_boot=n_boot, seed=seed, levels=tuple(levels))


def _relative_improvement(det, prob):
    with np.errstate(divide='ignore', invalid='ignore'):
        return (det - prob)/det*100


def paired_improvement(records_det, records_prob, metric='fcrps', metric_prob=None, n_boot=N_BOOT,
                       levels=CI_LEVELS, seed=0):
    """Relative improvement of the median error, in percent, with paired bootstrap intervals

    For each resample b, shared by both models,
    ``delta_b = (median_det_b - median_prob_b)/median_det_b * 100``.

    Parameters
    ----------
    records_det, records_prob : list of TrajectoryRecord
        records of the same trajectories
    metric : str, default is 'fcrps'
        metric of the baseline (the fCRPS of a single-member baseline is its MAE)
    metric_prob : str, optional
        metric of the probabilistic model, by default `metric`

    Returns
    -------
    dict
        ``{'metric', 'median', 'ci95', 'ci68', 'n_boot', 'seed'}``
    """
    metric_prob = metric_prob or metric
    det = {r.trajectory: r for r in records_det}
    prob = {r.trajectory: r for r in records_prob}
    if len(det) != len(records_det) or len(prob) != len(records_prob):
        raise ValueError('Duplicate trajectory ids in the records.')
    if set(det) != set(prob):
        missing = sorted(set(det) ^ set(prob))
        raise ValueError(f'Records are not paired: trajectories {missing[:10]} are missing on one side.')
    ids = sorted(det)
    if len(ids) < 2:
        raise ValueError(f'Paired bootstrap needs at least 2 trajectories, but got {len(ids)}.')
    det_values = np.array([det[i].value(metric) for i in ids], dtype=np.float64)
    prob_values = np.array([prob[i].value(metric_prob) for i in ids], dtype=np.float64)
    index = resample_indices(len(ids), n_boot, seed)
    deltas = _relative_improvement(_nanmedian(det_values[index], axis=1), _nanmedian(prob_values[index], axis=1))
    summary = bootstrap_summary(deltas, levels)
    summary.update(metric=metric, metric_prob=metric_prob, n_boot=n_boot, seed=seed)
    return summary

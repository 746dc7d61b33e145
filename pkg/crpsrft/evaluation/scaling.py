"""Rollout error of the ensemble mean as a function of the ensemble size"""

import json
import logging
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError
from ..functional.metrics import vrmse
from ..utils.binary import strict_json, nan_for_null
from ..utils.parallel import parallel_map
from .harness import forecast_trajectory, resolve_horizon, split_trajectories

# License: BSD 3 clause

logger = logging.getLogger(__name__)


@dataclass
class ScalingTable:
    """Median rollout VRMSE of the ensemble mean for each ensemble size

    `normalised` divides by the value of the smallest size (normally M=1);
    `lead_time` holds, for each size, the median VRMSE at every rollout step.
    """
    ensemble_sizes: list
    median_vrmse: list
    normalised: list
    lead_time: list
    per_trajectory: list
    trajectories: list
    provenance: dict = field(default_factory=dict)

    def rows(self):
        return [{'M': m, 'median_vrmse': v, 'normalised': n}
                for m, v, n in zip(self.ensemble_sizes, self.median_vrmse, self.normalised)]

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        path = Path(path)
        path.write_text(json.dumps(strict_json(self.to_dict()), indent=2, sort_keys=True, allow_nan=False))
        return path

    @classmethod
    def from_json(cls, path):
        d = json.loads(Path(path).read_text())
        provenance = d.pop('provenance', {})
        return cls(provenance=provenance, **nan_for_null(d))


def ensemble_mean_vrmse(members, truth):
    """VRMSE of the ensemble mean at every step, averaged over channels

    Parameters
    ----------
    members : torch.Tensor of shape (M, T, C, *spatial)
        diverged members hold NaN and are left out of the mean
    truth : torch.Tensor of shape (T, C, *spatial)

    Returns
    -------
    np.ndarray of shape (T, )
    """
    ens_mean = torch.nanmean(members, dim=0)
    per_channel = vrmse(ens_mean, truth, n_spatial=truth.ndim - 2).cpu().numpy()
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        return np.nanmean(per_channel, axis=1)


def ensemble_scaling_sweep(bundle, dataset, ensemble_sizes=(1, 2, 4, 8, 16), seed=0, split='test', n_steps=None,
                           noise_per_step='resample', max_trajectories=None, threads=None):
    """Rollout VRMSE of the ensemble mean against the ensemble size

    A single rollout with the largest size is drawn per trajectory; smaller
    ensembles are its first members, since member noise streams do not depend
    on the ensemble size.

    Returns
    -------
    ScalingTable
    """
    if not bundle.has_noise_branch:
        raise ConfigError('The ensemble-scaling sweep needs a model with a noise branch.')
    sizes = sorted({int(m) for m in ensemble_sizes})
    if not sizes or sizes[0] < 1:
        raise ConfigError(f'Got ensemble_sizes={list(ensemble_sizes)}, expected positive sizes.')
    bundle.check_data_shape(dataset.channels, dataset.grid)
    n_steps = resolve_horizon(dataset, bundle.config.history_len, n_steps)
    indices = split_trajectories(dataset, split, max_trajectories)

    def run(index):
        forecast, truth = forecast_trajectory(bundle, dataset, index, n_steps, sizes[-1], seed=seed,
                                              noise_per_step=noise_per_step)
        return [ensemble_mean_vrmse(forecast.members[:m], truth) for m in sizes]

    curves = np.array(parallel_map(run, indices, threads=threads))  # (trajectories, sizes, T)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        per_trajectory = np.nanmean(curves, axis=2)
        medians = np.nanmedian(per_trajectory, axis=0)
        lead_time = np.nanmedian(curves, axis=0)
    normalised = medians/medians[0]
    for m, v, n in zip(sizes, medians, normalised):
        logger.info(f'M={m}: median rollout VRMSE {v:.4g} ({n:.4f} of M={sizes[0]}).')
    return ScalingTable(ensemble_sizes=sizes, median_vrmse=medians.tolist(), normalised=normalised.tolist(),
                        lead_time=lead_time.tolist(), per_trajectory=per_trajectory.tolist(), trajectories=indices,
                        provenance={'dataset_hash': dataset.content_hash(), 'n_steps': n_steps, 'split': split,
                                    'noise_per_step': noise_per_step, 'seed': seed})

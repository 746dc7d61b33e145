"""Evaluation of a model over the trajectories of a dataset split"""

import logging
import warnings
from dataclasses import dataclass, field, asdict
from typing import List, Optional

from tqdm import tqdm

from ..dynamics.dataset import SPLITS
from ..dynamics.systems import default_horizon
from ..errors import ConfigError
from ..utils.parallel import parallel_map
from ..utils.seeding import stream_seed
from .bootstrap import bootstrap_aggregate, N_BOOT
from .records import trajectory_metrics
from .rollout import rollout, NOISE_MODES

# License: BSD 3 clause

logger = logging.getLogger(__name__)


@dataclass
class EvalConfig:
    """Evaluation protocol

    Parameters
    ----------
    n_members : int, default is 16
        ensemble size of models with a noise branch (deterministic models use 1)
    n_steps : int, optional
        rollout horizon, by default the system's default horizon
    split : {'train', 'val', 'test'}
    noise_per_step : {'resample', 'frozen'}
    n_boot : int, default is 100
    levels : list of int, default is [95, 68]
    ensemble_sizes : list of int
        ensemble sizes of the scaling sweep
    max_trajectories : int, optional
        evaluate the first trajectories of the split only
    seed : int
    """
    n_members: int = 16
    n_steps: Optional[int] = None
    split: str = 'test'
    noise_per_step: str = 'resample'
    n_boot: int = N_BOOT
    levels: List[int] = field(default_factory=lambda: [95, 68])
    ensemble_sizes: List[int] = field(default_factory=lambda: [1, 2, 4, 8, 16])
    max_trajectories: Optional[int] = None
    seed: int = 0

    def validate(self):
        if self.n_members < 1:
            raise ConfigError(f'Got n_members={self.n_members}, expected at least one member.')
        if self.n_steps is not None and self.n_steps < 1:
            raise ConfigError(f'Got n_steps={self.n_steps}, expected a positive horizon.')
        if self.split not in SPLITS:
            raise ConfigError(f'Got split={self.split} but expected one of {SPLITS}.')
        if self.noise_per_step not in NOISE_MODES:
            raise ConfigError(f'Got noise_per_step={self.noise_per_step} but expected one of {NOISE_MODES}.')
        if self.n_boot < 1 or any(not 0 < level < 100 for level in self.levels):
            raise ConfigError(f'Got n_boot={self.n_boot} and levels={self.levels}, '
                              'expected n_boot >= 1 and levels in (0, 100).')
        if not self.ensemble_sizes or any(int(m) < 1 for m in self.ensemble_sizes):
            raise ConfigError(f'Got ensemble_sizes={self.ensemble_sizes}, expected positive sizes.')
        if self.max_trajectories is not None and self.max_trajectories < 2:
            raise ConfigError(f'Got max_trajectories={self.max_trajectories}, the bootstrap needs at least 2.')
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def trajectory_seed(seed, index):
    """Seed of the noise streams of trajectory `index`"""
    return stream_seed(seed, index)


def resolve_horizon(dataset, history_len, n_steps=None):
    """Rollout horizon, shortened with a warning to what the trajectories hold"""
    available = dataset.n_steps - history_len
    if n_steps is None:
        n_steps = default_horizon(dataset.spec.system)
    if n_steps > available:
        warnings.warn(f'Trajectories of {dataset.n_steps} frames hold {available} steps after a history of '
                      f'{history_len}, shortening the horizon from {n_steps}.')
        n_steps = available
    if n_steps < 1:
        raise ConfigError(f'Trajectories of {dataset.n_steps} frames are too short for a history of {history_len}.')
    return n_steps


def split_trajectories(dataset, split, max_trajectories=None):
    indices = dataset.split_indices(split)
    if max_trajectories is not None:
        indices = indices[:max_trajectories]
    return [int(i) for i in indices]


def forecast_trajectory(bundle, dataset, index, n_steps, n_members, seed=0, noise_per_step='resample', model_id=''):
    """Rollout from the first frames of trajectory `index`, and the true states it forecasts"""
    states = dataset.trajectory(index)
    history_len = bundle.config.history_len
    forecast = rollout(bundle, states[:history_len], n_steps, n_members, seed=trajectory_seed(seed, index),
                       noise_per_step=noise_per_step, model_id=model_id)
    return forecast, states[history_len:history_len + n_steps]


def evaluate_model(bundle, dataset, config=None, model_id='', threads=None, verbose=False):
    """Rolls out the model from every trajectory of a split and aggregates the records

    Parameters
    ----------
    bundle : ModelBundle
    dataset : TrajectoryDataset
    config : EvalConfig, optional
    model_id : str
    threads : int, optional
        trajectories evaluated in parallel; the report does not depend on it
    verbose : bool, default is False

    Returns
    -------
    MetricsReport
    """
    config = (config or EvalConfig()).validate()
    bundle.check_data_shape(dataset.channels, dataset.grid)
    n_members = config.n_members
    if not bundle.has_noise_branch and n_members != 1:
        logger.info(f'{model_id or "The model"} has no noise branch, evaluating it as a single member.')
        n_members = 1
    n_steps = resolve_horizon(dataset, bundle.config.history_len, config.n_steps)
    indices = split_trajectories(dataset, config.split, config.max_trajectories)

    with tqdm(total=len(indices), disable=not verbose, desc=f'evaluate {model_id}'.strip()) as progress:
        def run(index):
            forecast, truth = forecast_trajectory(bundle, dataset, index, n_steps, n_members, seed=config.seed,
                                                  noise_per_step=config.noise_per_step, model_id=model_id)
            progress.update()
            return trajectory_metrics(forecast, truth, trajectory=index)

        records = parallel_map(run, indices, threads=threads)

    report = bootstrap_aggregate(records, n_boot=config.n_boot, levels=tuple(config.levels), seed=config.seed)
    report.provenance.update(model_id=model_id, n_members=n_members, n_steps=n_steps, split=config.split,
                             noise_per_step=config.noise_per_step, dataset_hash=dataset.content_hash())
    diverged = report.median('diverged_fraction')
    logger.info(f'{model_id or "model"}: median fcrps={report.median("fcrps"):.4g}, '
                f'vrmse={report.median("vrmse"):.4g}, ssr={report.median("ssr"):.4g} '
                f'over {len(records)} trajectories (M={n_members}, {n_steps} steps, '
                f'median diverged fraction {diverged:.3g}).')
    return report

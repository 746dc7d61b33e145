"""Teacher-forced training: deterministic pretraining / fine-tuning and CRPS retrofitting

Both pipelines draw random ``(trajectory, t)`` windows from the train split,
compute their loss on the normalised next state and keep the parameters with
the best validation loss. A deterministic step draws ``batch_size * M_train``
windows while a retrofit step draws ``batch_size`` windows and replicates each
of them ``M_train`` times, so that two runs sharing ``(epochs, steps_per_epoch,
batch_size, M_train)`` perform the same number of member-forward passes.
"""

import copy
import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from ..errors import ConfigError, NumericalError
from ..functional.crps import mae, mse, fair_crps
from ..models.backbone import BackboneConfig
from ..models.bundle import make_bundle, attach_noise_branch
from ..models.checkpoint import load_bundle
from ..utils.seeding import numpy_rng, torch_generator
from .optim import build_optimizer, build_scheduler, clip_grad_norm, global_grad_norm, group_lrs
from .schedules import SCHEDULES, check_schedule

# License: BSD 3 clause

logger = logging.getLogger(__name__)

LOSSES = ('mae', 'mse', 'fair_crps')
POINT_LOSSES = {'mae': mae, 'mse': mse}
# settings of the retrofitting tables, used for the keys a retrofit run leaves out
RETROFIT_DEFAULTS = {'loss': 'fair_crps', 'lr_backbone': 1e-4, 'lr_noise': 1e-3, 'warmup_epochs': 5,
                     'cooldown_epochs': 5, 'epochs': 20}
LOG_COLUMNS = ('epoch', 'step', 'lr_backbone', 'lr_noise', 'train_loss', 'val_loss', 'grad_norm', 'seconds')

# keys of the training random streams
_WINDOW_STREAM = 0
_NOISE_STREAM = 1
_VAL_NOISE_STREAM = 2
_VAL_WINDOW_STREAM = 3
_VAL_CHUNK = 512


@dataclass
class TrainConfig:
    """Optimisation settings shared by both pipelines

    Parameters
    ----------
    loss : {'mae', 'mse', 'fair_crps'}
        'fair_crps' for retrofitting, a point loss otherwise
    lr_backbone, lr_noise : float
        peak learning rates of the two parameter groups; `lr_noise` only
        applies to a noise branch
    schedule : {'inv_sqrt', 'cosine'}
    warmup_epochs, cooldown_epochs : int
    grad_clip_norm : float or None, default is 10
        global gradient norm clipping threshold
    weight_decay : float, default is 1e-4
        decoupled (AdamW) weight decay
    batch_size : int
        number of distinct inputs per retrofit step
    M_train : int, default is 4
        training ensemble size
    epochs, steps_per_epoch : int
    grad_accum_steps : int, default is 1
        micro-batches accumulated before each optimizer step
    val_windows : int
        maximum number of validation windows, a fixed random subset if the split has more
    seed : int
    """
    loss: str = 'mae'
    lr_backbone: float = 1e-3
    lr_noise: float = 1e-3
    schedule: str = 'inv_sqrt'
    warmup_epochs: int = 0
    cooldown_epochs: int = 0
    grad_clip_norm: float = 10.0
    weight_decay: float = 1e-4
    batch_size: int = 32
    M_train: int = 4
    epochs: int = 10
    steps_per_epoch: int = 100
    grad_accum_steps: int = 1
    val_windows: int = 1024
    seed: int = 0

    @property
    def total_steps(self):
        return self.epochs*self.steps_per_epoch

    @property
    def warmup_steps(self):
        return self.warmup_epochs*self.steps_per_epoch

    @property
    def cooldown_steps(self):
        return self.cooldown_epochs*self.steps_per_epoch

    def validate(self, retrofit=None):
        """Checks the settings, and their fit with a pipeline if `retrofit` is given"""
        if self.loss not in LOSSES:
            raise ConfigError(f'Got loss={self.loss} but expected one of {LOSSES}.')
        if self.schedule not in SCHEDULES:
            raise ConfigError(f'Got schedule={self.schedule} but expected one of {SCHEDULES}.')
        for name in ('batch_size', 'M_train', 'epochs', 'steps_per_epoch', 'grad_accum_steps', 'val_windows'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f'Got {name}={getattr(self, name)} but expected a positive integer.')
        if self.lr_backbone < 0 or self.lr_noise < 0 or self.weight_decay < 0:
            raise ConfigError('Learning rates and weight decay must be non-negative.')
        if self.grad_clip_norm is not None and not self.grad_clip_norm > 0:
            raise ConfigError(f'Got grad_clip_norm={self.grad_clip_norm}, expected a positive norm or None.')
        check_schedule(self.total_steps, self.warmup_steps, self.cooldown_steps, self.schedule)
        if retrofit is True:
            if self.loss != 'fair_crps':
                raise ConfigError(f'Retrofitting trains with loss=fair_crps, but got loss={self.loss}.')
            if self.M_train < 2:
                raise ConfigError(f'Retrofitting needs an ensemble of M_train >= 2 members, but got {self.M_train}.')
        elif retrofit is False and self.loss not in POINT_LOSSES:
            raise ConfigError(f'Deterministic training uses one of {tuple(POINT_LOSSES)}, but got loss={self.loss}.')
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def for_retrofit(cls, **kwargs):
        """Retrofit settings: `kwargs` on top of :data:`RETROFIT_DEFAULTS`"""
        return cls(**{**RETROFIT_DEFAULTS, **kwargs})


def member_forward_budget(config):
    """Member-forward passes performed by a training run with `config`"""
    return (config.epochs*config.steps_per_epoch*config.grad_accum_steps
            *config.batch_size*config.M_train)


@dataclass
class TrainLog:
    """Per-epoch summaries and per-step traces of a training run

    Epoch 0 holds the validation loss of the initial parameters.
    """
    rows: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    clipped_norms: list = field(default_factory=list)
    member_forwards: int = 0
    best_epoch: int = 0
    best_val_loss: float = math.inf

    @property
    def n_steps(self):
        return len(self.step_losses)

    def append(self, **row):
        missing = set(LOG_COLUMNS) - set(row)
        if missing:
            raise ValueError(f'Log row is missing {sorted(missing)}.')
        if self.rows and row['step'] < self.rows[-1]['step']:
            raise ValueError(f'Step counter went back from {self.rows[-1]["step"]} to {row["step"]}.')
        self.rows.append({name: row[name] for name in LOG_COLUMNS})

    def column(self, name):
        return [row[name] for row in self.rows]

    def to_csv(self, path, config_hash=None):
        """Writes the per-epoch rows, preceded by a ``# config_hash=`` comment if given"""
        path = Path(path)
        with open(path, 'w', newline='') as f:
            if config_hash is not None:
                f.write(f'# config_hash={config_hash}\n')
            writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (repr(float(v)) if k not in ('epoch', 'step') else int(v)) for k, v in row.items()})
        return path

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path, newline='') as f:
            lines = [line for line in f if not line.startswith('#')]
        for row in csv.DictReader(lines):
            log.append(**{k: (int(v) if k in ('epoch', 'step') else float(v)) for k, v in row.items()})
        return log


def _point_loss(bundle, history_n, target_n, loss):
    return POINT_LOSSES[loss](bundle.predict_normalised(history_n), target_n)


def _ensemble_loss(bundle, history_n, target_n, n_members, generator):
    """fair CRPS of `n_members` modulated forecasts of every window, one noise draw per (member, window)"""
    batch_size = history_n.shape[0]
    # member-major, as in ModelBundle.forward_ensemble
    replicated = history_n.repeat((n_members, ) + (1, )*(history_n.ndim - 1))
    eps = torch.randn((n_members*batch_size, bundle.noise_branch.d_noise), generator=generator,
                      dtype=history_n.dtype).to(history_n.device)
    pred = bundle.forward_members(replicated, eps)
    pred = pred.reshape((n_members, batch_size) + tuple(pred.shape[1:]))
    return fair_crps(pred, target_n)


def _validation_windows(bundle, dataset, config):
    history_len = bundle.config.history_len
    n = dataset.n_windows('val', history_len)
    if n == 0:
        raise ConfigError(f'The validation split has no windows of length {history_len + 1}.')
    if n <= config.val_windows:
        index = np.arange(n)
    else:
        index = np.sort(numpy_rng(config.seed, _VAL_WINDOW_STREAM).choice(n, config.val_windows, replace=False))
    history, target = dataset.windows('val', history_len, index)
    return bundle.normalise(history), bundle.normalise(target)


def validation_loss(bundle, history_n, target_n, config, retrofit):
    """Loss of the matching objective on fixed validation windows, in normalised space"""
    bundle.eval()
    generator = torch_generator(config.seed, _VAL_NOISE_STREAM)
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, history_n.shape[0], _VAL_CHUNK):
            h, t = history_n[start:start + _VAL_CHUNK], target_n[start:start + _VAL_CHUNK]
            if retrofit:
                loss = _ensemble_loss(bundle, h, t, config.M_train, generator)
            else:
                loss = _point_loss(bundle, h, t, config.loss)
            total += float(loss)*h.shape[0]
            count += h.shape[0]
    return total/count


def _fit(bundle, dataset, config, retrofit, verbose=False):
    bundle.check_data_shape(dataset.channels, dataset.grid)
    bundle.check_finite()
    history_len = bundle.config.history_len
    window_rng = numpy_rng(config.seed, _WINDOW_STREAM)
    noise_generator = torch_generator(config.seed, _NOISE_STREAM)
    if retrofit:
        n_windows, n_members = config.batch_size, config.M_train
    else:
        n_windows, n_members = config.batch_size*config.M_train, 1

    val_history, val_target = _validation_windows(bundle, dataset, config)
    optimizer = build_optimizer(bundle, config.lr_backbone, config.lr_noise if retrofit else None,
                                weight_decay=config.weight_decay)
    scheduler = build_scheduler(optimizer, config.total_steps, config.warmup_steps, config.cooldown_steps,
                                config.schedule)
    params = [p for group in optimizer.param_groups for p in group['params']]

    log = TrainLog()
    start = time.perf_counter()
    val_loss = validation_loss(bundle, val_history, val_target, config, retrofit)
    lrs = group_lrs(optimizer)
    log.append(epoch=0, step=0, lr_backbone=lrs['backbone'], lr_noise=lrs['noise'], train_loss=math.nan,
               val_loss=val_loss, grad_norm=math.nan, seconds=0.0)
    log.best_val_loss = val_loss
    best_state = copy.deepcopy(bundle.state_dict())
    logger.info(f'Initial validation loss: {val_loss:.6g}.')

    step = 0
    for epoch in tqdm(range(1, config.epochs + 1), disable=not verbose, desc='retrofit' if retrofit else 'train'):
        bundle.train()
        epoch_losses, epoch_norms = [], []
        for _ in range(config.steps_per_epoch):
            optimizer.zero_grad()
            step_loss = 0.0
            for _ in range(config.grad_accum_steps):
                history, target = dataset.sample_windows(window_rng, n_windows, history_len)
                history_n, target_n = bundle.normalise(history), bundle.normalise(target)
                if retrofit:
                    loss = _ensemble_loss(bundle, history_n, target_n, n_members, noise_generator)
                else:
                    loss = _point_loss(bundle, history_n, target_n, config.loss)
                if not torch.isfinite(loss):
                    raise NumericalError(f'Non-finite training loss {float(loss)}', epoch=epoch, step=step)
                (loss/config.grad_accum_steps).backward()
                log.member_forwards += n_windows*n_members
                step_loss += float(loss)/config.grad_accum_steps

            norm = global_grad_norm(params)
            if not math.isfinite(norm):
                raise NumericalError(f'Non-finite gradient norm {norm}', epoch=epoch, step=step)
            if config.grad_clip_norm is not None:
                clip_grad_norm(params, config.grad_clip_norm)
            log.grad_norms.append(norm)
            log.clipped_norms.append(global_grad_norm(params))
            optimizer.step()
            scheduler.step()
            step += 1
            log.step_losses.append(step_loss)
            epoch_losses.append(step_loss)
            epoch_norms.append(norm)
            logger.debug(f'epoch {epoch} step {step}: loss={step_loss:.6g}, grad_norm={norm:.4g}')

        val_loss = validation_loss(bundle, val_history, val_target, config, retrofit)
        if not math.isfinite(val_loss):
            raise NumericalError(f'Non-finite validation loss {val_loss}', epoch=epoch, step=step)
        lrs = group_lrs(optimizer)
        log.append(epoch=epoch, step=step, lr_backbone=lrs['backbone'], lr_noise=lrs['noise'],
                   train_loss=float(np.mean(epoch_losses)), val_loss=val_loss,
                   grad_norm=float(np.mean(epoch_norms)), seconds=time.perf_counter() - start)
        if val_loss < log.best_val_loss:
            log.best_val_loss, log.best_epoch = val_loss, epoch
            best_state = copy.deepcopy(bundle.state_dict())
        logger.info(f'Epoch {epoch}/{config.epochs}: train_loss={log.rows[-1]["train_loss"]:.6g}, '
                    f'val_loss={val_loss:.6g}, grad_norm={log.rows[-1]["grad_norm"]:.4g}.')

    bundle.load_state_dict(best_state)
    bundle.eval()
    logger.info(f'Kept the parameters of epoch {log.best_epoch} (val_loss={log.best_val_loss:.6g}), '
                f'{log.member_forwards} member-forward passes.')
    return bundle, log


def _as_bundle(model):
    if isinstance(model, (str, Path)):
        return load_bundle(model)
    return copy.deepcopy(model)


def train_deterministic(dataset, backbone_config=None, train_config=None, init=None, verbose=False):
    """Trains a deterministic next-step model with a point loss

    Parameters
    ----------
    dataset : TrajectoryDataset
    backbone_config : BackboneConfig or dict, optional
        architecture of a freshly initialised model; ignored if `init` is given
    train_config : TrainConfig
    init : ModelBundle or path, optional
        deterministic checkpoint to fine-tune; the optimizer always starts afresh
    verbose : bool, default is False

    Returns
    -------
    ModelBundle, TrainLog
    """
    train_config = (train_config or TrainConfig()).validate(retrofit=False)
    if init is not None:
        bundle = _as_bundle(init)
        if bundle.has_noise_branch:
            raise ConfigError('Deterministic fine-tuning expects a checkpoint without a noise branch.')
    else:
        if backbone_config is None:
            raise ConfigError('Either a backbone configuration or an initial checkpoint is required.')
        if isinstance(backbone_config, dict):
            backbone_config = BackboneConfig.from_dict(backbone_config)
        bundle = make_bundle(backbone_config, stats=dataset.stats, seed=train_config.seed)
    return _fit(bundle, dataset, train_config, retrofit=False, verbose=verbose)


def retrofit_crps(dataset, det_checkpoint, noise_config, train_config=None, zero_init=False, verbose=False):
    """Attaches a noise branch to a deterministic model and trains both with the fair CRPS

    Parameters
    ----------
    dataset : TrajectoryDataset
    det_checkpoint : ModelBundle or path
        deterministic starting point, left untouched
    noise_config : NoiseBranchConfig
    train_config : TrainConfig
        `lr_backbone` and `lr_noise` set the rates of the two parameter groups
    zero_init : bool, default is False
        start with exactly zero AdaLN heads
    verbose : bool, default is False

    Returns
    -------
    ModelBundle, TrainLog
    """
    train_config = (train_config or TrainConfig.for_retrofit()).validate(retrofit=True)
    if train_config.lr_noise < train_config.lr_backbone:
        warnings.warn(f'Got lr_noise={train_config.lr_noise} < lr_backbone={train_config.lr_backbone}: '
                      'retrofitting normally trains the new noise branch with the larger learning rate.')
    bundle = _as_bundle(det_checkpoint)
    bundle = attach_noise_branch(bundle, noise_config, seed=train_config.seed, zero_init=zero_init)
    return _fit(bundle, dataset, train_config, retrofit=True, verbose=verbose)

import math

import numpy as np
import pytest
import torch

import tensorly as tl
tl.set_backend('pytorch')

from ..trainer import (TrainConfig, TrainLog, train_deterministic, retrofit_crps, member_forward_budget,
                       LOG_COLUMNS)
from ...dynamics.systems import SystemSpec
from ...dynamics.dataset import generate_dataset, TrajectoryDataset
from ...functional.crps import mae
from ...layers.modulation import NoiseBranchConfig
from ...models.backbone import BackboneConfig
from ...models.bundle import make_bundle, attach_noise_branch
from ...models.checkpoint import save_bundle
from ...utils.seeding import numpy_rng
from ...errors import ConfigError, NumericalError

# License: BSD 3 clause


@pytest.fixture(scope='module')
def dataset():
    spec = SystemSpec(system='lorenz96', grid=[8], dt=0.05, substeps=5, n_trajectories=10,
                      n_steps=12, seed=0, warmup=1.0)
    return generate_dataset(spec, threads=1)


def backbone_config(**kwargs):
    return BackboneConfig(history_len=2, channels=1, spatial_dims=[8], hidden_dim=8, n_blocks=2, **kwargs)


def train_config(**kwargs):
    base = dict(loss='mae', lr_backbone=1e-3, lr_noise=1e-2, epochs=2, steps_per_epoch=3,
                batch_size=4, M_train=2, seed=0)
    base.update(kwargs)
    return TrainConfig(**base)


def _random_head(bundle, seed=0):
    with torch.no_grad():
        bundle.backbone.head.weight.normal_(0, 0.1, generator=torch.Generator().manual_seed(seed))
    return bundle


def test_train_deterministic_log(dataset):
    config = train_config()
    bundle, log = train_deterministic(dataset, backbone_config(), config)
    assert log.column('epoch') == [0, 1, 2]
    assert log.column('step') == [0, 3, 6]
    assert log.n_steps == config.total_steps
    assert math.isnan(log.rows[0]['train_loss'])
    assert log.member_forwards == member_forward_budget(config)
    assert log.best_val_loss <= log.rows[0]['val_loss']
    assert log.best_val_loss == min(log.column('val_loss'))
    assert not bundle.has_noise_branch
    assert torch.equal(bundle.stats_std, torch.as_tensor(dataset.std))


def test_train_deterministic_reproducible(dataset):
    config = train_config(epochs=1)
    first, log1 = train_deterministic(dataset, backbone_config(), config)
    second, log2 = train_deterministic(dataset, backbone_config(), config)
    assert log1.step_losses == log2.step_losses
    assert log1.column('val_loss') == log2.column('val_loss')
    for p, q in zip(first.parameters(), second.parameters()):
        assert torch.equal(p, q)


def test_zero_learning_rate(dataset):
    config = train_config(lr_backbone=0.0)
    bundle, log = train_deterministic(dataset, backbone_config(), config)
    fresh = make_bundle(backbone_config(), stats=dataset.stats, seed=config.seed)
    for p, q in zip(bundle.parameters(), fresh.parameters()):
        assert torch.equal(p, q)
    assert len(set(log.column('val_loss'))) == 1
    assert log.best_epoch == 0


def test_gradient_clipping(dataset):
    max_norm = 1e-3
    init = _random_head(make_bundle(backbone_config(), stats=dataset.stats, seed=1))
    _, log = train_deterministic(dataset, train_config=train_config(grad_clip_norm=max_norm), init=init)
    assert all(norm <= max_norm + 1e-9 for norm in log.clipped_norms)
    for before, after in zip(log.grad_norms, log.clipped_norms):
        assert abs(after - min(before, max_norm)) < 1e-9


def test_non_finite_loss(dataset):
    states = dataset.states.copy()
    states[:, :, 0, 3] = np.nan
    poisoned = TrajectoryDataset(states, dataset.spec, mean=dataset.mean, std=dataset.std)
    with pytest.raises(NumericalError) as err:
        train_deterministic(poisoned, backbone_config(), train_config())
    assert err.value.epoch == 1
    assert err.value.step == 0


def test_rejects_incompatible_data(dataset):
    config = BackboneConfig(history_len=2, channels=1, spatial_dims=[16], hidden_dim=8, n_blocks=2)
    with pytest.raises(ConfigError):
        train_deterministic(dataset, config, train_config())
    with pytest.raises(ConfigError):
        train_deterministic(dataset, backbone_config(), train_config(loss='fair_crps'))


def test_retrofit_zero_init_matches_mae(dataset):
    config = train_config(loss='fair_crps', lr_backbone=0.0, lr_noise=0.0, epochs=1, steps_per_epoch=2)
    det = _random_head(make_bundle(backbone_config(long_skips=True), stats=dataset.stats, seed=0))
    bundle, log = retrofit_crps(dataset, det, NoiseBranchConfig(d_noise=4), config, zero_init=True)
    assert bundle.has_noise_branch

    rng = numpy_rng(config.seed, 0)
    history, target = dataset.sample_windows(rng, config.batch_size, det.config.history_len)
    with torch.no_grad():
        expected = mae(det.predict_normalised(det.normalise(history)), det.normalise(target))
    assert abs(log.step_losses[0] - float(expected)) < 1e-9
    # the deterministic model is left untouched
    assert not det.has_noise_branch


def test_retrofit_trains_both_groups(dataset, tmp_path):
    det = _random_head(make_bundle(backbone_config(), stats=dataset.stats, seed=0))
    path = save_bundle(det, tmp_path/'det.ckpt')
    config = train_config(loss='fair_crps', lr_backbone=1e-3, lr_noise=1e-2)
    bundle, log = retrofit_crps(dataset, path, NoiseBranchConfig(d_noise=4), config)
    assert log.rows[-1]['lr_noise'] > log.rows[-1]['lr_backbone'] > 0
    assert log.member_forwards == member_forward_budget(config)
    if log.best_epoch > 0:
        start = attach_noise_branch(det, NoiseBranchConfig(d_noise=4), seed=config.seed)
        changed = [not torch.equal(p, q) for p, q in zip(bundle.noise_branch.parameters(),
                                                         start.noise_branch.parameters())]
        assert any(changed)


def test_compute_matching(dataset):
    det = _random_head(make_bundle(backbone_config(), stats=dataset.stats, seed=0))
    shared = dict(epochs=1, steps_per_epoch=2, batch_size=3, M_train=4, grad_accum_steps=2)
    _, finetune_log = train_deterministic(dataset, train_config=train_config(loss='mae', **shared), init=det)
    _, retrofit_log = retrofit_crps(dataset, det, NoiseBranchConfig(d_noise=4),
                                    train_config(loss='fair_crps', **shared))
    assert finetune_log.member_forwards == retrofit_log.member_forwards == 1*2*2*3*4


def test_retrofit_config_checks(dataset):
    det = make_bundle(backbone_config(), stats=dataset.stats, seed=0)
    noise = NoiseBranchConfig(d_noise=4)
    with pytest.raises(ConfigError):
        retrofit_crps(dataset, det, noise, train_config(loss='mae'))
    with pytest.raises(ConfigError):
        retrofit_crps(dataset, det, noise, train_config(loss='fair_crps', M_train=1))
    with pytest.warns(UserWarning, match='lr_noise'):
        retrofit_crps(dataset, det, noise, train_config(loss='fair_crps', lr_backbone=1e-2, lr_noise=1e-3, epochs=1))

    retrofitted = attach_noise_branch(det, noise)
    with pytest.raises(ConfigError):
        train_deterministic(dataset, train_config=train_config(), init=retrofitted)
    with pytest.raises(ConfigError):
        retrofit_crps(dataset, retrofitted, noise, train_config(loss='fair_crps'))


def test_train_log_csv(tmp_path):
    log = TrainLog()
    log.append(epoch=0, step=0, lr_backbone=0.0, lr_noise=0.0, train_loss=math.nan, val_loss=1.5,
               grad_norm=math.nan, seconds=0.0)
    log.append(epoch=1, step=10, lr_backbone=1e-4, lr_noise=1e-3, train_loss=1.2, val_loss=1.1,
               grad_norm=3.0, seconds=2.5)
    path = log.to_csv(tmp_path/'log.csv', config_hash='0123456789abcdef')
    lines = path.read_text().splitlines()
    assert lines[0] == '# config_hash=0123456789abcdef'
    assert lines[1] == ','.join(LOG_COLUMNS)
    assert len(lines) == 4

    loaded = TrainLog.from_csv(path)
    assert loaded.column('step') == [0, 10]
    assert loaded.rows[1] == log.rows[1]
    assert math.isnan(loaded.rows[0]['train_loss'])

    with pytest.raises(ValueError):
        log.append(epoch=2, step=5, lr_backbone=0.0, lr_noise=0.0, train_loss=0.0, val_loss=0.0,
                   grad_norm=0.0, seconds=0.0)

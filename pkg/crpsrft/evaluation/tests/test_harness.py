import warnings

import pytest
import torch

import tensorly as tl
tl.set_backend('pytorch')

from ..harness import EvalConfig, evaluate_model, resolve_horizon, trajectory_seed
from ..bootstrap import paired_improvement
from ...dynamics.systems import SystemSpec
from ...dynamics.dataset import generate_dataset
from ...layers.modulation import NoiseBranchConfig
from ...models.backbone import BackboneConfig
from ...models.bundle import make_bundle, attach_noise_branch
from ...errors import ConfigError

# License: BSD 3 clause


@pytest.fixture(scope='module')
def dataset():
    spec = SystemSpec(system='lorenz96', grid=[8], dt=0.05, substeps=5, n_trajectories=20,
                      n_steps=12, seed=1, warmup=1.0)
    return generate_dataset(spec, threads=1)


def _bundle(dataset, noise=False, channels=1):
    config = BackboneConfig(history_len=2, channels=channels, spatial_dims=[8], hidden_dim=6, n_blocks=1)
    stats = (dataset.mean, dataset.std) if channels == 1 else None
    bundle = make_bundle(config, stats=stats, seed=0)
    with torch.no_grad():
        bundle.backbone.head.weight.normal_(0, 0.05, generator=torch.Generator().manual_seed(0))
    if noise:
        bundle = attach_noise_branch(bundle, NoiseBranchConfig(d_noise=4, init_scale=0.5), seed=1)
    return bundle


def _config(**kwargs):
    base = dict(n_members=4, n_steps=5, split='train', n_boot=30, max_trajectories=6, seed=2)
    base.update(kwargs)
    return EvalConfig(**base)


def test_thread_invariance(dataset):
    bundle = _bundle(dataset, noise=True)
    serial = evaluate_model(bundle, dataset, _config(), model_id='crps', threads=1)
    threaded = evaluate_model(bundle, dataset, _config(), model_id='crps', threads=3)
    assert serial.records == threaded.records
    assert serial.summary == threaded.summary
    assert [r.trajectory for r in serial.records] == list(dataset.split_indices('train')[:6])
    assert all(r.n_members == 4 for r in serial.records)
    assert serial.provenance['dataset_hash'] == dataset.content_hash()


def test_deterministic_single_member(dataset):
    report = evaluate_model(_bundle(dataset), dataset, _config(n_members=8), model_id='det')
    assert report.provenance['n_members'] == 1
    assert all(r.n_members == 1 for r in report.records)
    for r in report.records:
        assert r.fcrps == pytest.approx(sum(r.lead_time['fcrps'])/5, abs=1e-12)


def test_self_baseline(dataset):
    report = evaluate_model(_bundle(dataset), dataset, _config(), model_id='det')
    improvement = paired_improvement(report.records, report.records, n_boot=50)
    assert improvement['median'] == 0
    assert improvement['ci95'] == [0, 0]


def test_horizon(dataset):
    with pytest.warns(UserWarning, match='shortening'):
        assert resolve_horizon(dataset, 2) == 10
    with warnings.catch_warnings():
        warnings.simplefilter('error')
        assert resolve_horizon(dataset, 2, 4) == 4
    with pytest.warns(UserWarning):
        report = evaluate_model(_bundle(dataset), dataset, _config(n_steps=None))
    assert report.provenance['n_steps'] == 10
    assert len(report.lead_time['vrmse']) == 10


def test_invalid_evaluations(dataset):
    with pytest.raises(ConfigError):
        evaluate_model(_bundle(dataset, channels=2), dataset, _config())
    with pytest.raises(ConfigError):
        evaluate_model(_bundle(dataset), dataset, _config(split='holdout'))
    with pytest.raises(ConfigError):
        evaluate_model(_bundle(dataset), dataset, _config(max_trajectories=1))
    with pytest.raises(ConfigError):
        _config(n_members=0).validate()


def test_trajectory_seeds():
    assert trajectory_seed(0, 1) == trajectory_seed(0, 1)
    assert len({trajectory_seed(0, i) for i in range(100)}) == 100


def test_config_dict():
    config = _config(levels=[90])
    assert EvalConfig.from_dict(config.to_dict()) == config

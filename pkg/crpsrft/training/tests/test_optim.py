import math

import pytest
import torch
from torch import nn

import tensorly as tl
tl.set_backend('pytorch')

from ..optim import global_grad_norm, clip_grad_norm, build_optimizer, build_scheduler, group_lrs
from ...layers.modulation import NoiseBranchConfig
from ...models.backbone import BackboneConfig
from ...models.bundle import make_bundle, attach_noise_branch

# License: BSD 3 clause


def _params_with_grads(*grads):
    params = []
    for grad in grads:
        p = nn.Parameter(torch.zeros_like(grad))
        p.grad = grad.clone()
        params.append(p)
    return params


def _bundle(noise=True):
    config = BackboneConfig(history_len=1, channels=1, spatial_dims=[6], hidden_dim=4, n_blocks=2)
    bundle = make_bundle(config, seed=0)
    if noise:
        bundle = attach_noise_branch(bundle, NoiseBranchConfig(d_noise=3), seed=0)
    return bundle


def test_clip_grad_norm():
    params = _params_with_grads(torch.tensor([3.0, 0.0], dtype=torch.float64),
                                torch.tensor([[4.0]], dtype=torch.float64))
    assert global_grad_norm(params) == pytest.approx(5.0)
    assert clip_grad_norm(params, 10.0) == 1.0
    assert global_grad_norm(params) == pytest.approx(5.0)

    params = _params_with_grads(torch.tensor([12.0, 16.0], dtype=torch.float64))
    assert clip_grad_norm(params, 10.0) == pytest.approx(0.5)
    assert global_grad_norm(params) == pytest.approx(10.0)


@pytest.mark.parametrize('seed', [0, 1, 2, 3])
@pytest.mark.parametrize('max_norm', [0.1, 1.0, 100.0])
def test_clip_grad_norm_random(seed, max_norm):
    rng = tl.check_random_state(seed)
    grads = [torch.tensor(rng.standard_normal(shape)) for shape in [(3, 4), (5, ), (2, 2, 2)]]
    params = _params_with_grads(*grads)
    params.append(nn.Parameter(torch.ones(2, dtype=torch.float64)))  # no gradient
    norm = math.sqrt(sum(float((g**2).sum()) for g in grads))
    clip_grad_norm(params, max_norm)
    assert abs(global_grad_norm(params) - min(norm, max_norm)) < 1e-9


def test_param_groups_partition():
    bundle = _bundle()
    optimizer = build_optimizer(bundle, 1e-4, 1e-3)
    assert [g['name'] for g in optimizer.param_groups] == ['backbone', 'noise']
    ids = [id(p) for group in optimizer.param_groups for p in group['params']]
    assert len(ids) == len(set(ids))
    assert set(ids) == {id(p) for p in bundle.parameters()}
    n_grouped = sum(p.numel() for group in optimizer.param_groups for p in group['params'])
    assert n_grouped == sum(p.numel() for p in bundle.parameters())
    assert group_lrs(optimizer) == {'backbone': 1e-4, 'noise': 1e-3}

    optimizer = build_optimizer(_bundle(noise=False), 1e-4)
    assert len(optimizer.param_groups) == 1
    assert group_lrs(optimizer)['noise'] == 0.0


def test_adamw_decoupled_decay():
    bundle = _bundle()
    lr, weight_decay = 0.1, 0.01
    optimizer = build_optimizer(bundle, lr, lr, weight_decay=weight_decay)
    before = [p.detach().clone() for p in bundle.parameters()]
    for p in bundle.parameters():
        p.grad = torch.zeros_like(p)
    optimizer.step()
    for p, q in zip(bundle.parameters(), before):
        torch.testing.assert_close(p.detach(), q*(1 - lr*weight_decay), rtol=1e-15, atol=0)


def test_scheduler_drives_both_groups():
    bundle = _bundle()
    optimizer = build_optimizer(bundle, 1e-4, 1e-3)
    scheduler = build_scheduler(optimizer, total_steps=10, warmup_steps=2, cooldown_steps=2)
    assert group_lrs(optimizer) == {'backbone': 0.0, 'noise': 0.0}
    for _ in range(2):
        optimizer.step()
        scheduler.step()
    lrs = group_lrs(optimizer)
    assert lrs['backbone'] == pytest.approx(1e-4)
    assert lrs['noise'] == pytest.approx(1e-3)
    for _ in range(8):
        optimizer.step()
        scheduler.step()
    assert group_lrs(optimizer) == {'backbone': 0.0, 'noise': 0.0}

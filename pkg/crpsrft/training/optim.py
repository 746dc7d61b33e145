"""AdamW with one parameter group per component, gradient clipping and schedules"""

import math
from functools import partial

import torch
from torch.optim.lr_scheduler import LambdaLR

from ..errors import ConfigError
from .schedules import lr_schedule, check_schedule

# License: BSD 3 clause

ADAMW_BETAS = (0.9, 0.999)
ADAMW_EPS = 1e-8


def _grads(params):
    return [p.grad for p in params if p.grad is not None]


def global_grad_norm(params):
    """L2 norm of all the gradients of `params`, taken together"""
    grads = _grads(params)
    if not grads:
        return 0.0
    return math.sqrt(sum(float(torch.sum(g.detach().double()**2)) for g in grads))


def clip_grad_norm(params, max_norm):
    """Rescales the gradients in place so that their global norm is at most `max_norm`

    Parameters
    ----------
    params : iterable of torch.nn.Parameter
    max_norm : float

    Returns
    -------
    float
        the scale that was applied, ``min(1, max_norm/norm)``
    """
    params = list(params)
    norm = global_grad_norm(params)
    if not math.isfinite(norm) or norm <= max_norm:
        return 1.0
    scale = max_norm/norm
    with torch.no_grad():
        for grad in _grads(params):
            grad.mul_(scale)
    return scale


def build_optimizer(bundle, lr_backbone, lr_noise=None, weight_decay=1e-4, betas=ADAMW_BETAS, eps=ADAMW_EPS):
    """AdamW over the backbone and, if present, the noise branch, with their own learning rates

    The groups are named (``group['name']``) so that logs can report each rate.
    """
    groups = bundle.param_groups()
    param_groups = [{'params': groups['backbone'], 'lr': lr_backbone, 'name': 'backbone'}]
    if groups['noise']:
        if lr_noise is None:
            raise ConfigError('The model has a noise branch but no learning rate was given for it.')
        param_groups.append({'params': groups['noise'], 'lr': lr_noise, 'name': 'noise'})
    return torch.optim.AdamW(param_groups, lr=lr_backbone, betas=betas, eps=eps, weight_decay=weight_decay)


def build_scheduler(optimizer, total_steps, warmup_steps=0, cooldown_steps=0, kind='inv_sqrt'):
    """LambdaLR applying :func:`~crpsrft.training.schedules.lr_schedule` to every group"""
    check_schedule(total_steps, warmup_steps, cooldown_steps, kind)
    multiplier = partial(lr_schedule, total_steps=total_steps, warmup_steps=warmup_steps,
                         cooldown_steps=cooldown_steps, kind=kind)
    return LambdaLR(optimizer, multiplier)


def group_lrs(optimizer):
    """Current learning rate of each named group, 0 for absent groups"""
    lrs = {'backbone': 0.0, 'noise': 0.0}
    for group in optimizer.param_groups:
        lrs[group.get('name', 'backbone')] = group['lr']
    return lrs

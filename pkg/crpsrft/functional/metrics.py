"""Frame-level verification metrics

Frames have shape ``(*batch, *spatial)``; the spatial mean operator averages over
the last `n_spatial` axes.
"""

import math

import torch

from ..errors import ShapeError

# License: BSD 3 clause

VRMSE_EPS = 1e-6
# skill below this fraction of the RMS of the truth is rounding error of the ensemble mean
ZERO_SKILL_RTOL = 1e-12


def _spatial_dims(x, n_spatial):
    if n_spatial is None:
        n_spatial = x.ndim
    if not 1 <= n_spatial <= x.ndim:
        raise ShapeError('spatial mean', x.shape, message=f'cannot average over {n_spatial} spatial axes')
    return tuple(range(x.ndim - n_spatial, x.ndim))


def vrmse(pred, true, n_spatial=None, eps=VRMSE_EPS):
    """Variance-normalised RMSE

    ``sqrt(<(u - v)^2> / (<(u - <u>)^2> + eps))`` with u the true field and v the prediction.

    Parameters
    ----------
    pred, true : torch.Tensor
        same shape
    n_spatial : int, optional
        number of trailing spatial axes, by default all axes
    eps : float, default is 1e-6

    Returns
    -------
    torch.Tensor
        one value per leading (non-spatial) index
    """
    if tuple(pred.shape) != tuple(true.shape):
        raise ShapeError('vrmse', pred.shape, true.shape)
    dims = _spatial_dims(true, n_spatial)
    err = ((true - pred)**2).mean(dim=dims)
    var = ((true - true.mean(dim=dims, keepdim=True))**2).mean(dim=dims)
    return torch.sqrt(err/(var + eps))


def skill_spread_ssr(ensemble, true, n_spatial=None, member_dim=0):
    """Skill, spread and corrected spread-skill ratio of an ensemble frame

    * skill: RMSE of the ensemble mean, ``sqrt(<(u - mean_k v_k)^2>)``
    * spread: ``sqrt(< 1/(M-1) sum_j (v_j - mean_k v_k)^2 >)``
    * ssr: ``spread/skill * sqrt((M+1)/M)``, close to one for a calibrated ensemble

    Parameters
    ----------
    ensemble : torch.Tensor
        members along `member_dim`
    true : torch.Tensor
        shape of `ensemble` without `member_dim`
    n_spatial : int, optional
        number of trailing spatial axes of `true`, by default all axes
    member_dim : int, default is 0

    Returns
    -------
    skill, spread, ssr, zero_skill : torch.Tensor
        `ssr` is ``+inf`` and `zero_skill` is True where the skill vanishes, i.e. is
        at most ``ZERO_SKILL_RTOL`` times the RMS of `true`
    """
    member_dim = member_dim % ensemble.ndim
    expected = tuple(s for i, s in enumerate(ensemble.shape) if i != member_dim)
    if expected != tuple(true.shape):
        raise ShapeError('skill_spread_ssr', ensemble.shape, true.shape)
    n_members = ensemble.shape[member_dim]
    if n_members < 2:
        raise ValueError(f'skill_spread_ssr: the spread needs M >= 2 members, but got M={n_members}.')
    dims = _spatial_dims(true, n_spatial)
    ens_mean = ensemble.mean(dim=member_dim)
    skill = torch.sqrt(((true - ens_mean)**2).mean(dim=dims))
    var = ensemble.var(dim=member_dim, unbiased=True)
    spread = torch.sqrt(var.mean(dim=dims))
    zero_skill = skill <= ZERO_SKILL_RTOL*torch.sqrt((true**2).mean(dim=dims))
    ratio = spread/torch.where(zero_skill, torch.ones_like(skill), skill)
    ssr = torch.where(zero_skill, torch.full_like(skill, math.inf), ratio*math.sqrt((n_members + 1)/n_members))
    return skill, spread, ssr, zero_skill

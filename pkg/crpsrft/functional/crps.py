"""Point and ensemble losses

All losses are applied independently to every scalar component of the state
(channel and spatial site) and averaged with equal weights.
"""

import math

import numpy as np
import torch
from scipy import stats

from ..errors import ShapeError

# License: BSD 3 clause

_REDUCTIONS = ('mean', 'none')


def _reduce(values, reduction):
    if reduction == 'mean':
        return values.mean()
    elif reduction == 'none':
        return values
    raise ValueError(f'Got reduction={reduction} but expected one of {_REDUCTIONS}.')


def _check_pair(op, pred, target):
    if tuple(pred.shape) != tuple(target.shape):
        raise ShapeError(op, pred.shape, target.shape)


def mae(pred, target, reduction='mean'):
    """Mean absolute error"""
    _check_pair('mae', pred, target)
    return _reduce(torch.abs(pred - target), reduction)


def mse(pred, target, reduction='mean'):
    """Mean squared error"""
    _check_pair('mse', pred, target)
    return _reduce((pred - target)**2, reduction)


def _check_ensemble(op, ensemble, target, member_dim):
    if ensemble.ndim == 0:
        raise ShapeError(op, ensemble.shape, target.shape, message='ensemble needs a member dimension')
    member_dim = member_dim % ensemble.ndim
    expected = tuple(s for i, s in enumerate(ensemble.shape) if i != member_dim)
    if expected != tuple(target.shape):
        raise ShapeError(op, ensemble.shape, target.shape,
                         message=f'target must match the ensemble without its member dim={member_dim}')
    n_members = ensemble.shape[member_dim]
    if n_members == 0:
        raise ValueError(f'{op}: got an empty ensemble (M=0).')
    return member_dim, n_members


def pairwise_abs_sum(ensemble, member_dim=0, method='sort'):
    """Sum over member pairs j < k of ``|x_j - x_k|``, per component

    Parameters
    ----------
    ensemble : torch.Tensor
    member_dim : int, default is 0
    method : {'sort', 'pairwise'}
        'sort' uses ``sum_i (2i - M + 1) x_(i)`` over the sorted members, in O(M log M);
        'pairwise' evaluates the O(M^2) double sum directly.

    Returns
    -------
    torch.Tensor
        the ensemble shape without `member_dim`
    """
    member_dim = member_dim % ensemble.ndim
    n_members = ensemble.shape[member_dim]
    if method == 'sort':
        ordered, _ = torch.sort(ensemble, dim=member_dim)
        coefs = 2*torch.arange(n_members, dtype=ensemble.dtype, device=ensemble.device) - n_members + 1
        shape = [1]*ensemble.ndim
        shape[member_dim] = n_members
        return (ordered*coefs.reshape(shape)).sum(dim=member_dim)
    elif method == 'pairwise':
        x_j = ensemble.unsqueeze(member_dim)
        x_k = ensemble.unsqueeze(member_dim + 1)
        return 0.5*torch.abs(x_j - x_k).sum(dim=(member_dim, member_dim + 1))
    raise ValueError(f'Got method={method} but expected one of (\'sort\', \'pairwise\').')


def _skill_term(ensemble, target, member_dim):
    return torch.abs(ensemble - target.unsqueeze(member_dim)).mean(dim=member_dim)


def empirical_crps(ensemble, target, member_dim=0, reduction='mean', method='sort'):
    """Empirical CRPS of an ensemble

    ``(1/M) sum_j |x_j - y| - 1/(2 M^2) sum_j sum_k |x_j - x_k|``

    This estimator is biased low in its spread term for finite M; prefer
    :func:`fair_crps` for training.

    Parameters
    ----------
    ensemble : torch.Tensor
        ensemble members stacked along `member_dim`
    target : torch.Tensor
        observation, same shape as `ensemble` without `member_dim`
    member_dim : int, default is 0
    reduction : {'mean', 'none'}
    method : {'sort', 'pairwise'}
    """
    member_dim, n_members = _check_ensemble('empirical_crps', ensemble, target, member_dim)
    spread = pairwise_abs_sum(ensemble, member_dim=member_dim, method=method)
    score = _skill_term(ensemble, target, member_dim) - spread/(n_members**2)
    return _reduce(score, reduction)


def fair_crps(ensemble, target, member_dim=0, reduction='mean', method='sort'):
    """Fair (unbiased) CRPS of an ensemble

    ``(1/M) sum_j |x_j - y| - 1/(2 M (M - 1)) sum_j sum_k |x_j - x_k|``

    Its expectation over i.i.d. members equals the CRPS of the distribution the
    members are drawn from, for any ensemble size M >= 2.

    Parameters
    ----------
    ensemble : torch.Tensor
        ensemble members stacked along `member_dim`
    target : torch.Tensor
        observation, same shape as `ensemble` without `member_dim`
    member_dim : int, default is 0
    reduction : {'mean', 'none'}
        'mean' averages over all components, 'none' returns the per-component scores
    method : {'sort', 'pairwise'}
        how the pairwise term is computed, see :func:`pairwise_abs_sum`

    Returns
    -------
    torch.Tensor
    """
    member_dim, n_members = _check_ensemble('fair_crps', ensemble, target, member_dim)
    if n_members < 2:
        raise ValueError(f'fair_crps: the estimator divides by M - 1 and needs M >= 2 members, '
                         f'but got M={n_members}.')
    spread = pairwise_abs_sum(ensemble, member_dim=member_dim, method=method)
    score = _skill_term(ensemble, target, member_dim) - spread/(n_members*(n_members - 1))
    return _reduce(score, reduction)


def gaussian_crps_closed_form(mu, sigma, y):
    """CRPS of a Gaussian predictive distribution N(mu, sigma^2) at observation y

    ``sigma * [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)]`` with ``z = (y - mu)/sigma``

    Parameters
    ----------
    mu, sigma, y : float or array-like
        broadcast together; sigma must be strictly positive

    Returns
    -------
    float or np.ndarray
    """
    mu, sigma, y = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (mu, sigma, y)))
    if np.any(sigma <= 0):
        raise ValueError(f'gaussian_crps_closed_form requires sigma > 0, but got sigma={sigma}.')
    z = (y - mu)/sigma
    score = sigma*(z*(2*stats.norm.cdf(z) - 1) + 2*stats.norm.pdf(z) - 1/math.sqrt(math.pi))
    if score.ndim == 0:
        return float(score)
    return score

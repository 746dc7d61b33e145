"""Autoregressive rollouts of deterministic models and ensembles"""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError

# License: BSD 3 clause

logger = logging.getLogger(__name__)

NOISE_MODES = ('resample', 'frozen')


@dataclass
class EnsembleForecast:
    """Member trajectories of one rollout

    Parameters
    ----------
    members : torch.Tensor of shape (M, T, C, *spatial)
        physical states; NaN from the step a member diverged onward
    history : torch.Tensor of shape (k, C, *spatial)
        initial history the rollout started from
    seed : int
    diverged_from : np.ndarray of shape (M, )
        first non-finite step of each member, -1 if it stayed finite
    """
    members: torch.Tensor
    history: torch.Tensor
    seed: int = 0
    model_id: str = ''
    noise_per_step: str = 'resample'
    diverged_from: np.ndarray = None

    def __post_init__(self):
        if self.diverged_from is None:
            self.diverged_from = np.full(self.n_members, -1, dtype=np.int64)

    @property
    def n_members(self):
        return self.members.shape[0]

    @property
    def n_steps(self):
        return self.members.shape[1]

    @property
    def diverged_fraction(self):
        return float(np.mean(self.diverged_from >= 0))

    def valid_members(self, step):
        """Boolean mask of the members still finite at `step`"""
        return (self.diverged_from < 0) | (self.diverged_from > step)


def rollout(bundle, history, n_steps, n_members=1, seed=0, noise_per_step='resample', model_id=''):
    """Advances every member independently for `n_steps` steps

    Each member predicts its next state and shifts it into its own history
    window. With a noise branch, member ``m`` at step ``t`` is modulated by the
    stream ``(seed, t, m)``, or ``(seed, 0, m)`` for every step if
    `noise_per_step` is ``'frozen'``. Without one, a single deterministic member
    is rolled out.

    Parameters
    ----------
    bundle : ModelBundle
    history : torch.Tensor of shape (k, C, *spatial)
        physical initial history
    n_steps : int
    n_members : int, default is 1
    seed : int
    noise_per_step : {'resample', 'frozen'}

    Returns
    -------
    EnsembleForecast
    """
    if n_steps < 1:
        raise ConfigError(f'Got n_steps={n_steps}, a rollout needs at least one step.')
    if noise_per_step not in NOISE_MODES:
        raise ConfigError(f'Got noise_per_step={noise_per_step} but expected one of {NOISE_MODES}.')
    if not bundle.has_noise_branch and n_members != 1:
        raise ConfigError(f'A deterministic model produces a single member, but got M={n_members}.')
    if n_members < 1:
        raise ConfigError(f'Got M={n_members}, expected at least one member.')

    bundle.eval()
    window = history.unsqueeze(0).repeat((n_members, ) + (1, )*history.ndim)
    diverged_from = np.full(n_members, -1, dtype=np.int64)
    frames = []
    with torch.no_grad():
        for step in range(n_steps):
            if bundle.has_noise_branch:
                embedding = bundle.noise_embedding(n_members, seed, step=step if noise_per_step == 'resample' else 0)
                pred = bundle.forward_embedded(window, embedding.embedding)
            else:
                pred = bundle.forward_deterministic(window)
            finite = torch.isfinite(pred.reshape(n_members, -1)).all(dim=1).cpu().numpy()
            newly = (~finite) & (diverged_from < 0)
            if newly.any():
                diverged_from[newly] = step
                logger.debug(f'{model_id or "model"}: members {np.flatnonzero(newly).tolist()} diverged at step {step}.')
            if (diverged_from >= 0).any():
                pred[torch.as_tensor(diverged_from >= 0)] = float('nan')
            frames.append(pred)
            window = torch.cat([window[:, 1:], pred.unsqueeze(1)], dim=1)
    return EnsembleForecast(torch.stack(frames, dim=1), history, seed=seed, model_id=model_id,
                            noise_per_step=noise_per_step, diverged_from=diverged_from)

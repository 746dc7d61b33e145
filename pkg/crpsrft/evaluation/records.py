"""Per-trajectory verification records

Every frame metric is computed per rollout step and channel, over the members
still finite at that step, and the record keeps their temporal and channel-wise
averages together with the per-channel and per-lead-time breakdowns.
"""

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from ..errors import ShapeError
from ..functional.crps import fair_crps, mae
from ..functional.metrics import vrmse, skill_spread_ssr

# License: BSD 3 clause

FRAME_METRICS = ('fcrps', 'vrmse', 'spread', 'skill', 'ssr')
METRICS = FRAME_METRICS + ('diverged_fraction', )


@dataclass
class TrajectoryRecord:
    """Metrics of one forecast trajectory

    `ssr` averages the frames with a non-zero skill only; `ssr_inf_frames`
    counts the others. With a single member, `spread` and `ssr` are NaN and
    `fcrps` is the absolute error. `single_member_frames` counts the rollout
    steps of an ensemble where divergence left one finite member, whose
    `fcrps` is therefore the absolute error of that member.
    """
    trajectory: int
    n_members: int
    fcrps: float
    vrmse: float
    spread: float
    skill: float
    ssr: float
    ssr_inf_frames: int = 0
    single_member_frames: int = 0
    diverged_fraction: float = 0.0
    per_channel: dict = field(default_factory=dict)
    lead_time: dict = field(default_factory=dict)

    def value(self, metric):
        return float(getattr(self, metric))

    def to_row(self):
        """Flat CSV row, with one ``<metric>_c<channel>`` column per channel"""
        row = {'trajectory': self.trajectory, 'n_members': self.n_members}
        row.update({metric: getattr(self, metric) for metric in FRAME_METRICS})
        row['ssr_inf_frames'] = self.ssr_inf_frames
        row['single_member_frames'] = self.single_member_frames
        row['diverged_fraction'] = self.diverged_fraction
        for metric in FRAME_METRICS:
            for channel, value in enumerate(self.per_channel.get(metric, [])):
                row[f'{metric}_c{channel}'] = value
        return row

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _spatial_mean(x, n_spatial):
    return x.mean(dim=tuple(range(x.ndim - n_spatial, x.ndim)))


def frame_metrics(ensemble, truth):
    """Metrics of one frame, per channel

    Parameters
    ----------
    ensemble : torch.Tensor of shape (M, C, *spatial)
    truth : torch.Tensor of shape (C, *spatial)

    Returns
    -------
    dict of torch.Tensor of shape (C, )
        'fcrps', 'vrmse', 'spread', 'skill', 'ssr' and the boolean 'zero_skill'
    """
    n_spatial = truth.ndim - 1
    n_members = ensemble.shape[0]
    ens_mean = ensemble.mean(dim=0)
    res = {'vrmse': vrmse(ens_mean, truth, n_spatial=n_spatial)}
    if n_members >= 2:
        res['fcrps'] = _spatial_mean(fair_crps(ensemble, truth, reduction='none'), n_spatial)
        res['skill'], res['spread'], res['ssr'], res['zero_skill'] = skill_spread_ssr(ensemble, truth,
                                                                                       n_spatial=n_spatial)
    else:
        # a single member: the fair CRPS is undefined and the ensemble CRPS is the absolute error
        res['fcrps'] = _spatial_mean(mae(ensemble[0], truth, reduction='none'), n_spatial)
        res['skill'] = torch.sqrt(_spatial_mean((truth - ens_mean)**2, n_spatial))
        res['spread'] = torch.full_like(res['skill'], float('nan'))
        res['ssr'] = torch.full_like(res['skill'], float('nan'))
        res['zero_skill'] = torch.zeros_like(res['skill'], dtype=torch.bool)
    return res


def _nanmean(values, axis=None):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        return np.nanmean(values, axis=axis)


def trajectory_metrics(forecast, truth, trajectory=0):
    """Record of a forecast against the true trajectory

    Parameters
    ----------
    forecast : EnsembleForecast
    truth : torch.Tensor of shape (T, C, *spatial)
        true states at the forecast steps
    trajectory : int
        identifier of the trajectory, used to pair records

    Returns
    -------
    TrajectoryRecord
    """
    members = forecast.members
    if tuple(members.shape[1:]) != tuple(truth.shape):
        raise ShapeError('trajectory_metrics', members.shape, truth.shape,
                         message='the truth must match the forecast without its member dimension')
    n_steps, n_channels = truth.shape[0], truth.shape[1]
    values = {metric: np.full((n_steps, n_channels), np.nan) for metric in FRAME_METRICS}
    zero_skill = np.zeros((n_steps, n_channels), dtype=bool)
    single_member_frames = 0
    for step in range(n_steps):
        valid = forecast.valid_members(step)
        if not valid.any():
            continue
        if forecast.n_members >= 2 and valid.sum() == 1:
            single_member_frames += 1
        frame = frame_metrics(members[torch.as_tensor(valid), step], truth[step])
        for metric in FRAME_METRICS:
            values[metric][step] = frame[metric].detach().cpu().numpy()
        zero_skill[step] = frame['zero_skill'].cpu().numpy()
    values['ssr'][zero_skill] = np.nan

    return TrajectoryRecord(
        trajectory=int(trajectory),
        n_members=forecast.n_members,
        ssr_inf_frames=int(zero_skill.sum()),
        single_member_frames=single_member_frames,
        diverged_fraction=forecast.diverged_fraction,
        per_channel={metric: _nanmean(v, axis=0).tolist() for metric, v in values.items()},
        lead_time={metric: _nanmean(v, axis=1).tolist() for metric, v in values.items()},
        **{metric: float(_nanmean(v)) for metric, v in values.items()})

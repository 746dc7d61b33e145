import math

import numpy as np
import pytest
import torch

import tensorly as tl
tl.set_backend('pytorch')

from ..rollout import EnsembleForecast
from ..records import trajectory_metrics, frame_metrics, TrajectoryRecord
from ...functional.crps import fair_crps

# License: BSD 3 clause


def _forecast(members, diverged_from=None):
    history = torch.zeros((1, ) + tuple(members.shape[2:]), dtype=members.dtype)
    if diverged_from is not None:
        diverged_from = np.asarray(diverged_from)
    return EnsembleForecast(members, history, diverged_from=diverged_from)


def _fair_crps_loop(members, y):
    m = len(members)
    skill = sum(abs(x - y) for x in members)/m
    spread = sum(abs(a - b) for a in members for b in members)/(2*m*(m - 1))
    return skill - spread


def _vrmse_loop(pred, true, eps=1e-6):
    n = len(true)
    mean = sum(true)/n
    err = sum((u - v)**2 for u, v in zip(true, pred))/n
    var = sum((u - mean)**2 for u in true)/n
    return math.sqrt(err/(var + eps))


def test_perfect_forecast():
    rng = tl.check_random_state(0)
    truth = tl.tensor(rng.standard_normal((4, 2, 6)))
    record = trajectory_metrics(_forecast(truth.unsqueeze(0).repeat(3, 1, 1, 1)), truth)
    for metric in ('fcrps', 'vrmse', 'spread', 'skill'):
        assert abs(record.value(metric)) < 1e-12
    assert math.isnan(record.ssr)
    assert record.ssr_inf_frames == 4*2
    assert record.diverged_fraction == 0


def test_single_member_is_mae():
    rng = tl.check_random_state(1)
    truth = tl.tensor(rng.standard_normal((5, 2, 7)))
    pred = tl.tensor(rng.standard_normal((1, 5, 2, 7)))
    record = trajectory_metrics(_forecast(pred), truth, trajectory=3)
    assert record.trajectory == 3
    assert record.n_members == 1
    assert abs(record.fcrps - float(torch.abs(pred[0] - truth).mean())) < 1e-12
    assert abs(record.skill - float(torch.sqrt(((pred[0] - truth)**2).mean(dim=-1)).mean())) < 1e-12
    assert math.isnan(record.spread) and math.isnan(record.ssr)
    assert record.ssr_inf_frames == 0


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_matches_loop_oracle(seed):
    rng = tl.check_random_state(seed)
    n_members, n_steps, n_channels, n_sites = 3, 4, 2, 5
    members = rng.standard_normal((n_members, n_steps, n_channels, n_sites))
    truth = rng.standard_normal((n_steps, n_channels, n_sites))
    record = trajectory_metrics(_forecast(tl.tensor(members)), tl.tensor(truth))

    fcrps = np.zeros((n_steps, n_channels))
    vrmse = np.zeros((n_steps, n_channels))
    for t in range(n_steps):
        for c in range(n_channels):
            fcrps[t, c] = np.mean([_fair_crps_loop(members[:, t, c, i], truth[t, c, i]) for i in range(n_sites)])
            ens_mean = [np.mean(members[:, t, c, i]) for i in range(n_sites)]
            vrmse[t, c] = _vrmse_loop(ens_mean, list(truth[t, c]))
    assert abs(record.fcrps - fcrps.mean()) < 1e-12
    assert abs(record.vrmse - vrmse.mean()) < 1e-12
    np.testing.assert_allclose(record.per_channel['fcrps'], fcrps.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(record.lead_time['vrmse'], vrmse.mean(axis=1), rtol=0, atol=1e-12)

    row = record.to_row()
    assert row['fcrps_c1'] == record.per_channel['fcrps'][1]
    assert TrajectoryRecord.from_dict(record.to_dict()) == record


def test_diverged_members_excluded():
    rng = tl.check_random_state(3)
    members = tl.tensor(rng.standard_normal((3, 4, 1, 6)))
    truth = tl.tensor(rng.standard_normal((4, 1, 6)))
    members[1, 2:] = float('nan')
    record = trajectory_metrics(_forecast(members, diverged_from=[-1, 2, -1]), truth)
    assert record.diverged_fraction == pytest.approx(1/3)
    assert math.isfinite(record.fcrps)

    kept = members[[0, 2], 3]
    expected = float(fair_crps(kept, truth[3], reduction='none').mean())
    assert abs(record.lead_time['fcrps'][3] - expected) < 1e-12
    expected = float(fair_crps(members[:, 1], truth[1]))
    assert abs(record.lead_time['fcrps'][1] - expected) < 1e-12


def test_frame_metrics_shapes():
    rng = tl.check_random_state(4)
    frame = frame_metrics(tl.tensor(rng.standard_normal((4, 3, 8, 8))), tl.tensor(rng.standard_normal((3, 8, 8))))
    for metric in ('fcrps', 'vrmse', 'spread', 'skill', 'ssr', 'zero_skill'):
        assert frame[metric].shape == (3, )


def test_single_member_frames_counted():
    rng = tl.check_random_state(5)
    members = tl.tensor(rng.standard_normal((3, 5, 1, 6)))
    truth = tl.tensor(rng.standard_normal((5, 1, 6)))
    members[0, 1:] = float('nan')
    members[2, 3:] = float('nan')
    record = trajectory_metrics(_forecast(members, diverged_from=[1, -1, 3]), truth)
    # steps 3 and 4 are left with member 1 alone
    assert record.single_member_frames == 2
    assert record.to_row()['single_member_frames'] == 2
    expected = float(torch.abs(members[1, 4] - truth[4]).mean())
    assert abs(record.lead_time['fcrps'][4] - expected) < 1e-12
    assert math.isnan(record.lead_time['spread'][4])

    assert trajectory_metrics(_forecast(members[1:2]), truth).single_member_frames == 0
    assert trajectory_metrics(_forecast(members[:, :1]), truth[:1]).single_member_frames == 0

import numpy as np
import pytest

from ..systems import SystemSpec, solve, integrate_lorenz96, band_limited_field, lorenz96_trajectory
from ..dataset import solve_heat2d, solve_burgers1d, solve_lorenz96
from ...errors import ConfigError, StabilityError

# License: BSD 3 clause


def heat_spec(**kwargs):
    base = dict(system='heat2d', grid=[32, 32], dt=0.01, substeps=1, kappa=0.01,
                n_trajectories=2, n_steps=101, seed=0)
    base.update(kwargs)
    return SystemSpec(**base)


def burgers_spec(**kwargs):
    base = dict(system='burgers1d', grid=[128], dt=0.01, substeps=5, nu=0.005,
                n_trajectories=2, n_steps=21, seed=0)
    base.update(kwargs)
    return SystemSpec(**base)


def lorenz_spec(**kwargs):
    base = dict(system='lorenz96', grid=[40], dt=0.05, substeps=5, forcing=8.0,
                n_trajectories=2, n_steps=11, seed=0, warmup=2.0)
    base.update(kwargs)
    return SystemSpec(**base)


def test_heat_single_mode_decay():
    spec = heat_spec(n_trajectories=1)
    x = np.arange(32)/32
    mode = np.sin(2*np.pi*x)[:, None]*np.ones((1, 32))
    states = solve_heat2d(spec, initial=mode[None]).states.astype(np.float64)[0, :, 0]
    amplitude = 2*(states*mode).mean(axis=(1, 2))
    t = np.arange(spec.n_steps)*spec.dt
    expected = np.exp(-spec.kappa*(2*np.pi)**2*t)
    assert np.max(np.abs(amplitude/expected - 1)) < 0.01


def test_heat_trivial_cases():
    rng = np.random.default_rng(0)
    u0 = np.stack([band_limited_field(rng, [32, 32], 4), np.full((32, 32), 3.0)])
    states, _ = solve(heat_spec(kappa=0.0, n_steps=5), initial=u0)
    for t in range(5):
        np.testing.assert_array_equal(states[:, t], states[:, 0])
    states, _ = solve(heat_spec(n_steps=20), initial=u0)
    assert np.max(np.abs(states[1] - 3.0)) < 1e-12


def test_heat_stability_refused():
    spec = heat_spec(dt=0.05, substeps=1)
    with pytest.raises(StabilityError) as err:
        solve(spec)
    assert err.value.bound == 0.25
    assert err.value.value > 0.25
    assert '0.25' in str(err.value)


def test_burgers_mean_conservation():
    states, _ = solve(burgers_spec(n_trajectories=3))
    means = states[:, :, 0].mean(axis=-1)
    assert np.max(np.abs(np.diff(means, axis=1))) < 1e-10


def test_burgers_viscous_decay():
    spec = burgers_spec(grid=[32], nu=0.2, dt=0.01, substeps=10, n_steps=201, n_trajectories=1)
    rng = np.random.default_rng(1)
    u0 = band_limited_field(rng, [32], 3) + 0.3
    states, _ = solve(spec, initial=u0[None])
    final = states[0, -1, 0]
    assert np.max(np.abs(final - u0.mean())) < 1e-3


def test_burgers_steepening():
    spec = burgers_spec(n_trajectories=1, n_steps=11)
    x = np.arange(128)/128
    states, _ = solve(spec, initial=np.sin(2*np.pi*x)[None])
    u = states[0, :, 0]
    slopes = np.max(np.abs(np.diff(u, axis=-1)), axis=-1)*128
    assert slopes[-1] > 1.5*slopes[0]
    assert np.all(np.diff(slopes) > 0)


def test_burgers_cfl_regeneration():
    spec = burgers_spec(nu=0.001, substeps=1, n_trajectories=1, n_steps=6)
    x = np.arange(128)/128
    states, regenerations = solve(spec, initial=np.sin(2*np.pi*x)[None])
    assert regenerations[0] >= 1
    assert np.all(np.isfinite(states))


def test_lorenz_fixed_point():
    spec = lorenz_spec(forcing=0.0, n_trajectories=1)
    states, _ = solve(spec, initial=np.zeros((1, 40)))
    np.testing.assert_array_equal(states, np.zeros_like(states))


def _attractor_state():
    return integrate_lorenz96(8.0 + np.random.default_rng(0).standard_normal(40), 8.0, 0.01, 1000)


def test_lorenz_twin_runs_separate():
    x = _attractor_state()
    twin = x.copy()
    twin[0] += 1e-8
    x_end = integrate_lorenz96(x, 8.0, 0.01, 500)
    twin_end = integrate_lorenz96(twin, 8.0, 0.01, 500)
    assert np.linalg.norm(x_end - twin_end) >= 10*1e-8


def test_lorenz_rk4_order():
    x = _attractor_state()
    reference = integrate_lorenz96(x, 8.0, 0.01/16, 16*50)
    err_h = np.abs(integrate_lorenz96(x, 8.0, 0.01, 50) - reference).max()
    err_half = np.abs(integrate_lorenz96(x, 8.0, 0.005, 100) - reference).max()
    assert 12 < err_h/err_half < 20


def test_lorenz_warmup_on_attractor():
    spec = lorenz_spec()
    dataset = solve_lorenz96(spec)
    states = dataset.states[:, :, 0]
    # the perturbed equilibrium has left the neighbourhood of X = F
    assert np.all(np.abs(states[:, 0] - 8.0).max(axis=-1) > 1.0)
    trajectory = lorenz96_trajectory(np.full(40, 8.0), spec, warmup=False)
    np.testing.assert_array_almost_equal(trajectory, np.full((spec.n_steps, 40), 8.0))


@pytest.mark.parametrize('make_spec', [heat_spec, burgers_spec, lorenz_spec])
def test_thread_count_invariance(make_spec):
    spec = make_spec(n_trajectories=4, n_steps=6)
    single, _ = solve(spec, threads=1)
    multi, _ = solve(spec, threads=4)
    assert single.tobytes() == multi.tobytes()
    again, _ = solve(spec, threads=2)
    assert single.tobytes() == again.tobytes()


def test_spec_validation():
    with pytest.raises(ConfigError):
        SystemSpec(system='navier_stokes').validate()
    with pytest.raises(ConfigError):
        SystemSpec(system='heat2d', grid=[32]).validate()
    with pytest.raises(ConfigError):
        solve_burgers1d(lorenz_spec())
    with pytest.raises(ConfigError):
        solve(heat_spec(n_trajectories=1), initial=np.zeros((2, 32, 32)))
    assert SystemSpec.from_dict(heat_spec().to_dict()) == heat_spec()

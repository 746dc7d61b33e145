"""Reference solvers used to generate trajectory datasets

* ``heat2d``: diffusion on a periodic square, second-order Runge-Kutta in time
* ``burgers1d``: viscous Burgers on a periodic interval, conservative Godunov fluxes
* ``lorenz96``: the Lorenz-96 ring, fourth-order Runge-Kutta

All solvers integrate internally with ``substeps`` steps per output interval ``dt``
and store one frame per interval.
"""

import logging
from dataclasses import dataclass, asdict, field
from typing import List

import numpy as np
from scipy import fft

from ..errors import ConfigError, StabilityError, NumericalError
from ..utils.parallel import parallel_map
from ..utils.seeding import numpy_rng

# License: BSD 3 clause

logger = logging.getLogger(__name__)

SYSTEMS = ('heat2d', 'burgers1d', 'lorenz96')
_N_SPATIAL = {'heat2d': 2, 'burgers1d': 1, 'lorenz96': 1}

HEAT_STABILITY = 0.25
BURGERS_CFL = 0.5
BURGERS_DIFFUSION = 0.5
LORENZ_DIVERGENCE = 1e3
MAX_REGENERATIONS = 6


@dataclass
class SystemSpec:
    """Dynamical system and sampling of its trajectories

    Parameters
    ----------
    system : {'heat2d', 'burgers1d', 'lorenz96'}
    grid : list of int
        number of sites per axis (2 axes for heat2d, 1 otherwise)
    dt : float
        time between two stored frames
    substeps : int
        internal solver steps per frame
    kappa : float
        diffusivity (heat2d)
    nu : float
        viscosity (burgers1d)
    forcing : float
        forcing F (lorenz96)
    length : float
        domain length per axis (heat2d, burgers1d)
    n_trajectories : int
    n_steps : int
        number T of stored frames per trajectory, the initial condition included
    seed : int
        seed of the initial-condition distribution
    ic_modes : int
        highest wavenumber of the band-limited random initial conditions
    ic_amplitude : float
        standard deviation of the random initial conditions
    warmup : float
        model time integrated and discarded before storing (lorenz96)
    """
    system: str = 'lorenz96'
    grid: List[int] = field(default_factory=lambda: [40])
    dt: float = 0.05
    substeps: int = 5
    kappa: float = 0.01
    nu: float = 0.01
    forcing: float = 8.0
    length: float = 1.0
    n_trajectories: int = 64
    n_steps: int = 101
    seed: int = 0
    ic_modes: int = 4
    ic_amplitude: float = 1.0
    warmup: float = 10.0

    @property
    def channels(self):
        return 1

    @property
    def n_spatial(self):
        return _N_SPATIAL[self.system]

    @property
    def dx(self):
        return [self.length/n for n in self.grid]

    @property
    def internal_dt(self):
        return self.dt/self.substeps

    def validate(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f'Got system={self.system} but expected one of {SYSTEMS}.')
        if len(self.grid) != self.n_spatial or any(int(n) < 1 for n in self.grid):
            raise ConfigError(f'{self.system} needs {self.n_spatial} positive grid extents, but got grid={self.grid}.')
        if self.system == 'lorenz96' and self.grid[0] < 4:
            raise ConfigError(f'Lorenz-96 needs at least 4 sites, but got {self.grid[0]}.')
        if not self.dt > 0 or self.substeps < 1:
            raise ConfigError(f'Got dt={self.dt} and substeps={self.substeps}, expected dt > 0 and substeps >= 1.')
        if self.n_trajectories < 1 or self.n_steps < 1:
            raise ConfigError(f'Got n_trajectories={self.n_trajectories} and n_steps={self.n_steps}, both must be >= 1.')
        if self.kappa < 0 or self.nu < 0 or not self.length > 0:
            raise ConfigError('kappa and nu must be non-negative and length positive.')
        if self.warmup < 0:
            raise ConfigError(f'Got warmup={self.warmup} but expected a non-negative duration.')
        return self

    def check_stability(self, substeps=None):
        """Raises StabilityError if the explicit scheme is unstable at the internal step"""
        h = self.dt/(substeps or self.substeps)
        if self.system == 'heat2d':
            for axis, dx in enumerate(self.dx):
                number = self.kappa*h/dx**2
                if number > HEAT_STABILITY:
                    raise StabilityError(f'heat2d is unstable: kappa*dt/dx^2 = {number:.4g} > {HEAT_STABILITY} '
                                         f'on axis {axis} (dt_internal={h:.4g}, dx={dx:.4g}). '
                                         'Decrease dt or increase substeps.',
                                         bound=HEAT_STABILITY, value=number)
        elif self.system == 'burgers1d':
            number = self.nu*h/self.dx[0]**2
            if number > BURGERS_DIFFUSION:
                raise StabilityError(f'burgers1d is unstable: nu*dt/dx^2 = {number:.4g} > {BURGERS_DIFFUSION}. '
                                     'Decrease dt or increase substeps.',
                                     bound=BURGERS_DIFFUSION, value=number)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if 'grid' in d:
            d['grid'] = [int(n) for n in d['grid']]
        return cls(**d)


def band_limited_field(rng, grid, n_modes, amplitude=1.0):
    """Smooth random periodic field with wavenumbers up to `n_modes` on every axis"""
    white = rng.standard_normal(grid)
    spectrum = fft.fftn(white)
    mask = np.ones(grid, dtype=bool)
    for axis, n in enumerate(grid):
        k = np.abs(fft.fftfreq(n, d=1/n))
        shape = [1]*len(grid)
        shape[axis] = n
        mask &= (k <= n_modes).reshape(shape)
    mask.flat[0] = False
    u = fft.ifftn(spectrum*mask).real
    std = u.std()
    if std == 0:
        return np.zeros(grid)
    return amplitude*u/std


# heat2d

def laplacian(u, dx):
    """Periodic second-order Laplacian over all axes of `u`"""
    res = np.zeros_like(u)
    for axis, h in enumerate(dx):
        res += (np.roll(u, -1, axis) - 2*u + np.roll(u, 1, axis))/h**2
    return res


def integrate_heat2d(u0, spec):
    """Trajectory of shape (n_steps, *grid) from `u0`"""
    h, dx, kappa = spec.internal_dt, spec.dx, spec.kappa
    frames = [np.array(u0, dtype=np.float64)]
    u = frames[0]
    for _ in range(spec.n_steps - 1):
        for _ in range(spec.substeps):
            k1 = kappa*laplacian(u, dx)
            k2 = kappa*laplacian(u + h*k1, dx)
            u = u + 0.5*h*(k1 + k2)
        frames.append(u)
    return np.stack(frames)


# burgers1d

def godunov_flux(u_left, u_right):
    """Exact Riemann flux of f(u) = u^2/2 between two cell states"""
    f_left, f_right = 0.5*u_left**2, 0.5*u_right**2
    rarefaction = np.where(u_left > 0, f_left, np.where(u_right < 0, f_right, 0.0))
    shock = np.maximum(f_left, f_right)
    return np.where(u_left <= u_right, rarefaction, shock)


def burgers_tendency(u, dx, nu):
    flux = godunov_flux(u, np.roll(u, -1))
    return -(flux - np.roll(flux, 1))/dx + nu*(np.roll(u, -1) - 2*u + np.roll(u, 1))/dx**2


class _CFLViolation(Exception):
    pass


def integrate_burgers1d(u0, spec, substeps=None):
    """Trajectory of shape (n_steps, n) from `u0`

    Raises ``_CFLViolation`` when ``max|u| dt_internal/dx`` exceeds the bound.
    """
    substeps = substeps or spec.substeps
    h, dx, nu = spec.dt/substeps, spec.dx[0], spec.nu
    frames = [np.array(u0, dtype=np.float64)]
    u = frames[0]
    for _ in range(spec.n_steps - 1):
        for _ in range(substeps):
            if np.max(np.abs(u))*h/dx > BURGERS_CFL:
                raise _CFLViolation()
            k1 = burgers_tendency(u, dx, nu)
            k2 = burgers_tendency(u + h*k1, dx, nu)
            u = u + 0.5*h*(k1 + k2)
        frames.append(u)
    return np.stack(frames)


# lorenz96

def lorenz96_tendency(x, forcing):
    """dX_i/dt = (X_{i+1} - X_{i-2}) X_{i-1} - X_i + F on a ring (last axis)"""
    return (np.roll(x, -1, -1) - np.roll(x, 2, -1))*np.roll(x, 1, -1) - x + forcing


def rk4_step(x, h, forcing):
    k1 = lorenz96_tendency(x, forcing)
    k2 = lorenz96_tendency(x + 0.5*h*k1, forcing)
    k3 = lorenz96_tendency(x + 0.5*h*k2, forcing)
    k4 = lorenz96_tendency(x + h*k3, forcing)
    return x + h*(k1 + 2*k2 + 2*k3 + k4)/6


def integrate_lorenz96(x0, forcing, h, n_steps):
    """Integrates `n_steps` RK4 steps of size `h`, returns the final state"""
    x = np.array(x0, dtype=np.float64)
    for _ in range(n_steps):
        x = rk4_step(x, h, forcing)
    return x


class _Divergence(Exception):
    pass


def lorenz96_trajectory(x0, spec, substeps=None, warmup=True):
    """Trajectory of shape (n_steps, n), optionally after discarding the warmup"""
    substeps = substeps or spec.substeps
    h = spec.dt/substeps
    x = np.array(x0, dtype=np.float64)
    if warmup and spec.warmup > 0:
        x = integrate_lorenz96(x, spec.forcing, h, int(round(spec.warmup/h)))
    frames = [x]
    for _ in range(spec.n_steps - 1):
        x = integrate_lorenz96(x, spec.forcing, h, substeps)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > LORENZ_DIVERGENCE:
            raise _Divergence()
        frames.append(x)
    return np.stack(frames)


# generation

def initial_condition(spec, index):
    """Random initial condition of trajectory `index`, from the stream (seed, index)"""
    rng = numpy_rng(spec.seed, index)
    if spec.system == 'lorenz96':
        return spec.forcing + rng.standard_normal(spec.grid)
    return band_limited_field(rng, spec.grid, spec.ic_modes, spec.ic_amplitude)


@dataclass
class GeneratedTrajectory:
    states: np.ndarray
    regenerations: int = 0


def generate_trajectory(spec, u0, warmup=True):
    """Integrates one trajectory, refining the internal step on CFL violation or divergence"""
    substeps = spec.substeps
    for attempt in range(MAX_REGENERATIONS + 1):
        try:
            if spec.system == 'heat2d':
                states = integrate_heat2d(u0, spec)
            elif spec.system == 'burgers1d':
                states = integrate_burgers1d(u0, spec, substeps=substeps)
            else:
                states = lorenz96_trajectory(u0, spec, substeps=substeps, warmup=warmup)
            if not np.all(np.isfinite(states)):
                raise NumericalError(f'{spec.system}: non-finite values in a generated trajectory.')
            return GeneratedTrajectory(states, regenerations=attempt)
        except (_CFLViolation, _Divergence):
            substeps *= 2
            logger.debug(f'{spec.system}: regenerating a trajectory with {substeps} substeps per frame.')
    raise NumericalError(f'{spec.system}: trajectory still unstable after {MAX_REGENERATIONS} refinements '
                         f'of the internal step (substeps={substeps}).')


def solve(spec, initial=None, threads=None):
    """Generates the trajectories described by `spec`

    Parameters
    ----------
    spec : SystemSpec
    initial : np.ndarray of shape (n_trajectories, *grid), optional
        explicit initial conditions; by default they are drawn from the stream
        ``(spec.seed, trajectory index)``. Explicit Lorenz-96 initial conditions
        are not warmed up.
    threads : int, optional
        worker threads; the result does not depend on it

    Returns
    -------
    states : np.ndarray of shape (n_trajectories, n_steps, 1, *grid), float64
    regenerations : np.ndarray of int
        number of internal-step refinements of every trajectory

    Raises
    ------
    StabilityError
        if the internal step violates the stability bound of the scheme
    """
    spec.validate()
    spec.check_stability()
    if initial is not None:
        initial = np.asarray(initial, dtype=np.float64)
        expected = (spec.n_trajectories, ) + tuple(spec.grid)
        if initial.shape != expected:
            raise ConfigError(f'Got initial conditions of shape {initial.shape} but expected {expected}.')

    def run(index):
        if initial is None:
            return generate_trajectory(spec, initial_condition(spec, index))
        return generate_trajectory(spec, initial[index], warmup=False)

    results = parallel_map(run, range(spec.n_trajectories), threads=threads)
    regenerations = np.array([r.regenerations for r in results], dtype=np.int64)
    if regenerations.any():
        logger.info(f'{spec.system}: {int((regenerations > 0).sum())} trajectories were regenerated '
                    'with a smaller internal step.')
    states = np.stack([r.states for r in results])[:, :, None]
    return states, regenerations


def default_horizon(system):
    """Default evaluation horizon (number of rollout steps) of each system"""
    return {'heat2d': 50, 'burgers1d': 100, 'lorenz96': 100}[system]

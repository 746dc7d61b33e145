"""Trajectory datasets: generation, splits, channel statistics and file format

The file format is ``CRPSDATA`` magic, a u32 version, a length-prefixed JSON
header holding the :class:`SystemSpec`, then the per-channel mean and standard
deviation (f64) followed by the states (f32, row-major ``[N, T, C, *grid]``),
all little-endian.
"""

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, FormatError, NumericalError
from ..utils.binary import pack_container, unpack_container, sha256_hex
from ..utils.seeding import numpy_rng
from .systems import SystemSpec, solve

# License: BSD 3 clause

logger = logging.getLogger(__name__)

DATASET_MAGIC = b'CRPSDATA'
DATASET_VERSION = 1
SPLITS = ('train', 'val', 'test')
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
# key of the split permutation stream, distinct from the trajectory indices
_SPLIT_STREAM = 2**31 - 1


def split_assignment(n_trajectories, seed):
    """Split label (0: train, 1: val, 2: test) of every trajectory

    A seeded permutation of the trajectory indices is cut 80/10/10, so the
    assignment can be recomputed from ``(n_trajectories, seed)`` alone.
    """
    order = numpy_rng(seed, _SPLIT_STREAM).permutation(n_trajectories)
    n_train = int(round(SPLIT_FRACTIONS[0]*n_trajectories))
    n_val = int(round(SPLIT_FRACTIONS[1]*n_trajectories))
    if n_trajectories >= 3:
        n_train = min(max(n_train, 1), n_trajectories - 2)
        n_val = min(max(n_val, 1), n_trajectories - n_train - 1)
    labels = np.empty(n_trajectories, dtype=np.int64)
    labels[order[:n_train]] = 0
    labels[order[n_train:n_train + n_val]] = 1
    labels[order[n_train + n_val:]] = 2
    return labels


def channel_stats(states):
    """Per-channel mean and standard deviation (f64) of states of shape (N, T, C, *grid)"""
    states = np.asarray(states, dtype=np.float64)
    axes = (0, 1) + tuple(range(3, states.ndim))
    mean = states.mean(axis=axes)
    std = states.std(axis=axes)
    if np.any(std == 0):
        warnings.warn('Some channels are constant over the train split, using std=1 for them.')
        std = np.where(std == 0, 1.0, std)
    return mean, std


@dataclass
class TrajectoryDataset:
    """Discretised trajectories of a dynamical system

    Parameters
    ----------
    states : np.ndarray of shape (N, T, C, *grid), float32
    spec : SystemSpec
    mean, std : np.ndarray of shape (C, ), float64
        statistics of the train split
    regenerations : np.ndarray of shape (N, ), optional
        internal-step refinements needed by each trajectory
    """
    states: np.ndarray
    spec: SystemSpec
    mean: np.ndarray = None
    std: np.ndarray = None
    regenerations: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.float32)
        if self.states.ndim != 3 + self.spec.n_spatial:
            raise ConfigError(f'Got states of shape {self.states.shape} for a {self.spec.system} dataset.')
        self.splits = split_assignment(self.n_trajectories, self.spec.seed)
        if self.mean is None or self.std is None:
            self.mean, self.std = channel_stats(self.split_states('train'))
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.regenerations is None:
            self.regenerations = np.zeros(self.n_trajectories, dtype=np.int64)

    @property
    def n_trajectories(self):
        return self.states.shape[0]

    @property
    def n_steps(self):
        return self.states.shape[1]

    @property
    def channels(self):
        return self.states.shape[2]

    @property
    def grid(self):
        return list(self.states.shape[3:])

    @property
    def stats(self):
        return self.mean, self.std

    def split_indices(self, split):
        try:
            label = SPLITS.index(split)
        except ValueError:
            raise ConfigError(f'Got split={split} but expected one of {SPLITS}.') from None
        return np.flatnonzero(self.splits == label)

    def split_states(self, split):
        return self.states[self.split_indices(split)]

    def normalise(self, states):
        view = (slice(None), ) + (None, )*(self.states.ndim - 3)
        return (np.asarray(states, dtype=np.float64) - self.mean[view])/self.std[view]

    def content_hash(self):
        """SHA-256 of the stored states, first 16 hex digits"""
        return sha256_hex(self.states.tobytes())[:16]

    def n_windows(self, split, history_len):
        return len(self.split_indices(split))*max(self.n_steps - history_len, 0)

    def windows(self, split, history_len, index=None):
        """Teacher-forcing pairs of a split

        Parameters
        ----------
        split : {'train', 'val', 'test'}
        history_len : int
        index : array-like of int, optional
            flat window indices in ``[0, n_windows)``, by default all windows

        Returns
        -------
        history : torch.Tensor of shape (B, k, C, *grid), float64
        target : torch.Tensor of shape (B, C, *grid), float64
        """
        trajectories = self.split_indices(split)
        per_trajectory = self.n_steps - history_len
        if per_trajectory < 1:
            raise ConfigError(f'Trajectories of {self.n_steps} frames are too short for a history of {history_len}.')
        if index is None:
            index = np.arange(len(trajectories)*per_trajectory)
        index = np.asarray(index)
        traj = trajectories[index//per_trajectory]
        start = index % per_trajectory
        offsets = np.arange(history_len + 1)
        frames = self.states[traj[:, None], start[:, None] + offsets[None, :]]
        frames = torch.from_numpy(frames.astype(np.float64))
        return frames[:, :history_len], frames[:, history_len]

    def sample_windows(self, rng, batch_size, history_len, split='train'):
        """Random teacher-forcing pairs, (trajectory, t) drawn uniformly with `rng`"""
        n = self.n_windows(split, history_len)
        if n == 0:
            raise ConfigError(f'The {split} split has no windows of length {history_len + 1}.')
        return self.windows(split, history_len, rng.integers(0, n, size=batch_size))

    def trajectory(self, index):
        """Full trajectory `index` as a float64 tensor of shape (T, C, *grid)"""
        return torch.from_numpy(self.states[index].astype(np.float64))


def generate_dataset(spec, initial=None, threads=None):
    """Solves `spec` and wraps the result in a :class:`TrajectoryDataset`"""
    states, regenerations = solve(spec, initial=initial, threads=threads)
    dataset = TrajectoryDataset(states, spec, regenerations=regenerations)
    logger.info(f'Generated {dataset.n_trajectories} {spec.system} trajectories of {dataset.n_steps} frames, '
                f'channel mean={dataset.mean.tolist()} std={dataset.std.tolist()}.')
    return dataset


def _check_system(spec, system):
    if spec.system != system:
        raise ConfigError(f'Got a {spec.system} system but called the {system} solver.')


def solve_heat2d(spec, initial=None, threads=None):
    """Heat equation on a periodic square (RK2, explicit), see :func:`~crpsrft.dynamics.systems.solve`"""
    _check_system(spec, 'heat2d')
    return generate_dataset(spec, initial=initial, threads=threads)


def solve_burgers1d(spec, initial=None, threads=None):
    """Viscous Burgers on a periodic interval, see :func:`~crpsrft.dynamics.systems.solve`"""
    _check_system(spec, 'burgers1d')
    return generate_dataset(spec, initial=initial, threads=threads)


def solve_lorenz96(spec, initial=None, threads=None):
    """Lorenz-96 ring after warmup, see :func:`~crpsrft.dynamics.systems.solve`"""
    _check_system(spec, 'lorenz96')
    return generate_dataset(spec, initial=initial, threads=threads)


def dataset_bytes(dataset, provenance=None):
    if not np.all(np.isfinite(dataset.states)):
        raise NumericalError('Refusing to write a dataset containing NaN or Inf values.')
    header = {
        'spec': dataset.spec.to_dict(),
        'shape': list(dataset.states.shape),
        'regenerations': dataset.regenerations.tolist(),
        'provenance': dict(provenance or dataset.provenance),
    }
    payload = b''.join([np.ascontiguousarray(dataset.mean, dtype='<f8').tobytes(),
                        np.ascontiguousarray(dataset.std, dtype='<f8').tobytes(),
                        np.ascontiguousarray(dataset.states, dtype='<f4').tobytes()])
    return pack_container(DATASET_MAGIC, header, payload, version=DATASET_VERSION)


def write_dataset(dataset, path, provenance=None):
    path = Path(path)
    path.write_bytes(dataset_bytes(dataset, provenance))
    logger.debug(f'Wrote dataset to {path}.')
    return path


def read_dataset(path):
    """Reads a dataset written by :func:`write_dataset`

    Raises
    ------
    FormatError
        bad magic or version, corrupt header, truncated or corrupted payload
    """
    path = Path(path)
    header, reader = unpack_container(path.read_bytes(), DATASET_MAGIC, versions=(DATASET_VERSION, ),
                                      source=str(path))
    try:
        spec = SystemSpec.from_dict(header['spec'])
        shape = tuple(int(s) for s in header['shape'])
        regenerations = np.asarray(header.get('regenerations', [0]*shape[0]), dtype=np.int64)
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f'{path}: invalid dataset header ({err}).') from None
    if len(shape) < 4:
        raise FormatError(f'{path}: invalid state shape {shape}.')
    channels = shape[2]
    mean = reader.array('<f8', (channels, ), 'channel means')
    std = reader.array('<f8', (channels, ), 'channel stds')
    states = reader.array('<f4', shape, 'states')
    if reader.offset != len(reader.data):
        raise FormatError(f'{path}: {len(reader.data) - reader.offset} trailing bytes after the states.')
    try:
        return TrajectoryDataset(states, spec, mean=mean, std=std, regenerations=regenerations,
                                 provenance=header.get('provenance', {}))
    except ConfigError as err:
        raise FormatError(f'{path}: {err}') from None

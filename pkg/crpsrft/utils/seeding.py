"""Keyed random streams

Every stochastic quantity (a trajectory's initial condition, a member's noise at a
given rollout step, a bootstrap resample) draws from its own stream derived from
the run seed and integer keys. Results are therefore independent of the order in
which streams are consumed and of the number of worker threads.
"""

import numpy as np
import torch

# License: BSD 3 clause


def stream_seed(seed, *keys):
    """64-bit seed for the stream identified by ``(seed, *keys)``"""
    entropy = [int(seed)] + [int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def numpy_rng(seed, *keys):
    """numpy Generator for the stream ``(seed, *keys)``"""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]))


def torch_generator(seed, *keys, device='cpu'):
    """torch.Generator for the stream ``(seed, *keys)``"""
    generator = torch.Generator(device=device)
    generator.manual_seed(stream_seed(seed, *keys) & ((1 << 63) - 1))
    return generator

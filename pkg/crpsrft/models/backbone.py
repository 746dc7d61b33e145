"""Deterministic next-step backbone

The history of ``k`` states is stacked on the channel axis, projected to the
hidden width, passed through a stack of residual blocks and projected back to
the state channels by a zero-initialised head.
"""

from dataclasses import dataclass, asdict, field
from typing import List

import torch
from torch import nn

from ..errors import ConfigError, ShapeError
from ..layers.blocks import ChannelLinear, ResidualBlock, ACTIVATIONS, NORMS, NORM_PLACEMENTS
from ..functional.linear import PADDING_MODES

# License: BSD 3 clause


@dataclass
class BackboneConfig:
    """Architecture of the deterministic backbone

    Parameters
    ----------
    history_len : int
        number k of past states fed to the model
    channels : int
        number C of state channels
    spatial_dims : list of int
        grid extents, e.g. [64, 64] for a 2D field, [40] for Lorenz-96
    hidden_dim : int
    n_blocks : int
    norm_placement : {'pre', 'post'}
    norm : {'layer', 'identity'}
    long_skips : bool
        pairs block i with block n_blocks - 1 - i
    predict_residual : bool
        the model outputs the increment x_{t+1} - x_t
    activation : {'silu', 'gelu'}
    kernel_size : int
        size of the spatial stencil of every block
    ffn_mult : int
        expansion of the per-site MLP
    periodic : bool
        whether the domain is periodic
    padding : {'circular', 'zeros'}
    """
    history_len: int = 1
    channels: int = 1
    spatial_dims: List[int] = field(default_factory=lambda: [40])
    hidden_dim: int = 32
    n_blocks: int = 4
    norm_placement: str = 'pre'
    norm: str = 'layer'
    long_skips: bool = False
    predict_residual: bool = True
    activation: str = 'silu'
    kernel_size: int = 3
    ffn_mult: int = 2
    periodic: bool = True
    padding: str = 'circular'

    @property
    def n_spatial(self):
        return len(self.spatial_dims)

    def validate(self):
        if self.history_len < 1:
            raise ConfigError(f'Got history_len={self.history_len} but expected k >= 1.')
        if self.channels < 1 or self.hidden_dim < 1:
            raise ConfigError(f'Got channels={self.channels} and hidden_dim={self.hidden_dim}, both must be >= 1.')
        if not 1 <= self.n_spatial <= 3 or any(int(s) < 1 for s in self.spatial_dims):
            raise ConfigError(f'Got spatial_dims={self.spatial_dims} but expected 1 to 3 positive extents.')
        if self.n_blocks < 1:
            raise ConfigError(f'Got n_blocks={self.n_blocks} but expected at least one block.')
        if self.long_skips and self.n_blocks < 2:
            raise ConfigError(f'long_skips needs n_blocks >= 2, but got n_blocks={self.n_blocks}.')
        if self.norm_placement not in NORM_PLACEMENTS:
            raise ConfigError(f'Got norm_placement={self.norm_placement} but expected one of {NORM_PLACEMENTS}.')
        if self.norm not in NORMS:
            raise ConfigError(f'Got norm={self.norm} but expected one of {NORMS}.')
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f'Got activation={self.activation} but expected one of {tuple(ACTIVATIONS)}.')
        if self.padding not in PADDING_MODES:
            raise ConfigError(f'Got padding={self.padding} but expected one of {PADDING_MODES}.')
        if self.padding == 'circular' and not self.periodic:
            raise ConfigError('Circular padding was requested on a non-periodic domain.')
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f'Got kernel_size={self.kernel_size} but expected a positive odd size.')
        if self.ffn_mult < 1:
            raise ConfigError(f'Got ffn_mult={self.ffn_mult} but expected >= 1.')
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d['spatial_dims'] = [int(s) for s in d.get('spatial_dims', [40])]
        return cls(**d)


def skip_pairs(n_blocks):
    """(source, target) block pairs of the long skip connections"""
    return [(i, n_blocks - 1 - i) for i in range(n_blocks//2) if i < n_blocks - 1 - i]


class Backbone(nn.Module):
    """Stack of residual blocks operating in normalised space

    Parameters
    ----------
    config : BackboneConfig
    device : PyTorch device to use, default is None
    dtype : PyTorch dtype, default is torch.float64
    """
    def __init__(self, config, device=None, dtype=torch.float64):
        super().__init__()
        self.config = config.validate()
        self.pairs = skip_pairs(config.n_blocks) if config.long_skips else []
        targets = {t for _, t in self.pairs}

        self.encoder = ChannelLinear(config.history_len*config.channels, config.hidden_dim,
                                     device=device, dtype=dtype)
        self.blocks = nn.ModuleList([
            ResidualBlock(config.hidden_dim, config.n_spatial, ffn_dim=config.ffn_mult*config.hidden_dim,
                          kernel_size=config.kernel_size, norm_placement=config.norm_placement,
                          norm=config.norm, activation=config.activation, receives_skip=(i in targets),
                          padding=config.padding, periodic=config.periodic, device=device, dtype=dtype)
            for i in range(config.n_blocks)])
        self.head = ChannelLinear(config.hidden_dim, config.channels, device=device, dtype=dtype).zero_()

    @property
    def n_blocks(self):
        return self.config.n_blocks

    @property
    def hidden_dim(self):
        return self.config.hidden_dim

    def check_history(self, history):
        """Checks a batched history of shape (batch, k, C, *spatial)"""
        cfg = self.config
        expected = (cfg.history_len, cfg.channels) + tuple(cfg.spatial_dims)
        if history.ndim != 1 + len(expected) or tuple(history.shape[1:]) != expected:
            raise ShapeError('encode', history.shape, (-1, ) + expected,
                             message=f'expected a history of k={cfg.history_len} states with C={cfg.channels} channels')

    def encode(self, history):
        """Stacks the history on the channel axis and projects it to the hidden width

        Parameters
        ----------
        history : torch.Tensor of shape (batch, k, C, *spatial)
            already normalised by the channel statistics

        Returns
        -------
        torch.Tensor of shape (batch, hidden_dim, *spatial)
        """
        self.check_history(history)
        x = history.reshape((history.shape[0], -1) + tuple(history.shape[3:]))
        return self.encoder(x)

    def forward(self, history, modulations=None):
        """Output of the network in normalised space

        Parameters
        ----------
        history : torch.Tensor of shape (batch, k, C, *spatial)
        modulations : dict[int, ModulationParams], optional
            modulation of the blocks that have one

        Returns
        -------
        torch.Tensor of shape (batch, C, *spatial)
            increment when ``predict_residual`` else next state
        """
        if modulations is None:
            modulations = {}
        sources = {s: t for s, t in self.pairs}
        saved = {}
        x = self.encode(history)
        for i, block in enumerate(self.blocks):
            skip = saved.pop(i, None)
            x = block(x, modulation=modulations.get(i), skip=skip)
            if i in sources:
                saved[sources[i]] = x
        return self.head(x)

"""Global-noise conditional normalisation

A low-dimensional noise vector is drawn once per ensemble member, embedded by a
small MLP shared by the whole network, then each modulated block turns the
embedding into its own (scale, shift, gate[, skip gate]) through an AdaLN head.
"""

import math
from dataclasses import dataclass, asdict
from typing import Optional

import torch
from torch import nn
from torch.nn import init

from ..errors import ConfigError
from ..functional import ops
from ..utils.seeding import torch_generator

# License: BSD 3 clause

INJECTION_DENSITIES = ('full', 'half')
# keeps the variance of every embedding row within 1e-6 of one
EMBEDDING_NORM_EPS = 1e-12


@dataclass
class NoiseBranchConfig:
    """Configuration of the noise branch

    Parameters
    ----------
    d_noise : int, default is 32
        dimension of the noise vector and of its embedding
    injection_density : {'full', 'half'}
        'half' modulates every second block, starting from block 0
    use_delta_gate : bool or None
        whether heads also emit a skip gate; None follows the backbone's long_skips
    init_scale : float, default is 1e-2
        scaling of the final AdaLN projection at initialisation; 0 switches the noise off exactly
    """
    d_noise: int = 32
    injection_density: str = 'full'
    use_delta_gate: Optional[bool] = None
    init_scale: float = 1e-2

    def validate(self):
        if int(self.d_noise) < 1:
            raise ConfigError(f'Got d_noise={self.d_noise} but the noise dimension must be >= 1.')
        if self.injection_density not in INJECTION_DENSITIES:
            raise ConfigError(f'Got injection_density={self.injection_density} '
                              f'but expected one of {INJECTION_DENSITIES}.')
        if not (math.isfinite(self.init_scale) and self.init_scale >= 0):
            raise ConfigError(f'Got init_scale={self.init_scale} but expected a finite, non-negative value.')
        return self

    def to_dict(self):
        return asdict(self)


def injected_blocks(n_blocks, injection_density='full'):
    """Indices of the modulated blocks"""
    if injection_density == 'full':
        return list(range(n_blocks))
    elif injection_density == 'half':
        return list(range(0, n_blocks, 2))
    raise ConfigError(f'Got injection_density={injection_density} but expected one of {INJECTION_DENSITIES}.')


def draw_noise(n_members, d_noise, seed, step=0, member_offset=0, device=None, dtype=torch.float64):
    """Standard normal noise, one independent stream per member

    Row ``m`` is drawn from the stream keyed by ``(seed, step, member_offset + m)``, so the first
    rows of a larger draw equal a smaller draw and the result does not depend on how the
    members are split between workers.

    Returns
    -------
    torch.Tensor of shape (n_members, d_noise)
    """
    if n_members < 1:
        raise ValueError(f'Cannot sample noise for M={n_members} members, M must be >= 1.')
    rows = [torch.randn(d_noise, generator=torch_generator(seed, step, member_offset + m), dtype=dtype)
            for m in range(n_members)]
    eps = torch.stack(rows, dim=0)
    if device is not None:
        eps = eps.to(device)
    return eps


@dataclass
class NoiseEmbedding:
    """Noise draw and its embedding, both of shape (n_members, d_noise)"""
    eps: torch.Tensor
    embedding: torch.Tensor

    @property
    def n_members(self):
        return self.eps.shape[0]


@dataclass
class ModulationParams:
    """Per-sample modulation of one block, each field of shape (batch, hidden_dim)"""
    gamma: torch.Tensor
    beta: torch.Tensor
    alpha: torch.Tensor
    delta: Optional[torch.Tensor] = None

    @staticmethod
    def expand(param, n_spatial):
        """View of shape (batch, hidden_dim, 1, ..., 1), broadcastable on the spatial axes"""
        return param.reshape(tuple(param.shape) + (1, )*n_spatial)

    def repeat(self, n):
        """Repeats every sample n times along the batch (sample-major)"""
        fields = {k: (v.repeat_interleave(n, dim=0) if v is not None else None)
                  for k, v in (('gamma', self.gamma), ('beta', self.beta),
                               ('alpha', self.alpha), ('delta', self.delta))}
        return ModulationParams(**fields)

    def tile(self, n):
        """Tiles the whole batch n times (member-major)"""
        fields = {k: (v.repeat((n, 1)) if v is not None else None)
                  for k, v in (('gamma', self.gamma), ('beta', self.beta),
                               ('alpha', self.alpha), ('delta', self.delta))}
        return ModulationParams(**fields)


class NoiseEncoder(nn.Module):
    """Two-layer MLP with expansion factor 4 followed by a layer norm

    The layer norm uses its own small `norm_eps` so that every embedding row has
    zero mean and unit variance, not the slightly shrunk variance of the block norms.
    """
    def __init__(self, d_noise, expansion=4, norm_eps=EMBEDDING_NORM_EPS, device=None, dtype=None):
        super().__init__()
        self.d_noise = d_noise
        self.norm_eps = norm_eps
        self.fc1 = nn.Linear(d_noise, expansion*d_noise, device=device, dtype=dtype)
        self.fc2 = nn.Linear(expansion*d_noise, d_noise, device=device, dtype=dtype)
        self.gain = nn.Parameter(torch.ones(d_noise, device=device, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(d_noise, device=device, dtype=dtype))

    def forward(self, eps):
        return ops.layer_norm(self.fc2(ops.silu(self.fc1(eps))), self.gain, self.bias, eps=self.norm_eps)


class AdaLNHead(nn.Module):
    """Linear -> SiLU -> Linear, emitting (gamma, beta, alpha, delta)

    The head always emits four chunks of size hidden_dim; the skip gate is dropped
    when `use_delta_gate` is False.
    """
    n_chunks = 4

    def __init__(self, d_embedding, hidden_dim, init_scale=1e-2, use_delta_gate=True, device=None, dtype=None):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.use_delta_gate = use_delta_gate
        self.fc1 = nn.Linear(d_embedding, hidden_dim, device=device, dtype=dtype)
        self.fc2 = nn.Linear(hidden_dim, self.n_chunks*hidden_dim, device=device, dtype=dtype)
        self.reset_output(init_scale)

    def reset_output(self, init_scale):
        """Default initialisation of the final projection scaled by `init_scale`, zero bias"""
        with torch.no_grad():
            if init_scale == 0:
                self.fc2.weight.zero_()
            else:
                init.kaiming_uniform_(self.fc2.weight, a=math.sqrt(5))
                self.fc2.weight.mul_(init_scale)
            self.fc2.bias.zero_()

    def forward(self, embedding):
        out = self.fc2(ops.silu(self.fc1(embedding)))
        gamma, beta, alpha, delta = torch.chunk(out, self.n_chunks, dim=-1)
        if not self.use_delta_gate:
            delta = None
        return ModulationParams(gamma, beta, alpha, delta)


class NoiseBranch(nn.Module):
    """Shared noise encoder plus one AdaLN head per modulated block

    Parameters
    ----------
    config : NoiseBranchConfig
    n_blocks : int
        number of blocks of the backbone
    hidden_dim : int
        width of the backbone blocks
    use_delta_gate : bool
        resolved value (the backbone's long_skips when the config leaves it to None)
    """
    def __init__(self, config, n_blocks, hidden_dim, use_delta_gate, device=None, dtype=None):
        super().__init__()
        config.validate()
        self.config = config
        self.n_blocks = n_blocks
        self.hidden_dim = hidden_dim
        self.use_delta_gate = bool(use_delta_gate)
        self.block_ids = injected_blocks(n_blocks, config.injection_density)
        self.encoder = NoiseEncoder(config.d_noise, device=device, dtype=dtype)
        self.heads = nn.ModuleDict({
            str(i): AdaLNHead(config.d_noise, hidden_dim, init_scale=config.init_scale,
                              use_delta_gate=self.use_delta_gate, device=device, dtype=dtype)
            for i in self.block_ids})

    @property
    def d_noise(self):
        return self.config.d_noise

    def embed(self, eps):
        return NoiseEmbedding(eps, self.encoder(eps))

    def sample_noise(self, n_members, seed, step=0):
        """Draws and embeds the noise of `n_members` members

        Returns
        -------
        NoiseEmbedding
        """
        param = self.encoder.gain
        eps = draw_noise(n_members, self.d_noise, seed, step=step, device=param.device, dtype=param.dtype)
        return self.embed(eps)

    def modulations(self, embedding):
        """Modulation parameters of every modulated block

        Parameters
        ----------
        embedding : torch.Tensor of shape (batch, d_noise)

        Returns
        -------
        dict[int, ModulationParams]
        """
        if isinstance(embedding, NoiseEmbedding):
            embedding = embedding.embedding
        return {i: self.heads[str(i)](embedding) for i in self.block_ids}

    def zero_heads_(self):
        """Switches the stochasticity off exactly"""
        for head in self.heads.values():
            head.reset_output(0)
        return self

    def extra_repr(self):
        return (f'd_noise={self.d_noise}, blocks={self.block_ids}, '
                f'use_delta_gate={self.use_delta_gate}')


def noise_branch_param_count(n_blocks, hidden_dim, d_noise, injection_density='full', expansion=4):
    """Closed-form number of parameters added by a noise branch"""
    n_heads = len(injected_blocks(n_blocks, injection_density))
    head = d_noise*hidden_dim + hidden_dim + hidden_dim*4*hidden_dim + 4*hidden_dim
    encoder = (d_noise*expansion*d_noise + expansion*d_noise) + (expansion*d_noise*d_noise + d_noise) + 2*d_noise
    return n_heads*head + encoder

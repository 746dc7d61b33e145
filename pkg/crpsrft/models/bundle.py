"""A backbone, its optional noise branch and the channel statistics it was trained with"""

import copy
import logging

import torch
from torch import nn

from ..errors import ConfigError, NumericalError, ShapeError
from ..layers.modulation import NoiseBranch, NoiseBranchConfig
from .backbone import Backbone, BackboneConfig

# License: BSD 3 clause

logger = logging.getLogger(__name__)


class ModelBundle(nn.Module):
    """Serialisable surrogate operating on physical states

    Inputs are normalised by the per-channel statistics of the training split;
    the predicted normalised increment is scaled back by the channel standard
    deviation and added to the last state, so a zero increment is exactly the
    persistence forecast.

    Parameters
    ----------
    backbone_config : BackboneConfig
    mean, std : array-like of shape (C, )
        channel statistics of the training split
    noise_config : NoiseBranchConfig, optional
        if given, the bundle carries a noise branch and can produce ensembles
    """
    def __init__(self, backbone_config, mean=None, std=None, noise_config=None, device=None, dtype=torch.float64):
        super().__init__()
        self.backbone = Backbone(backbone_config, device=device, dtype=dtype)
        channels = backbone_config.channels
        mean = torch.zeros(channels, dtype=dtype) if mean is None else torch.as_tensor(mean, dtype=dtype)
        std = torch.ones(channels, dtype=dtype) if std is None else torch.as_tensor(std, dtype=dtype)
        if mean.shape != (channels, ) or std.shape != (channels, ):
            raise ShapeError('ModelBundle', mean.shape, std.shape,
                             message=f'channel statistics must have shape ({channels}, )')
        if not torch.all(std > 0):
            raise ConfigError('Channel standard deviations must be strictly positive.')
        self.register_buffer('stats_mean', mean.to(device))
        self.register_buffer('stats_std', std.to(device))

        if noise_config is not None:
            self.noise_branch = self._make_noise_branch(noise_config, device=device, dtype=dtype)
        else:
            self.noise_branch = None

    def _make_noise_branch(self, noise_config, device=None, dtype=None):
        cfg = self.backbone.config
        use_delta_gate = noise_config.use_delta_gate
        if use_delta_gate is None:
            use_delta_gate = cfg.long_skips
        elif bool(use_delta_gate) != bool(cfg.long_skips):
            raise ConfigError(f'Got use_delta_gate={use_delta_gate} but the backbone has long_skips={cfg.long_skips}; '
                              'the skip gate is tied to the long skips.')
        return NoiseBranch(noise_config, cfg.n_blocks, cfg.hidden_dim, use_delta_gate, device=device, dtype=dtype)

    @property
    def config(self):
        return self.backbone.config

    @property
    def has_noise_branch(self):
        return self.noise_branch is not None

    def _spatial_view(self, stat):
        return stat.reshape((1, -1) + (1, )*self.config.n_spatial)

    def normalise(self, x):
        """Normalises fields of shape (..., C, *spatial)"""
        return (x - self._spatial_view(self.stats_mean))/self._spatial_view(self.stats_std)

    def denormalise(self, x):
        return x*self._spatial_view(self.stats_std) + self._spatial_view(self.stats_mean)

    def check_data_shape(self, channels, grid):
        """Raises ConfigError unless the model was built for `channels` fields on `grid`"""
        cfg = self.config
        if cfg.channels != channels or list(cfg.spatial_dims) != list(grid):
            raise ConfigError(f'The model expects {cfg.channels} channels on a {cfg.spatial_dims} grid, '
                              f'but the data has {channels} channels on a {list(grid)} grid.')

    def check_finite(self):
        """Raises NumericalError if any parameter is NaN or infinite"""
        for name, param in self.named_parameters():
            if not torch.isfinite(param).all():
                raise NumericalError(f'Poisoned model: parameter {name} contains NaN or Inf values.')

    def _batched(self, history):
        cfg = self.config
        single = history.ndim == 2 + cfg.n_spatial
        if single:
            history = history.unsqueeze(0)
        self.backbone.check_history(history)
        return history, single

    def predict_normalised(self, history_n, modulations=None):
        """Next state in normalised space from a normalised batched history"""
        out = self.backbone(history_n, modulations)
        if self.config.predict_residual:
            return history_n[:, -1] + out
        return out

    def _predict(self, history, modulations=None):
        """Next physical state from a batched physical history"""
        out = self.backbone(self.normalise(history), modulations)
        if self.config.predict_residual:
            return history[:, -1] + out*self._spatial_view(self.stats_std)
        return self.denormalise(out)

    def forward_deterministic(self, history):
        """Next state predicted without any modulation

        Parameters
        ----------
        history : torch.Tensor of shape (k, C, *spatial) or (batch, k, C, *spatial)
            physical (unnormalised) states, oldest first

        Returns
        -------
        torch.Tensor of shape (C, *spatial) or (batch, C, *spatial)
        """
        self.check_finite()
        history, single = self._batched(history)
        pred = self._predict(history)
        return pred[0] if single else pred

    def noise_embedding(self, n_members, seed, step=0, noise=None):
        if not self.has_noise_branch:
            raise ConfigError('This model has no noise branch: retrofit it first (attach_noise_branch / retrofit-crps).')
        if noise is None:
            return self.noise_branch.sample_noise(n_members, seed, step=step)
        if noise.shape != (n_members, self.noise_branch.d_noise):
            raise ShapeError('forward_ensemble', noise.shape, (n_members, self.noise_branch.d_noise))
        return self.noise_branch.embed(noise)

    def forward_ensemble(self, history, n_members, seed=0, step=0, noise=None):
        """One modulated forward pass per ensemble member

        The members are folded into the batch dimension; member ``m`` uses the
        noise stream keyed by ``(seed, step, m)`` unless `noise` is given.

        Parameters
        ----------
        history : torch.Tensor of shape (k, C, *spatial) or (batch, k, C, *spatial)
        n_members : int
        seed : int
        step : int, default is 0
            rollout step, selects the noise stream
        noise : torch.Tensor of shape (n_members, d_noise), optional
            explicit noise, overrides `seed` and `step`

        Returns
        -------
        torch.Tensor of shape (n_members, C, *spatial) or (n_members, batch, C, *spatial)
        """
        if n_members < 1:
            raise ValueError(f'Cannot build an ensemble of M={n_members} members, M must be >= 1.')
        embedding = self.noise_embedding(n_members, seed, step=step, noise=noise)
        self.check_finite()
        history, single = self._batched(history)
        batch_size = history.shape[0]
        # member-major: row m*batch + b is member m of sample b
        replicated = history.repeat((n_members, ) + (1, )*(history.ndim - 1))
        pred = self._predict(replicated, self.noise_branch.modulations(
            embedding.embedding.repeat_interleave(batch_size, dim=0)))
        pred = pred.reshape((n_members, batch_size) + tuple(pred.shape[1:]))
        return pred[:, 0] if single else pred

    def forward_embedded(self, history, embedding):
        """Next physical states of a batch whose sample ``i`` is modulated by ``embedding[i]``

        Parameters
        ----------
        history : torch.Tensor of shape (n, k, C, *spatial)
            physical states, one history per member
        embedding : torch.Tensor of shape (n, d_noise)
            noise embeddings, e.g. ``NoiseEmbedding.embedding``

        Returns
        -------
        torch.Tensor of shape (n, C, *spatial)
        """
        if not self.has_noise_branch:
            raise ConfigError('This model has no noise branch: retrofit it first (attach_noise_branch / retrofit-crps).')
        self.check_finite()
        history, _ = self._batched(history)
        if embedding.shape[0] != history.shape[0]:
            raise ShapeError('forward_embedded', history.shape, embedding.shape,
                             message='one embedding row is needed per history')
        return self._predict(history, self.noise_branch.modulations(embedding))

    def forward_members(self, history, eps):
        """Modulated prediction for a flat batch with one noise row per sample

        Parameters
        ----------
        history : torch.Tensor of shape (n, k, C, *spatial)
            normalised histories
        eps : torch.Tensor of shape (n, d_noise)

        Returns
        -------
        torch.Tensor of shape (n, C, *spatial), next states in normalised space
        """
        if not self.has_noise_branch:
            raise ConfigError('This model has no noise branch: retrofit it first (attach_noise_branch / retrofit-crps).')
        modulations = self.noise_branch.modulations(self.noise_branch.encoder(eps))
        return self.predict_normalised(history, modulations)

    def param_groups(self):
        """Backbone and noise-branch parameters, each parameter in exactly one group"""
        groups = {'backbone': list(self.backbone.parameters())}
        groups['noise'] = list(self.noise_branch.parameters()) if self.has_noise_branch else []
        return groups


def attach_noise_branch(bundle, noise_config, seed=0, zero_init=False):
    """Retrofits a deterministic bundle with a freshly initialised noise branch

    Parameters
    ----------
    bundle : ModelBundle
        deterministic model, left untouched
    noise_config : NoiseBranchConfig
    seed : int
        seed of the noise-branch initialisation
    zero_init : bool, default is False
        if True, the AdaLN heads output exactly zero and every member equals the deterministic forecast

    Returns
    -------
    ModelBundle
        copy of `bundle` whose backbone parameters are copied verbatim
    """
    if bundle.has_noise_branch:
        raise ConfigError('The model already carries a noise branch.')
    noise_config = copy.deepcopy(noise_config)
    noise_config.validate()
    if zero_init:
        noise_config.init_scale = 0.0

    retrofitted = copy.deepcopy(bundle)
    param = next(retrofitted.backbone.parameters())
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        retrofitted.noise_branch = retrofitted._make_noise_branch(noise_config, device=param.device, dtype=param.dtype)
    n_added = sum(p.numel() for p in retrofitted.noise_branch.parameters())
    logger.info(f'Attached a noise branch with {n_added} parameters to blocks {retrofitted.noise_branch.block_ids}.')
    return retrofitted


def make_bundle(backbone_config, stats=None, noise_config=None, seed=0, dtype=torch.float64):
    """Seeded construction of a fresh bundle"""
    if isinstance(backbone_config, dict):
        backbone_config = BackboneConfig.from_dict(backbone_config)
    if isinstance(noise_config, dict):
        noise_config = NoiseBranchConfig(**noise_config)
    mean, std = (None, None) if stats is None else stats
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ModelBundle(backbone_config, mean=mean, std=std, noise_config=noise_config, dtype=dtype)

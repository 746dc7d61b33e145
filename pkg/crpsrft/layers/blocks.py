"""Building blocks of the backbone

All layers operate on fields of shape ``(batch, channels, *spatial)`` and act
on the channel axis independently at every site, except :class:`SpatialMix`.
"""

import math

import torch
from torch import nn
from torch.nn import init

from ..errors import ConfigError
from ..functional import ops
from ..functional.linear import channel_linear, spatial_mix, identity_stencil, PADDING_MODES

# License: BSD 3 clause

ACTIVATIONS = {'silu': ops.silu, 'gelu': ops.gelu}
NORMS = ('layer', 'identity')
NORM_PLACEMENTS = ('pre', 'post')


def get_activation(name):
    try:
        return ACTIVATIONS[name.lower()]
    except KeyError:
        raise ConfigError(f'Got activation={name} but expected one of {tuple(ACTIVATIONS)}.')


class ChannelLinear(nn.Module):
    """Per-site dense layer on the channel axis

    Parameters
    ----------
    in_channels : int
    out_channels : int
    bias : bool, default is True
    device : PyTorch device to use, default is None
    dtype : PyTorch dtype, default is None
    """
    def __init__(self, in_channels, out_channels, bias=True, device=None, dtype=None):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = nn.Parameter(torch.empty((out_channels, in_channels), device=device, dtype=dtype))
        if bias:
            self.bias = nn.Parameter(torch.empty(out_channels, device=device, dtype=dtype))
        else:
            self.register_parameter('bias', None)
        self.reset_parameters()

    def reset_parameters(self):
        init.kaiming_uniform_(self.weight, a=math.sqrt(5))
        if self.bias is not None:
            bound = 1/math.sqrt(self.in_channels)
            init.uniform_(self.bias, -bound, bound)

    def zero_(self):
        """Sets weight and bias to zero (e.g. for a persistence output head)"""
        with torch.no_grad():
            self.weight.zero_()
            if self.bias is not None:
                self.bias.zero_()
        return self

    def identity_(self):
        """Identity on the first ``min(in, out)`` channels, zero elsewhere"""
        with torch.no_grad():
            self.weight.zero_()
            n = min(self.in_channels, self.out_channels)
            self.weight[:n, :n] = torch.eye(n, dtype=self.weight.dtype, device=self.weight.device)
            if self.bias is not None:
                self.bias.zero_()
        return self

    def forward(self, x):
        return channel_linear(x, self.weight, self.bias)

    def extra_repr(self):
        return f'in_channels={self.in_channels}, out_channels={self.out_channels}, bias={self.bias is not None}'


class SpatialMix(nn.Module):
    """Learnable depthwise stencil coupling neighbouring sites

    Parameters
    ----------
    channels : int
    n_spatial : int
        number of spatial dimensions (1, 2 or 3)
    kernel_size : int, default is 3
    padding : {'circular', 'zeros'}
        use 'circular' on periodic domains
    periodic : bool, default is True
        whether the domain is periodic; circular padding on a non-periodic domain is refused
    """
    def __init__(self, channels, n_spatial, kernel_size=3, padding='circular', periodic=True,
                 device=None, dtype=None):
        super().__init__()
        if padding not in PADDING_MODES:
            raise ConfigError(f'Got padding={padding} but expected one of {PADDING_MODES}.')
        if padding == 'circular' and not periodic:
            raise ConfigError('Circular padding was requested on a non-periodic domain.')
        if kernel_size % 2 == 0:
            raise ConfigError(f'Stencils need an odd kernel_size, but got kernel_size={kernel_size}.')
        self.channels = channels
        self.n_spatial = n_spatial
        self.kernel_size = kernel_size
        self.padding = padding
        self.stencil = nn.Parameter(identity_stencil(channels, kernel_size, n_spatial, device=device, dtype=dtype))

    def reset_parameters(self):
        with torch.no_grad():
            self.stencil.copy_(identity_stencil(self.channels, self.kernel_size, self.n_spatial,
                                                device=self.stencil.device, dtype=self.stencil.dtype))

    def forward(self, x):
        return spatial_mix(x, self.stencil, padding=self.padding)

    def extra_repr(self):
        return f'channels={self.channels}, kernel_size={self.kernel_size}, padding={self.padding}'


class ChannelNorm(nn.Module):
    """Layer normalisation over the channel axis, at every site

    Parameters
    ----------
    channels : int
    kind : {'layer', 'identity'}
        'identity' disables the normalisation altogether
    eps : float, default is 1e-5
    """
    def __init__(self, channels, kind='layer', eps=ops.LAYER_NORM_EPS, device=None, dtype=None):
        super().__init__()
        if kind not in NORMS:
            raise ConfigError(f'Got norm={kind} but expected one of {NORMS}.')
        self.kind = kind
        self.eps = eps
        if kind == 'layer':
            self.gain = nn.Parameter(torch.ones(channels, device=device, dtype=dtype))
            self.bias = nn.Parameter(torch.zeros(channels, device=device, dtype=dtype))

    def forward(self, x):
        if self.kind == 'identity':
            return x
        return ops.layer_norm(x, self.gain, self.bias, dim=1, eps=self.eps)


class ResidualBlock(nn.Module):
    """Normalise, transform, gate

    In pre-norm placement the block computes ``x + (1 + a) T((1 + g) N(x) + b)``;
    in post-norm placement the sum is passed through a second normalisation.
    ``T`` is a spatial stencil followed by a two-layer per-site MLP. The
    modulation ``(g, b, a)`` is zero unless a noise branch provides it.

    Parameters
    ----------
    hidden_dim : int
    n_spatial : int
    ffn_dim : int, optional
        width of the per-site MLP, by default 2*hidden_dim
    kernel_size : int, default is 3
    norm_placement : {'pre', 'post'}
    norm : {'layer', 'identity'}
    activation : {'silu', 'gelu'}
    receives_skip : bool, default is False
        whether a long skip connection ends in this block. Such blocks own a
        zero-initialised skip gate so that the untrained skip contributes nothing.
    padding : {'circular', 'zeros'}
    periodic : bool, default is True
    """
    def __init__(self, hidden_dim, n_spatial, ffn_dim=None, kernel_size=3, norm_placement='pre',
                 norm='layer', activation='silu', receives_skip=False, padding='circular',
                 periodic=True, device=None, dtype=None):
        super().__init__()
        if norm_placement not in NORM_PLACEMENTS:
            raise ConfigError(f'Got norm_placement={norm_placement} but expected one of {NORM_PLACEMENTS}.')
        self.hidden_dim = hidden_dim
        self.n_spatial = n_spatial
        self.ffn_dim = ffn_dim or 2*hidden_dim
        self.norm_placement = norm_placement
        self.activation = activation
        self._act = get_activation(activation)

        self.norm_in = ChannelNorm(hidden_dim, kind=norm, device=device, dtype=dtype)
        if norm_placement == 'post':
            self.norm_out = ChannelNorm(hidden_dim, kind=norm, device=device, dtype=dtype)
        else:
            self.norm_out = None
        self.mix = SpatialMix(hidden_dim, n_spatial, kernel_size=kernel_size, padding=padding,
                              periodic=periodic, device=device, dtype=dtype)
        self.fc1 = ChannelLinear(hidden_dim, self.ffn_dim, device=device, dtype=dtype)
        self.fc2 = ChannelLinear(self.ffn_dim, hidden_dim, device=device, dtype=dtype)

        if receives_skip:
            self.skip_gate = nn.Parameter(torch.zeros(hidden_dim, device=device, dtype=dtype))
        else:
            self.register_parameter('skip_gate', None)

    @property
    def receives_skip(self):
        return self.skip_gate is not None

    def transform(self, x):
        """Main transformation: stencil mixing then per-site MLP"""
        return self.fc2(self._act(self.fc1(self.mix(x))))

    def forward(self, x, modulation=None, skip=None):
        """
        Parameters
        ----------
        x : torch.Tensor of shape (batch, hidden_dim, *spatial)
        modulation : ModulationParams, optional
            per-sample (gamma, beta, alpha, [delta]), each of shape (batch, hidden_dim)
        skip : torch.Tensor, optional
            output of the paired earlier block, same shape as `x`
        """
        h = self.norm_in(x)
        if modulation is not None:
            gamma, beta, alpha = (modulation.expand(p, self.n_spatial)
                                  for p in (modulation.gamma, modulation.beta, modulation.alpha))
            h = (1 + gamma)*h + beta
        y = self.transform(h)
        if modulation is not None:
            y = (1 + alpha)*y
        out = x + y
        if self.norm_out is not None:
            out = self.norm_out(out)

        if skip is not None:
            if self.skip_gate is None:
                raise ConfigError('A skip connection was given to a block that does not receive one.')
            delta = self.skip_gate.reshape((1, -1) + (1, )*self.n_spatial)
            if modulation is not None:
                if modulation.delta is None:
                    raise ConfigError('A skip connection was given but the modulation has no delta gate '
                                      '(use_delta_gate=False).')
                delta = delta + modulation.expand(modulation.delta, self.n_spatial)
            out = (out + delta*skip)*ops.rsqrt(1 + delta**2)
        return out

    def extra_repr(self):
        return (f'hidden_dim={self.hidden_dim}, ffn_dim={self.ffn_dim}, norm_placement={self.norm_placement}, '
                f'activation={self.activation}, receives_skip={self.receives_skip}')

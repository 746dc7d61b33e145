import torch
import torch.nn.functional as F

import tensorly as tl
tl.set_backend('pytorch')
from tensorly import tenalg

from ..errors import ConfigError, ShapeError

# License: BSD 3 clause


_CONVOLUTION = {1: F.conv1d, 2: F.conv2d, 3: F.conv3d}
PADDING_MODES = ('circular', 'zeros')


def channel_linear(x, weight, bias=None):
    """Dense layer applied independently at every spatial site

    Parameters
    ----------
    x : torch.Tensor of shape (batch, in_channels, *spatial)
    weight : torch.Tensor of shape (out_channels, in_channels)
    bias : torch.Tensor of shape (out_channels, ), optional

    Returns
    -------
    torch.Tensor of shape (batch, out_channels, *spatial)
        the channel mode of `x` contracted with `weight`
    """
    if x.ndim < 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError('channel_linear', x.shape, weight.shape,
                         message='the channel axis (dim 1) must match the input features of the weight')
    x = tenalg.mode_dot(x, weight, mode=1)
    if bias is not None:
        x = x + bias.reshape((1, -1) + (1, )*(x.ndim - 2))
    return x


def spatial_mix(x, stencil, padding='circular'):
    """Depthwise stencil mixing of neighbouring sites

    Parameters
    ----------
    x : torch.Tensor of shape (batch, channels, *spatial)
    stencil : torch.Tensor of shape (channels, 1, *kernel_size)
        one stencil per channel, odd kernel sizes
    padding : {'circular', 'zeros'}
        'circular' for periodic domains (translation equivariant), 'zeros' otherwise

    Returns
    -------
    torch.Tensor
        same shape as `x`
    """
    n_spatial = x.ndim - 2
    kernel_size = tuple(stencil.shape[2:])
    if len(kernel_size) != n_spatial or stencil.shape[0] != x.shape[1]:
        raise ShapeError('spatial_mix', x.shape, stencil.shape)
    if any(k % 2 == 0 for k in kernel_size):
        raise ShapeError('spatial_mix', stencil.shape, message='kernel sizes must be odd')
    try:
        conv = _CONVOLUTION[n_spatial]
    except KeyError:
        raise ValueError(f'Got {n_spatial} spatial dimensions but only 1D, 2D and 3D fields are supported.')

    if padding == 'circular':
        pad = []
        for k in reversed(kernel_size):
            pad += [k//2, k//2]
        x = F.pad(x, pad, mode='circular')
        return conv(x, stencil, groups=x.shape[1])
    elif padding == 'zeros':
        return conv(x, stencil, padding=tuple(k//2 for k in kernel_size), groups=x.shape[1])
    raise ConfigError(f'Got padding={padding} but expected one of {PADDING_MODES}.')


def identity_stencil(channels, kernel_size, n_spatial, device=None, dtype=None):
    """Stencil with a single unit weight at the centre, i.e. a no-op mixing"""
    shape = (channels, 1) + (kernel_size, )*n_spatial
    stencil = torch.zeros(shape, device=device, dtype=dtype)
    centre = (slice(None), 0) + (kernel_size//2, )*n_spatial
    stencil[centre] = 1
    return stencil

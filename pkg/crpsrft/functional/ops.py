"""Shape-checked primitives on top of PyTorch autograd

Every primitive records itself on PyTorch's define-by-run graph, which plays the role
of the computation tape: ``backward`` replays it in reverse and accumulates gradients
in ``tensor.grad``. The wrappers add one thing on top of torch: incompatible operands
raise a :class:`~crpsrft.errors.ShapeError` naming the op and both shapes.
"""

import builtins

import torch
import torch.nn.functional as F

from ..errors import ShapeError

# License: BSD 3 clause

LAYER_NORM_EPS = 1e-5


def _as_tensor(x, like):
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(x, dtype=like.dtype, device=like.device)


def _binary(op, fun, a, b):
    if not torch.is_tensor(a):
        a = _as_tensor(a, b)
    b = _as_tensor(b, a)
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError(op, a.shape, b.shape) from None
    return fun(a, b)


def add(a, b):
    return _binary('add', torch.add, a, b)


def sub(a, b):
    return _binary('sub', torch.sub, a, b)


def mul(a, b):
    return _binary('mul', torch.mul, a, b)


def div(a, b):
    return _binary('div', torch.div, a, b)


def matmul(a, b):
    """Matrix product with batch broadcasting

    Parameters
    ----------
    a : torch.Tensor of shape (..., n, k)
    b : torch.Tensor of shape (..., k, m)
    """
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError('matmul', a.shape, b.shape, message='operands must have at least one dimension')
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.shape[-1] != inner_b:
        raise ShapeError('matmul', a.shape, b.shape,
                         message=f'contraction dimensions differ ({a.shape[-1]} != {inner_b})')
    try:
        return torch.matmul(a, b)
    except RuntimeError:
        raise ShapeError('matmul', a.shape, b.shape) from None


def abs(x):
    """Absolute value; the gradient at exactly 0 is 0."""
    return torch.abs(x)


def sqrt(x):
    return torch.sqrt(x)


def rsqrt(x):
    return torch.rsqrt(x)


def exp(x):
    return torch.exp(x)


def _check_dim(op, x, dim):
    if dim is None:
        return
    dims = (dim, ) if isinstance(dim, int) else tuple(dim)
    for d in dims:
        if not -x.ndim <= d < max(x.ndim, 1):
            raise ShapeError(op, x.shape, message=f'dim={d} out of range')


def mean(x, dim=None, keepdim=False):
    _check_dim('mean', x, dim)
    if dim is None:
        return torch.mean(x)
    return torch.mean(x, dim=dim, keepdim=keepdim)


def sum(x, dim=None, keepdim=False):
    _check_dim('sum', x, dim)
    if dim is None:
        return torch.sum(x)
    return torch.sum(x, dim=dim, keepdim=keepdim)


def broadcast(x, shape):
    """Broadcasts `x` to `shape` (differentiable, gradients are summed back)"""
    try:
        return torch.broadcast_to(x, tuple(shape))
    except RuntimeError:
        raise ShapeError('broadcast', x.shape, tuple(shape)) from None


def concat(tensors, dim=0):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError('concat', message='nothing to concatenate')
    reference = tensors[0]
    for t in tensors[1:]:
        if t.ndim != reference.ndim:
            raise ShapeError('concat', reference.shape, t.shape, message='rank mismatch')
        for i, (s1, s2) in enumerate(zip(reference.shape, t.shape)):
            if i != dim % reference.ndim and s1 != s2:
                raise ShapeError('concat', reference.shape, t.shape,
                                 message=f'extents differ along dim {i}')
    return torch.cat(tensors, dim=dim)


def slice(x, dim, start=None, stop=None, step=None):
    """Basic slicing ``x[..., start:stop:step, ...]`` along `dim`"""
    _check_dim('slice', x, dim)
    index = [builtins.slice(None)] * x.ndim
    index[dim] = builtins.slice(start, stop, step)
    return x[tuple(index)]


def silu(x):
    return F.silu(x)


def gelu(x):
    return F.gelu(x)


def softmax(x, dim=-1):
    _check_dim('softmax', x, dim)
    return torch.softmax(x, dim=dim)


def layer_norm(x, gain=None, bias=None, dim=-1, eps=LAYER_NORM_EPS):
    """Layer normalisation along a single axis

    Parameters
    ----------
    x : torch.Tensor
    gain, bias : torch.Tensor of shape (x.shape[dim], ), optional
    dim : int, default is -1
        axis to normalise (e.g. the channel axis of a field)
    eps : float, default is 1e-5
        added to the (biased) variance inside the square root

    Returns
    -------
    torch.Tensor
        zero mean, unit variance along `dim`, then scaled by `gain` and shifted by `bias`
    """
    _check_dim('layer_norm', x, dim)
    n = x.shape[dim]
    for name, p in (('gain', gain), ('bias', bias)):
        if p is not None and tuple(p.shape) != (n, ):
            raise ShapeError('layer_norm', x.shape, p.shape,
                             message=f'{name} must have shape ({n},) to normalise dim={dim}')
    moved = torch.movedim(x, dim, -1)
    out = F.layer_norm(moved, (n, ), weight=gain, bias=bias, eps=eps)
    return torch.movedim(out, -1, dim)


def backward(loss):
    """Reverse pass from a scalar loss

    Gradients accumulate into ``.grad``: calling this twice without zeroing the
    gradients in between adds both contributions.
    """
    if not torch.is_tensor(loss) or loss.numel() != 1 or loss.ndim > 1:
        shape = tuple(loss.shape) if torch.is_tensor(loss) else ()
        raise ShapeError('backward', shape, message='loss must be a scalar')
    if not loss.requires_grad:
        raise ValueError('backward: the loss is not connected to any tensor requiring gradients.')
    loss.reshape(()).backward()

"""Checkpoint container

``CRPSRFT1`` magic, length-prefixed JSON header holding the architecture and
noise-branch configurations, then one named f64 blob per parameter and buffer.
"""

import logging
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, FormatError
from ..layers.modulation import NoiseBranchConfig
from ..utils.binary import pack_container, unpack_container, pack_blob, read_blob
from .backbone import BackboneConfig
from .bundle import ModelBundle

# License: BSD 3 clause

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'CRPSRFT1'


def bundle_header(bundle, provenance=None):
    header = {
        'backbone': bundle.config.to_dict(),
        'noise_branch': bundle.has_noise_branch,
        'noise': bundle.noise_branch.config.to_dict() if bundle.has_noise_branch else None,
        'parameters': list(bundle.state_dict().keys()),
    }
    if bundle.has_noise_branch:
        # resolved value, so that loading does not depend on the backbone default
        header['noise']['use_delta_gate'] = bundle.noise_branch.use_delta_gate
    if provenance:
        header['provenance'] = dict(provenance)
    return header


def checkpoint_bytes(bundle, provenance=None):
    payload = b''.join(pack_blob(name, tensor.detach().cpu().numpy())
                       for name, tensor in bundle.state_dict().items())
    return pack_container(CHECKPOINT_MAGIC, bundle_header(bundle, provenance), payload)


def save_bundle(bundle, path, provenance=None):
    """Writes `bundle` to `path`

    Parameters
    ----------
    bundle : ModelBundle
    path : str or Path
    provenance : dict, optional
        stored verbatim in the header (config hash, dataset hash, ...)
    """
    path = Path(path)
    path.write_bytes(checkpoint_bytes(bundle, provenance))
    logger.debug(f'Saved checkpoint to {path}.')
    return path


def load_bundle(path, return_header=False):
    """Reads a checkpoint written by :func:`save_bundle`

    Raises
    ------
    FormatError
        unknown magic, corrupt header, checksum mismatch, or parameters
        whose names or shapes do not match the declared architecture
    """
    path = Path(path)
    header, reader = unpack_container(path.read_bytes(), CHECKPOINT_MAGIC, source=str(path))
    try:
        backbone_config = BackboneConfig.from_dict(header['backbone'])
        noise_config = NoiseBranchConfig(**header['noise']) if header.get('noise_branch') else None
        bundle = ModelBundle(backbone_config, noise_config=noise_config)
    except (KeyError, TypeError, ConfigError) as err:
        raise FormatError(f'{path}: invalid architecture in the checkpoint header ({err}).') from None

    expected = bundle.state_dict()
    blobs = {}
    while reader.offset < len(reader.data):
        name, array = read_blob(reader)
        if name not in expected:
            raise FormatError(f'{path}: unexpected parameter {name} for the declared architecture.')
        if tuple(array.shape) != tuple(expected[name].shape):
            raise FormatError(f'{path}: parameter {name} has shape {tuple(array.shape)} '
                              f'but the architecture expects {tuple(expected[name].shape)}.')
        blobs[name] = torch.from_numpy(np.asarray(array, dtype=np.float64))
    missing = set(expected) - set(blobs)
    if missing:
        raise FormatError(f'{path}: missing parameters {sorted(missing)}.')
    bundle.load_state_dict(blobs)
    if return_header:
        return bundle, header
    return bundle

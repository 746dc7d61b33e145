import json

import pytest
import torch

import tensorly as tl
tl.set_backend('pytorch')
from tensorly import testing

from ..backbone import BackboneConfig
from ..bundle import attach_noise_branch, make_bundle
from ..checkpoint import save_bundle, load_bundle, checkpoint_bytes, bundle_header, CHECKPOINT_MAGIC
from ...layers.modulation import NoiseBranchConfig
from ...utils.binary import pack_container, pack_blob
from ...errors import FormatError

# License: BSD 3 clause


def _bundle(noise=False, **kwargs):
    config = BackboneConfig(history_len=2, channels=1, spatial_dims=[12], hidden_dim=6, n_blocks=2, **kwargs)
    bundle = make_bundle(config, stats=([0.1], [1.5]), seed=0)
    with torch.no_grad():
        bundle.backbone.head.weight.normal_(generator=torch.Generator().manual_seed(0))
    if noise:
        bundle = attach_noise_branch(bundle, NoiseBranchConfig(d_noise=4, init_scale=0.3), seed=0)
    return bundle


@pytest.mark.parametrize('noise', [False, True])
def test_round_trip(tmp_path, noise):
    bundle = _bundle(noise=noise, long_skips=noise)
    path = save_bundle(bundle, tmp_path/'model.ckpt', provenance={'config_hash': 'abc'})
    loaded, header = load_bundle(path, return_header=True)
    assert header['noise_branch'] == noise
    assert header['provenance'] == {'config_hash': 'abc'}
    assert loaded.config == bundle.config
    for (name, p), (_, q) in zip(bundle.state_dict().items(), loaded.state_dict().items()):
        assert torch.equal(p, q), name

    history = tl.tensor(tl.check_random_state(0).standard_normal((2, 1, 12)))
    testing.assert_array_equal(loaded.forward_deterministic(history), bundle.forward_deterministic(history))
    if noise:
        assert loaded.noise_branch.use_delta_gate
        testing.assert_array_equal(loaded.forward_ensemble(history, 3, seed=1),
                                   bundle.forward_ensemble(history, 3, seed=1))
    # byte-identical re-serialisation
    assert checkpoint_bytes(loaded, {'config_hash': 'abc'}) == path.read_bytes()


def test_rejects_bad_magic(tmp_path):
    data = bytearray(checkpoint_bytes(_bundle()))
    data[0:8] = b'CRPSRFT2'
    (tmp_path/'bad.ckpt').write_bytes(bytes(data))
    with pytest.raises(FormatError, match='magic'):
        load_bundle(tmp_path/'bad.ckpt')


def test_rejects_corruption(tmp_path):
    data = checkpoint_bytes(_bundle())
    path = tmp_path/'bad.ckpt'

    path.write_bytes(data[:-10])
    with pytest.raises(FormatError):
        load_bundle(path)

    corrupted = bytearray(data)
    corrupted[-5] ^= 0xFF
    path.write_bytes(bytes(corrupted))
    with pytest.raises(FormatError, match='checksum'):
        load_bundle(path)

    # opening brace of the JSON header
    corrupted = bytearray(data)
    corrupted[16] ^= 0xFF
    path.write_bytes(bytes(corrupted))
    with pytest.raises(FormatError):
        load_bundle(path)


def test_rejects_mismatched_shapes(tmp_path):
    bundle = _bundle()
    header = bundle_header(bundle)
    header['backbone']['hidden_dim'] = 5
    payload = b''.join(pack_blob(name, t.numpy()) for name, t in bundle.state_dict().items())
    path = tmp_path/'mismatch.ckpt'
    path.write_bytes(pack_container(CHECKPOINT_MAGIC, header, payload))
    with pytest.raises(FormatError, match='shape'):
        load_bundle(path)


def test_header_is_json():
    data = checkpoint_bytes(_bundle())
    length = int.from_bytes(data[8:16], 'little')
    header = json.loads(data[16:16 + length])
    assert header['backbone']['hidden_dim'] == 6
    assert 'payload_sha256' in header

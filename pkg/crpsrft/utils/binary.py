"""Little-endian binary containers

Both on-disk formats share the same framing::

    magic (8 bytes) | [version: u32] | header length: u64 | JSON header (utf-8) | payload

The JSON header records the SHA-256 of the payload under ``payload_sha256``.
"""

import hashlib
import json
import math
import struct

import numpy as np

from ..errors import FormatError

# License: BSD 3 clause

MAGIC_SIZE = 8


def canonical_json(obj):
    """JSON with sorted keys and compact separators, as bytes"""
    return json.dumps(obj, sort_keys=True, separators=(',', ':')).encode('utf-8')


def strict_json(obj):
    """Copy of `obj` with NaN and infinite floats replaced by None (null in standard JSON)"""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {key: strict_json(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [strict_json(value) for value in obj]
    return obj


def nan_for_null(obj):
    """Reads numeric data written with :func:`strict_json`: every None becomes NaN"""
    if obj is None:
        return math.nan
    if isinstance(obj, dict):
        return {key: nan_for_null(value) for key, value in obj.items()}
    if isinstance(obj, list):
        return [nan_for_null(value) for value in obj]
    return obj


def sha256_hex(data):
    return hashlib.sha256(data).hexdigest()


def pack_container(magic, header, payload, version=None):
    """Frames `payload` behind `magic` and a length-prefixed JSON header

    Parameters
    ----------
    magic : bytes
        exactly 8 bytes
    header : dict
        JSON-serialisable; the payload checksum is added to a copy of it
    payload : bytes
    version : int, optional
        if given, written as a u32 right after the magic

    Returns
    -------
    bytes
    """
    if len(magic) != MAGIC_SIZE:
        raise ValueError(f'Magic must be {MAGIC_SIZE} bytes long, but got {magic!r}.')
    header = dict(header, payload_sha256=sha256_hex(payload))
    header_bytes = canonical_json(header)
    chunks = [magic]
    if version is not None:
        chunks.append(struct.pack('<I', version))
    chunks += [struct.pack('<Q', len(header_bytes)), header_bytes, payload]
    return b''.join(chunks)


class Reader:
    """Bounds-checked cursor over a byte buffer"""
    def __init__(self, data, source='<buffer>'):
        self.data = memoryview(data)
        self.offset = 0
        self.source = source

    def take(self, n, what='data'):
        if n < 0 or self.offset + n > len(self.data):
            raise FormatError(f'{self.source}: truncated file while reading {what} '
                              f'(needed {n} bytes at offset {self.offset}, file has {len(self.data)}).')
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what='data'):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, shape, what='array'):
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        chunk = self.take(count*dtype.itemsize, what)
        return np.frombuffer(chunk, dtype=dtype, count=count).reshape(shape).copy()

    def rest(self):
        return self.take(len(self.data) - self.offset)


def unpack_container(data, magic, versions=None, source='<buffer>'):
    """Parses the framing written by :func:`pack_container`

    Returns
    -------
    header : dict
    payload : Reader
        cursor positioned at the start of the payload

    Raises
    ------
    FormatError
        on a magic, version, header or checksum mismatch, or truncated data
    """
    reader = Reader(data, source)
    found = bytes(reader.take(MAGIC_SIZE, 'magic'))
    if found != magic:
        raise FormatError(f'{source}: expected magic {magic!r} but found {found!r}.')
    version = None
    if versions is not None:
        version, = reader.unpack('<I', 'version')
        if version not in versions:
            raise FormatError(f'{source}: unsupported version {version}, expected one of {tuple(versions)}.')
    length, = reader.unpack('<Q', 'header length')
    try:
        header = json.loads(bytes(reader.take(length, 'header')).decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as err:
        raise FormatError(f'{source}: corrupt JSON header ({err}).') from None
    if not isinstance(header, dict):
        raise FormatError(f'{source}: the header must be a JSON object.')
    if version is not None:
        header.setdefault('version', version)

    start = reader.offset
    checksum = sha256_hex(bytes(reader.data[start:]))
    if header.get('payload_sha256') != checksum:
        raise FormatError(f'{source}: payload checksum mismatch (file is truncated or corrupt).')
    return header, reader


def pack_blob(name, array):
    """Named f64 array: name length (u32), name, rank (u32), extents (u64 each), payload"""
    name = name.encode('utf-8')
    array = np.asarray(array, dtype='<f8')
    chunks = [struct.pack('<I', len(name)), name, struct.pack('<I', array.ndim)]
    chunks += [struct.pack('<Q', int(s)) for s in array.shape]
    chunks.append(array.tobytes())
    return b''.join(chunks)


def read_blob(reader):
    """Reads one blob written by :func:`pack_blob`, returns (name, array)"""
    n, = reader.unpack('<I', 'blob name length')
    try:
        name = bytes(reader.take(n, 'blob name')).decode('utf-8')
    except UnicodeDecodeError:
        raise FormatError(f'{reader.source}: corrupt blob name at offset {reader.offset}.') from None
    rank, = reader.unpack('<I', f'rank of {name}')
    shape = reader.unpack(f'<{rank}Q', f'shape of {name}') if rank else ()
    return name, reader.array('<f8', tuple(shape), what=name)

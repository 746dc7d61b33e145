from .seeding import stream_seed, numpy_rng, torch_generator
from .parallel import parallel_map, n_threads, THREADS_ENV
from .binary import canonical_json, sha256_hex, pack_container, unpack_container

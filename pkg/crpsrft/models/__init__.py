from .backbone import Backbone, BackboneConfig, skip_pairs
from .bundle import ModelBundle, attach_noise_branch, make_bundle
from .checkpoint import save_bundle, load_bundle, checkpoint_bytes, CHECKPOINT_MAGIC

__version__ = '0.1.0'

from . import utils
from . import functional
from . import layers
from . import models
from . import dynamics
from . import training
from . import evaluation

from .errors import ConfigError, StabilityError, ShapeError, NumericalError, FormatError
from .functional import fair_crps, empirical_crps, vrmse, skill_spread_ssr
from .models import ModelBundle, BackboneConfig, make_bundle, attach_noise_branch, save_bundle, load_bundle
from .layers import NoiseBranchConfig
from .dynamics import SystemSpec, TrajectoryDataset, generate_dataset, read_dataset, write_dataset
from .training import TrainConfig, train_deterministic, retrofit_crps
from .evaluation import EvalConfig, rollout, evaluate_model, ensemble_scaling_sweep, paired_improvement

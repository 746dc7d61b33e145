from . import ops
from .crps import mae, mse, empirical_crps, fair_crps, pairwise_abs_sum, gaussian_crps_closed_form
from .metrics import vrmse, skill_spread_ssr
from .linear import channel_linear, spatial_mix, identity_stencil

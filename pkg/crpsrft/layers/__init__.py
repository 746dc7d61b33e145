from .blocks import ChannelLinear, SpatialMix, ChannelNorm, ResidualBlock, get_activation
from .modulation import (NoiseBranchConfig, NoiseBranch, NoiseEncoder, AdaLNHead,
                         NoiseEmbedding, ModulationParams, draw_noise, injected_blocks,
                         noise_branch_param_count)

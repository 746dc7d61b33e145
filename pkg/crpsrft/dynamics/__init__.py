from .systems import (SystemSpec, SYSTEMS, solve, integrate_lorenz96, lorenz96_tendency,
                      band_limited_field, default_horizon)
from .dataset import (TrajectoryDataset, generate_dataset, solve_heat2d, solve_burgers1d, solve_lorenz96,
                      write_dataset, read_dataset, split_assignment, channel_stats, SPLITS)

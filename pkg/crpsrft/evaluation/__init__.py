from .rollout import EnsembleForecast, rollout, NOISE_MODES
from .records import TrajectoryRecord, trajectory_metrics, frame_metrics, METRICS, FRAME_METRICS
from .bootstrap import MetricsReport, bootstrap_aggregate, paired_improvement, bootstrap_summary
from .harness import EvalConfig, evaluate_model, forecast_trajectory
from .scaling import ScalingTable, ensemble_scaling_sweep
from .report import (write_records_csv, write_improvement_csv, merge_runs, read_csv,
                     write_dat, write_lead_time_dat, write_scaling_dat)

from .schedules import lr_schedule, SCHEDULES
from .optim import global_grad_norm, clip_grad_norm, build_optimizer, build_scheduler
from .trainer import (TrainConfig, TrainLog, train_deterministic, retrofit_crps, member_forward_budget,
                      validation_loss, LOSSES)

from .costmodel import (FeatureTree, TemplateCostModel, TrainConfig,
                        TrainReport, featurize, load_checkpoint, q_error,
                        save_checkpoint, train)
from .residual import engine_operator_count, residual_time
from .transfer import IN_PROCESS, TransferModel, calibrate, transfer_time

__all__ = ["FeatureTree", "TemplateCostModel", "TrainConfig", "TrainReport",
           "featurize", "load_checkpoint", "q_error", "save_checkpoint",
           "train", "engine_operator_count", "residual_time", "IN_PROCESS",
           "TransferModel", "calibrate", "transfer_time"]

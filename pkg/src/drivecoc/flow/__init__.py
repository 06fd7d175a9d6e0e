from .expert import FlowMatchingExpert
from .matching import (
    ExactTargetField,
    SamplingError,
    ScheduleSpec,
    cfm_batch_loss,
    cfm_loss,
    euler_integrate,
    euler_sample,
    ot_path,
    sample_schedule,
)
from .network import Adam, VectorFieldNet, load_checkpoint, save_checkpoint, time_embedding

__all__ = [
    "FlowMatchingExpert",
    "ExactTargetField",
    "SamplingError",
    "ScheduleSpec",
    "cfm_batch_loss",
    "cfm_loss",
    "euler_integrate",
    "euler_sample",
    "ot_path",
    "sample_schedule",
    "Adam",
    "VectorFieldNet",
    "load_checkpoint",
    "save_checkpoint",
    "time_embedding",
]

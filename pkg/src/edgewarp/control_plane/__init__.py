from .af_server import AfClient, AfServer
from .core import HANDOVER_PATH, Amf, ControlPlaneError, NotEligible, Ran, Stage, UeRecord, UnknownIp, UnknownUe
from .scheduler import FifoQueue, Klass, QueueEmpty, SchedulerConfig, WeightedQueues
from .sim import (
    Comparison,
    ControlPlaneSim,
    CpConfig,
    InvalidConfig,
    LoadConfig,
    SimResult,
    generate_arrivals,
    run_handover,
    simulate,
)

__all__ = [
    "AfClient", "AfServer", "HANDOVER_PATH", "Amf", "ControlPlaneError", "NotEligible", "Ran", "Stage",
    "UeRecord", "UnknownIp", "UnknownUe", "FifoQueue", "Klass", "QueueEmpty", "SchedulerConfig",
    "WeightedQueues", "Comparison", "ControlPlaneSim", "CpConfig", "InvalidConfig", "LoadConfig",
    "SimResult", "generate_arrivals", "run_handover", "simulate",
]

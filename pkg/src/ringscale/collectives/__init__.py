"""Ring-allreduce / allgather collectives over in-process or TCP transports."""

from .launch import run_processes, run_threads, run_world
from .ops import REDUCE_OPS, allgather, allreduce, barrier
from .schedule import (ALLGATHER, REDUCE_SCATTER, RingSchedule, RingStep, build_ring_schedule,
                       chunk_boundaries, transmitted_elements)
from .transport import (IN_PROCESS, TCP, InProcessCommunicator, InProcessGroup, TcpCommunicator,
                        WorldConfig, connect, local_endpoints)

__all__ = [
    "ALLGATHER", "IN_PROCESS", "REDUCE_OPS", "REDUCE_SCATTER", "TCP",
    "InProcessCommunicator", "InProcessGroup", "RingSchedule", "RingStep", "TcpCommunicator",
    "WorldConfig", "allgather", "allreduce", "barrier", "build_ring_schedule", "chunk_boundaries",
    "connect", "local_endpoints", "run_processes", "run_threads", "run_world", "transmitted_elements",
]

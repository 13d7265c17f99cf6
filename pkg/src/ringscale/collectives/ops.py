"""Ring allreduce and ring allgather over a communicator."""

import numpy as np

from ..errors import ValidationError
from . import wire
from .schedule import REDUCE_SCATTER, build_ring_schedule

REDUCE_OPS = ("sum", "average", "max")

_PHASE_CODES = {REDUCE_SCATTER: wire.PHASE_REDUCE_SCATTER}


def _combine(op, incoming, local):
    # incoming first: chunk c accumulates in ring order starting at rank c
    if op == "max":
        return np.maximum(incoming, local)
    return incoming + local


def allreduce(comm, buffer, op="sum"):
    """Elementwise reduction of *buffer* across all ranks of *comm*.

    The reduction order is fixed by the ring, so results are bitwise
    identical on every rank and across repeated runs. Accumulation is fp64.
    """
    if op not in REDUCE_OPS:
        raise ValidationError(f"unknown reduce op {op!r}")
    buffer = np.asarray(buffer)
    x = np.array(buffer, dtype=np.float64).reshape(-1)
    n = comm.world_size
    schedule = build_ring_schedule(n, x.size)
    for st in schedule.steps(comm.rank):
        tag = wire.make_tag(_PHASE_CODES.get(st.phase, wire.PHASE_ALLGATHER), st.step_index)
        comm.send(st.send_to, tag, x[schedule.chunk_slice(st.send_chunk)])
        dst = schedule.chunk_slice(st.recv_chunk)
        incoming = comm.recv(st.recv_from, tag, count=schedule.chunk_size(st.recv_chunk))
        if st.phase == REDUCE_SCATTER:
            x[dst] = _combine(op, incoming, x[dst])
        else:
            x[dst] = incoming
    if op == "average":
        x /= n
    return x.reshape(buffer.shape)


def allgather(comm, buffer):
    """Every rank's buffer, ordered by rank; shapes may differ per rank.

    Shapes travel around the ring first, then the data, each in N-1 steps.
    """
    own = np.array(buffer, dtype=np.float64)
    n, rank = comm.world_size, comm.rank
    right, left = (rank + 1) % n, (rank - 1) % n
    shapes = [None] * n
    blocks = [None] * n
    shapes[rank] = own.shape
    blocks[rank] = own.reshape(-1)
    for s in range(n - 1):
        tag = wire.make_tag(wire.PHASE_GATHER_LENGTHS, s)
        send_idx, recv_idx = (rank - s) % n, (rank - s - 1) % n
        comm.send(right, tag, np.array((len(shapes[send_idx]),) + tuple(shapes[send_idx]), dtype=np.float64))
        header = comm.recv(left, tag)
        ndim = int(header[0])
        if header.size != ndim + 1:
            raise ValidationError(f"malformed shape message from rank {left}")
        shapes[recv_idx] = tuple(int(e) for e in header[1:])
    for s in range(n - 1):
        tag = wire.make_tag(wire.PHASE_GATHER_DATA, s)
        send_idx, recv_idx = (rank - s) % n, (rank - s - 1) % n
        comm.send(right, tag, blocks[send_idx])
        blocks[recv_idx] = comm.recv(left, tag, count=int(np.prod(shapes[recv_idx], dtype=np.int64)))
    return [b.reshape(shape) for b, shape in zip(blocks, shapes)]


def barrier(comm):
    allreduce(comm, np.zeros(1))

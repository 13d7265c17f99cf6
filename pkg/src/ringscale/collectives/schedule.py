"""Per-step chunk schedule of the ring allreduce."""

from dataclasses import dataclass

REDUCE_SCATTER = "reduce_scatter"
ALLGATHER = "allgather"


@dataclass(frozen=True)
class RingStep:
    phase: str
    step_index: int
    send_chunk: int
    recv_chunk: int
    send_to: int
    recv_from: int


def chunk_boundaries(world_size, buffer_len):
    """Offsets splitting *buffer_len* elements into *world_size* chunks.

    The first ``buffer_len % world_size`` chunks get one extra element.
    """
    base, extra = divmod(buffer_len, world_size)
    bounds = [0]
    for c in range(world_size):
        bounds.append(bounds[-1] + base + (1 if c < extra else 0))
    return tuple(bounds)


@dataclass(frozen=True)
class RingSchedule:
    world_size: int
    chunk_boundaries: tuple

    @property
    def num_steps(self):
        return 2 * (self.world_size - 1)

    def chunk_size(self, c):
        return self.chunk_boundaries[c + 1] - self.chunk_boundaries[c]

    def chunk_slice(self, c):
        return slice(self.chunk_boundaries[c], self.chunk_boundaries[c + 1])

    def steps(self, rank):
        """The 2(N-1) steps executed by *rank*, reduce-scatter first."""
        n = self.world_size
        right, left = (rank + 1) % n, (rank - 1) % n
        out = []
        for s in range(n - 1):
            out.append(RingStep(REDUCE_SCATTER, s, (rank - s) % n, (rank - s - 1) % n, right, left))
        for s in range(n - 1):
            out.append(RingStep(ALLGATHER, s, (rank + 1 - s) % n, (rank - s) % n, right, left))
        return out


def build_ring_schedule(world_size, buffer_len):
    if world_size < 1:
        raise ValueError("world_size must be >= 1")
    if buffer_len < 0:
        raise ValueError("buffer_len must be >= 0")
    return RingSchedule(world_size, chunk_boundaries(world_size, buffer_len))


def transmitted_elements(schedule, buffer_len=None):
    """Elements sent by each rank over the whole allreduce, indexed by rank."""
    if buffer_len is not None and buffer_len != schedule.chunk_boundaries[-1]:
        raise ValueError("buffer_len does not match the schedule")
    return [sum(schedule.chunk_size(st.send_chunk) for st in schedule.steps(r))
            for r in range(schedule.world_size)]

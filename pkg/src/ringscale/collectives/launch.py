"""Run one worker per rank, as threads (in-process or TCP) or as processes (TCP).

``fn(comm, *args)`` runs once per rank; results come back ordered by rank.
If any rank fails, the remaining ranks are unblocked (the in-process group
is aborted; TCP sockets are closed) and the lowest-ranked error is raised.
"""

import multiprocessing
import threading
import traceback

from ..errors import PeerUnreachable, ValidationError
from .transport import IN_PROCESS, TCP, TRANSPORT_ALIASES, InProcessGroup, TcpCommunicator, WorldConfig, local_endpoints


def _collect(results, errors):
    failed = sorted(errors)
    if failed:
        first = errors[failed[0]]
        # a peer's secondary PeerUnreachable is less informative than the root cause
        roots = [errors[r] for r in failed if not isinstance(errors[r], PeerUnreachable)]
        raise roots[0] if roots else first
    return results


def run_threads(world_size, fn, *args, transport=IN_PROCESS, step_timeout=None, endpoints=None):
    transport = TRANSPORT_ALIASES[transport]
    results = [None] * world_size
    errors = {}
    group = InProcessGroup(world_size, step_timeout) if transport == IN_PROCESS else None
    if transport == TCP and endpoints is None:
        endpoints = local_endpoints(world_size)

    def worker(rank):
        comm = None
        try:
            if group is not None:
                comm = group.communicator(rank)
            else:
                comm = TcpCommunicator(WorldConfig(world_size, rank, TCP, endpoints), step_timeout=step_timeout)
            results[rank] = fn(comm, *args)
        except BaseException as exc:  # noqa: BLE001 - reported to the driver
            errors[rank] = exc
            if group is not None:
                group.abort(rank, f"{type(exc).__name__}: {exc}")
        finally:
            if comm is not None:
                comm.close()

    threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}") for r in range(world_size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return _collect(results, errors)


def _process_main(rank, world_size, endpoints, step_timeout, fn, args, out):
    comm = None
    try:
        comm = TcpCommunicator(WorldConfig(world_size, rank, TCP, endpoints), step_timeout=step_timeout)
        out.put((rank, True, fn(comm, *args)))
    except BaseException as exc:  # noqa: BLE001
        try:
            out.put((rank, False, exc))
        except Exception:  # unpicklable exception
            out.put((rank, False, RuntimeError(traceback.format_exc())))
    finally:
        if comm is not None:
            comm.close()


def run_processes(world_size, fn, *args, step_timeout=None, endpoints=None):
    """One OS process per rank over TCP loopback; *fn* must be picklable."""
    ctx = multiprocessing.get_context("fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn")
    endpoints = endpoints or local_endpoints(world_size)
    out = ctx.Queue()
    procs = [ctx.Process(target=_process_main, args=(r, world_size, endpoints, step_timeout, fn, args, out))
             for r in range(world_size)]
    for p in procs:
        p.start()
    results = [None] * world_size
    errors = {}
    for _ in range(world_size):
        rank, ok, value = out.get()
        if ok:
            results[rank] = value
        else:
            errors[rank] = value
    for p in procs:
        p.join()
    return _collect(results, errors)


def run_world(world_size, fn, *args, transport=IN_PROCESS, processes=False, step_timeout=None):
    if processes:
        if TRANSPORT_ALIASES[transport] != TCP:
            raise ValidationError("process-per-rank mode needs the tcp transport")
        return run_processes(world_size, fn, *args, step_timeout=step_timeout)
    return run_threads(world_size, fn, *args, transport=transport, step_timeout=step_timeout)

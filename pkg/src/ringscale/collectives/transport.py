"""Point-to-point transports underneath the ring collectives.

Both transports expose the same two calls, ``send(dest, tag, values)`` and
``recv(src, tag, count=None)``. A communicator belongs to exactly one worker;
it is not safe to drive one communicator from several threads.
"""

from __future__ import annotations

import collections
import queue
import socket
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..errors import PeerUnreachable, ShapeMismatch, ValidationError
from . import wire

IN_PROCESS = "in_process"
TCP = "tcp"
TRANSPORT_ALIASES = {"in_process": IN_PROCESS, "inproc": IN_PROCESS, "tcp": TCP}


@dataclass(frozen=True)
class WorldConfig:
    world_size: int
    rank: int
    transport: str = IN_PROCESS
    endpoints: tuple[str, ...] = ()

    def __post_init__(self):
        if self.world_size < 1:
            raise ValidationError("world_size must be >= 1")
        if not 0 <= self.rank < self.world_size:
            raise ValidationError(f"rank {self.rank} outside [0, {self.world_size})")
        if self.world_size > 0xFFFF:
            raise ValidationError("world_size exceeds the 16-bit sender field")
        transport = TRANSPORT_ALIASES.get(self.transport)
        if transport is None:
            raise ValidationError(f"unknown transport {self.transport!r}")
        object.__setattr__(self, "transport", transport)
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        if transport == TCP and len(self.endpoints) != self.world_size:
            raise ValidationError("tcp transport needs exactly one endpoint per rank")

    @property
    def right(self):
        return (self.rank + 1) % self.world_size

    @property
    def left(self):
        return (self.rank - 1) % self.world_size


def _check_count(values, count, src):
    if count is not None and values.size != count:
        raise ShapeMismatch(f"expected {count} elements from rank {src}, got {values.size}")


class InProcessGroup:
    """Thread-safe mailbox shared by the ranks of one in-process world.

    Messages are queued per ``(from, to, tag)`` key in FIFO order, so tags may
    be reused by consecutive collectives.
    """

    def __init__(self, world_size, step_timeout=None):
        if world_size < 1:
            raise ValidationError("world_size must be >= 1")
        self.world_size = world_size
        self.step_timeout = step_timeout
        self._boxes = collections.defaultdict(collections.deque)
        self._cond = threading.Condition()
        self._aborted = None

    def communicator(self, rank):
        return InProcessCommunicator(self, WorldConfig(self.world_size, rank, IN_PROCESS))

    def abort(self, failed_rank, reason=""):
        """Wake every blocked receiver with PeerUnreachable(failed_rank)."""
        with self._cond:
            if self._aborted is None:
                self._aborted = (failed_rank, reason)
            self._cond.notify_all()

    def _put(self, key, values):
        with self._cond:
            self._boxes[key].append(values)
            self._cond.notify_all()

    def _get(self, key):
        deadline = None if self.step_timeout is None else time.monotonic() + self.step_timeout
        with self._cond:
            while True:
                box = self._boxes.get(key)
                if box:
                    return box.popleft()
                if self._aborted is not None:
                    raise PeerUnreachable(*self._aborted)
                if deadline is None:
                    self._cond.wait()
                else:
                    left = deadline - time.monotonic()
                    if left <= 0:
                        raise PeerUnreachable(key[0], "step deadline exceeded")
                    self._cond.wait(left)


class InProcessCommunicator:
    def __init__(self, group, world):
        self.group = group
        self.world = world

    @property
    def rank(self):
        return self.world.rank

    @property
    def world_size(self):
        return self.world.world_size

    def send(self, dest, tag, values):
        self.group._put((self.rank, dest, tag), np.array(values, dtype=np.float64).reshape(-1))

    def recv(self, src, tag, count=None):
        values = self.group._get((src, self.rank, tag))
        _check_count(values, count, src)
        return values

    def close(self):
        pass


def parse_endpoint(endpoint):
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValidationError(f"endpoint {endpoint!r} is not host:port")
    return host or "127.0.0.1", int(port)


def local_endpoints(n, host="127.0.0.1"):
    """Reserve *n* currently free loopback ports and return them as endpoints."""
    socks = []
    try:
        for _ in range(n):
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            s.bind((host, 0))
            socks.append(s)
        return tuple(f"{host}:{s.getsockname()[1]}" for s in socks)
    finally:
        for s in socks:
            s.close()


def _recv_exact(sock, nbytes):
    buf = bytearray(nbytes)
    view = memoryview(buf)
    got = 0
    while got < nbytes:
        n = sock.recv_into(view[got:], nbytes - got)
        if n == 0:
            raise ConnectionError("connection closed by peer")
        got += n
    return bytes(buf)


class TcpCommunicator:
    """Ring-topology TCP transport.

    Each rank listens on its own endpoint, connects to ``rank + 1`` and
    accepts from ``rank - 1``; connections are made once, at construction,
    with bounded retry. Sends go through a writer thread so that all ranks
    may send before any of them receives.
    """

    def __init__(self, world: WorldConfig, connect_attempts=20, retry_interval=0.1,
                 step_timeout=None, accept_timeout=30.0):
        if world.transport != TCP:
            raise ValidationError("TcpCommunicator needs a tcp WorldConfig")
        self.world = world
        self.step_timeout = step_timeout
        self._out = self._in = self._listener = None
        self._writer = None
        self._write_error = None
        if world.world_size == 1:
            return
        try:
            self._establish(connect_attempts, retry_interval, accept_timeout)
        except BaseException:
            self.close()
            raise
        self._queue = queue.Queue()
        self._writer = threading.Thread(target=self._write_loop, daemon=True,
                                        name=f"tcp-writer-{world.rank}")
        self._writer.start()

    @property
    def rank(self):
        return self.world.rank

    @property
    def world_size(self):
        return self.world.world_size

    def _establish(self, attempts, interval, accept_timeout):
        world = self.world
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind(parse_endpoint(world.endpoints[world.rank]))
        listener.listen(1)
        self._listener = listener

        right_addr = parse_endpoint(world.endpoints[world.right])
        for attempt in range(attempts):
            try:
                self._out = socket.create_connection(right_addr, timeout=max(interval, 1.0))
                break
            except OSError as exc:
                if attempt == attempts - 1:
                    raise PeerUnreachable(world.right, f"connect failed after {attempts} attempts: {exc}") from exc
                time.sleep(interval)
        self._out.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._out.settimeout(None)
        self._out.sendall(wire.encode(wire.make_tag(wire.PHASE_HELLO, 0), world.rank, ()))

        listener.settimeout(accept_timeout)
        try:
            conn, _ = listener.accept()
        except OSError as exc:
            raise PeerUnreachable(world.left, f"no connection from left neighbour: {exc}") from exc
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn.settimeout(accept_timeout)
        self._in = conn
        try:
            _, tag, sender, count = wire.decode_header(_recv_exact(conn, wire.HEADER_SIZE))
        except (OSError, ConnectionError) as exc:
            raise PeerUnreachable(world.left, f"handshake failed: {exc}") from exc
        if wire.split_tag(tag)[0] != wire.PHASE_HELLO or sender != world.left or count:
            raise PeerUnreachable(world.left, f"unexpected handshake from rank {sender}")
        conn.settimeout(self.step_timeout)
        listener.close()
        self._listener = None

    def _write_loop(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            try:
                self._out.sendall(item)
            except OSError as exc:
                self._write_error = exc
                return

    def send(self, dest, tag, values):
        if dest != self.world.right:
            raise ValidationError(f"rank {self.rank} can only send to its right neighbour {self.world.right}")
        if self._write_error is not None:
            raise PeerUnreachable(dest, str(self._write_error))
        self._queue.put(wire.encode(tag, self.rank, values))

    def recv(self, src, tag, count=None):
        if src != self.world.left:
            raise ValidationError(f"rank {self.rank} can only receive from its left neighbour {self.world.left}")
        try:
            nbytes, got_tag, sender, n = wire.decode_header(_recv_exact(self._in, wire.HEADER_SIZE))
            payload = _recv_exact(self._in, nbytes)
        except socket.timeout as exc:
            raise PeerUnreachable(src, "step deadline exceeded") from exc
        except (OSError, ConnectionError) as exc:
            raise PeerUnreachable(src, str(exc)) from exc
        if sender != src:
            raise PeerUnreachable(src, f"message from unexpected rank {sender}")
        if got_tag != tag:
            raise ShapeMismatch(f"expected tag {tag:#06x} from rank {src}, got {got_tag:#06x}")
        values = wire.decode_payload(payload)
        _check_count(values, count, src)
        return values

    def close(self):
        if self._writer is not None:
            self._queue.put(None)
            self._writer.join(timeout=5)
            self._writer = None
        for sock in (self._out, self._in, self._listener):
            if sock is not None:
                try:
                    sock.close()
                except OSError:
                    pass
        self._out = self._in = self._listener = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(world: WorldConfig, group: InProcessGroup | None = None, **kwargs):
    """Build the communicator for *world*; in-process worlds need their group."""
    if world.transport == IN_PROCESS:
        if group is None or group.world_size != world.world_size:
            raise ValidationError("in-process worlds need the shared InProcessGroup")
        return group.communicator(world.rank)
    return TcpCommunicator(world, **kwargs)

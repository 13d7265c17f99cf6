"""TCP wire format.

Every message is a 12-byte big-endian header followed by the payload::

    uint32  payload length in bytes
    uint16  phase/step tag
    uint16  sender rank
    uint32  element count

The payload is ``count`` consecutive little-endian fp64 values.
"""

import struct

import numpy as np

from ..errors import ShapeMismatch

HEADER = struct.Struct(">IHHI")
HEADER_SIZE = HEADER.size
PAYLOAD_DTYPE = np.dtype("<f8")

# Tag layout: high 4 bits phase, low 12 bits step.
PHASE_REDUCE_SCATTER = 0
PHASE_ALLGATHER = 1
PHASE_GATHER_LENGTHS = 2
PHASE_GATHER_DATA = 3
PHASE_HELLO = 15
MAX_STEP = 0x0FFF


def make_tag(phase, step):
    if not 0 <= step <= MAX_STEP:
        raise ValueError(f"step {step} does not fit in the 12-bit tag field")
    return (phase << 12) | step


def split_tag(tag):
    return tag >> 12, tag & MAX_STEP


def encode(tag, sender, values):
    payload = np.ascontiguousarray(values, dtype=PAYLOAD_DTYPE).tobytes()
    return HEADER.pack(len(payload), tag, sender, len(payload) // 8) + payload


def decode_header(header):
    nbytes, tag, sender, count = HEADER.unpack(header)
    if nbytes != count * 8:
        raise ShapeMismatch(f"header length {nbytes} bytes does not match {count} fp64 elements")
    return nbytes, tag, sender, count


def decode_payload(payload):
    return np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float64)

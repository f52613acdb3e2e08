"""Reference child process for the external extractor protocol.

Features are the 8x8 average-pooled channels with no further mapping, so the
VJP is the pooling adjoint.  Run with ``python -m faceobf.refchild``.
"""
import struct
import sys

import numpy as np

from .extractor import (HANDSHAKE, OP_ERROR, OP_FORWARD, OP_VJP, pool_adjoint,
                        pool_features, read_exact)
from .errors import ProtocolError

POOL = 8
DIM = 3 * POOL * POOL


def features(img: np.ndarray) -> np.ndarray:
    return pool_features(img, POOL)


def features_vjp(img: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return pool_adjoint(img.shape, upstream, POOL)


def _read_image(stdin) -> np.ndarray:
    h, w = struct.unpack("<II", read_exact(stdin, 8))
    raw = read_exact(stdin, 12 * h * w)
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(3, h, w)


def serve(stdin, stdout) -> int:
    if stdin.readline() != HANDSHAKE:
        stdout.write(b"ERR\n")
        stdout.flush()
        return 1
    stdout.write(b"OK %d\n" % DIM)
    stdout.flush()
    while True:
        op = stdin.read(1)
        if not op:
            return 0
        try:
            if op[0] == OP_FORWARD:
                img = _read_image(stdin)
                reply = features(img).astype("<f4").tobytes()
            elif op[0] == OP_VJP:
                img = _read_image(stdin)
                up = np.frombuffer(read_exact(stdin, 4 * DIM), dtype="<f4").astype(np.float64)
                reply = features_vjp(img, up).astype("<f4").tobytes()
            else:
                reply = bytes([OP_ERROR])
        except ProtocolError:
            return 1
        stdout.write(reply)
        stdout.flush()


def main() -> int:
    return serve(sys.stdin.buffer, sys.stdout.buffer)


if __name__ == "__main__":
    sys.exit(main())

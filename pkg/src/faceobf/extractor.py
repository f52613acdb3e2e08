"""Feature extractors: a built-in differentiable embedder and a client for
extractors living in a child process.

Wire protocol (child stdin/stdout, little-endian, u32 integers, f32 reals)::

    parent -> "FORBES-EXT 1\\n"          child -> "OK <d>\\n"
    0x01 H W <3*H*W reals>               child -> <d reals>
    0x02 H W <3*H*W reals> <d reals>     child -> <3*H*W reals>
    any other opcode                     child -> 0xFF
"""
from __future__ import annotations

import logging
import shlex
import struct
import subprocess
import sys

import numpy as np

from .errors import ConfigError, DimensionError, ProtocolError
from .image import check_image, make_grid
from .rng import SplitMix64

log = logging.getLogger(__name__)

HANDSHAKE = b"FORBES-EXT 1\n"
OP_FORWARD = 0x01
OP_VJP = 0x02
OP_ERROR = 0xFF
EMBEDDER_SEED = 0x464F52424553


class Extractor:
    """Interface every extractor implements."""

    name = "extractor"
    dim = 0
    supports_vjp = False

    def extract(self, img: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, img: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} does not provide a VJP")

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def pool_features(img: np.ndarray, pool: int) -> np.ndarray:
    """Average-pool each channel to ``pool x pool`` and flatten channel-major."""
    grid = make_grid(img.shape[1], img.shape[2], pool, pool)
    return grid.block_average(img).ravel()


def pool_adjoint(shape: tuple[int, int, int], g: np.ndarray, pool: int) -> np.ndarray:
    grid = make_grid(shape[1], shape[2], pool, pool)
    g = np.asarray(g, dtype=np.float64).reshape(3, pool, pool)
    return grid.expand(g / grid.areas)


class BuiltinEmbedder(Extractor):
    """tanh(A @ pool8x8(img)) with a fixed pseudo-random 64 x 192 matrix."""

    supports_vjp = True

    def __init__(self, pool: int = 8, dim: int = 64, seed: int = EMBEDDER_SEED):
        self.name = "builtin"
        self.pool = pool
        self.dim = dim
        n_in = 3 * pool * pool
        scale = 1.0 / np.sqrt(n_in)
        u = SplitMix64(seed).uniform01(dim * n_in).reshape(dim, n_in)
        self.matrix = u * (2.0 * scale) - scale

    def _check(self, img):
        img = check_image(img)
        if img.shape[1] < self.pool or img.shape[2] < self.pool:
            raise DimensionError(f"builtin embedder needs at least {self.pool}x{self.pool} pixels")
        return img

    def extract(self, img):
        img = self._check(img)
        return np.tanh(self.matrix @ pool_features(img, self.pool))

    def vjp(self, img, upstream):
        img = self._check(img)
        feat = np.tanh(self.matrix @ pool_features(img, self.pool))
        g = self.matrix.T @ (np.asarray(upstream, dtype=np.float64) * (1.0 - feat * feat))
        return pool_adjoint(img.shape, g, self.pool)


# -- external process ------------------------------------------------------

def pack_image(img: np.ndarray) -> bytes:
    _, h, w = img.shape
    return struct.pack("<II", h, w) + np.ascontiguousarray(img, dtype="<f4").tobytes()


def read_exact(stream, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            raise ProtocolError(f"stream closed after {got} of {n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class ExternalExtractor(Extractor):
    """Extractor served by a child process speaking the wire protocol."""

    supports_vjp = True

    def __init__(self, command, name: str | None = None):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.name = name or "external:" + " ".join(self.command)
        try:
            self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                         stdout=subprocess.PIPE)
        except OSError as exc:
            raise ProtocolError(f"cannot start extractor {self.command}: {exc}") from exc
        self.dim = self._handshake()

    def _handshake(self) -> int:
        self._send(HANDSHAKE)
        line = self.proc.stdout.readline()
        parts = line.decode("ascii", "replace").split()
        if len(parts) != 2 or parts[0] != "OK" or not parts[1].isdigit() or int(parts[1]) == 0:
            self.close()
            raise ProtocolError(f"bad handshake reply {line!r}")
        return int(parts[1])

    def _send(self, payload: bytes) -> None:
        try:
            self.proc.stdin.write(payload)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"extractor pipe closed: {exc}") from exc

    def _reals(self, count: int) -> np.ndarray:
        raw = read_exact(self.proc.stdout, 4 * count)
        vals = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(vals)):
            raise ProtocolError("extractor returned non-finite values")
        return vals

    def request(self, opcode: int, payload: bytes = b"") -> None:
        """Send a raw request.  Exposed for protocol testing."""
        self._send(bytes([opcode]) + payload)
        if opcode not in (OP_FORWARD, OP_VJP):
            reply = read_exact(self.proc.stdout, 1)
            if reply[0] == OP_ERROR:
                raise ProtocolError(f"extractor rejected opcode 0x{opcode:02x}")
            raise ProtocolError(f"unexpected reply 0x{reply[0]:02x} to opcode 0x{opcode:02x}")

    def extract(self, img):
        img = check_image(img)
        self.request(OP_FORWARD, pack_image(img))
        return self._reals(self.dim)

    def vjp(self, img, upstream):
        img = check_image(img)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self.dim,):
            raise DimensionError(f"upstream must have shape ({self.dim},)")
        self.request(OP_VJP, pack_image(img) + upstream.astype("<f4").tobytes())
        return self._reals(img.size).reshape(img.shape)

    def close(self):
        proc = getattr(self, "proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            log.warning("extractor %s did not exit; killing", self.name)
            proc.kill()
            proc.wait()
        proc.stdout.close()


def reference_command() -> list[str]:
    return [sys.executable, "-m", "faceobf.refchild"]


def open_extractor(spec: str) -> Extractor:
    """Build an extractor from a CLI spec: ``builtin``, ``reference`` or
    ``external:<command line>``."""
    if spec == "builtin":
        return BuiltinEmbedder()
    if spec == "reference":
        return ExternalExtractor(reference_command(), name="reference")
    if spec.startswith("external:"):
        cmd = spec[len("external:"):].strip()
        if not cmd:
            raise ConfigError("external extractor needs a command")
        return ExternalExtractor(cmd)
    raise ConfigError(f"unknown extractor {spec!r}")

"""Primary-side client for an external model server speaking the framed
tensor protocol.

Frames are length-prefixed: a 4-byte little-endian total length, then a
one-line JSON header (terminated by a newline), then raw little-endian f32
tensor bytes whose count follows from the header's shape. Prediction
requests carry the conditioning image concatenated with the latent, i.e. a
(C_pixel + C_latent, h, w) tensor, mirroring the model input contract.
"""

from __future__ import annotations

import json
import socket

import numpy as np

from .core import ImageTensor, LatentTensor, ResidualTensor
from .denoiser import NoisePredictor
from .errors import InvalidArgumentError, NumericFailureError

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 1024 * 1024
DEFAULT_TIMEOUT = 60.0


def send_frame(sock, header: dict, tensor: np.ndarray | None = None) -> None:
    body = (json.dumps(header, separators=(",", ":")) + "\n").encode()
    if tensor is not None:
        body += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    sock.sendall(len(body).to_bytes(4, "little") + body)


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise NumericFailureError("bridge connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock) -> tuple[dict, np.ndarray | None]:
    length = int.from_bytes(_recv_exact(sock, 4), "little")
    if length > MAX_FRAME_BYTES:
        raise NumericFailureError(f"oversized frame ({length} bytes)")
    body = _recv_exact(sock, length)
    newline = body.index(b"\n")
    header = json.loads(body[:newline].decode())
    payload = body[newline + 1:]
    if not payload:
        return header, None
    shape = tuple(header.get("shape", ()))
    tensor = np.frombuffer(payload, dtype="<f4")
    if shape and tensor.size != int(np.prod(shape)):
        raise NumericFailureError("frame payload does not match its declared shape")
    return header, tensor.reshape(shape).astype(np.float64) if shape else tensor


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise InvalidArgumentError(f"bridge address must be host:port, got {address!r}")
    return host, int(port)


class _BridgeConnection:
    """One TCP connection with handshake state; requests are serialized."""

    def __init__(self, address: str, timeout: float = DEFAULT_TIMEOUT):
        host, port = parse_address(address)
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise NumericFailureError(f"cannot reach bridge at {address}: {exc}") from exc
        self.hello = self.request({"op": "hello", "protocol_version": PROTOCOL_VERSION})[0]
        if self.hello.get("op") == "error":
            raise InvalidArgumentError(f"bridge refused handshake: {self.hello.get('message')}")
        if self.hello.get("protocol_version") != PROTOCOL_VERSION:
            raise InvalidArgumentError(
                f"bridge speaks protocol {self.hello.get('protocol_version')}, "
                f"expected {PROTOCOL_VERSION}")

    def request(self, header: dict, tensor: np.ndarray | None = None):
        try:
            send_frame(self.sock, header, tensor)
            reply, payload = recv_frame(self.sock)
        except (OSError, ValueError) as exc:
            raise NumericFailureError(f"bridge request failed: {exc}") from exc
        if reply.get("op") == "error" and header.get("op") != "hello":
            raise NumericFailureError(f"bridge error: {reply.get('message')}")
        return reply, payload

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class BridgePredictor(NoisePredictor):
    """NoisePredictor forwarding predict calls over the wire."""

    def __init__(self, address: str, latent_shape, cond_shape,
                 expected_c_latent: int | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.conn = _BridgeConnection(address, timeout)
        hello = self.conn.hello
        c_latent = int(hello.get("c_latent", -1))
        if expected_c_latent is not None and c_latent != expected_c_latent:
            raise InvalidArgumentError(
                f"bridge advertises C_latent={c_latent}, expected {expected_c_latent}")
        if latent_shape[0] != c_latent:
            raise InvalidArgumentError(
                f"latent shape {latent_shape} incompatible with bridge C_latent={c_latent}")
        self.latent_shape = tuple(latent_shape)
        self.cond_shape = tuple(cond_shape)
        self.share_safe = False
        self.alpha_bar = (np.asarray(hello["alpha_bar"], dtype=np.float64)
                          if "alpha_bar" in hello else None)

    def predict(self, z_t: LatentTensor, t: int, cond: ImageTensor | None) -> LatentTensor:
        self._validate(z_t, cond)
        concat = np.concatenate([cond.data, z_t.data], axis=0)
        header = {"op": "predict", "dtype": "f32", "shape": list(concat.shape),
                  "timestep": int(t)}
        reply, tensor = self.conn.request(header, concat)
        if tensor is None or tuple(tensor.shape) != self.latent_shape:
            raise NumericFailureError("bridge returned a malformed prediction")
        return LatentTensor(tensor)

    def close(self):
        self.conn.close()


class BridgeCodec:
    """LatentCodec forwarding encode/decode over the wire."""

    c_pixel = 3

    def __init__(self, address: str, timeout: float = DEFAULT_TIMEOUT):
        self.conn = _BridgeConnection(address, timeout)
        hello = self.conn.hello
        self.c_latent = int(hello.get("c_latent", -1))
        self.f_vae = int(hello.get("f_vae", -1))
        if self.c_latent < 1 or self.f_vae < 1:
            raise InvalidArgumentError("bridge handshake missing c_latent/f_vae")

    def encode(self, img) -> LatentTensor:
        data = np.asarray(getattr(img, "data", img), dtype=np.float64)
        header = {"op": "encode", "dtype": "f32", "shape": list(data.shape)}
        _, tensor = self.conn.request(header, data)
        if tensor is None:
            raise NumericFailureError("bridge returned no latent")
        return LatentTensor(tensor)

    def decode(self, z: LatentTensor) -> ResidualTensor:
        header = {"op": "decode", "dtype": "f32", "shape": list(z.data.shape)}
        _, tensor = self.conn.request(header, z.data)
        if tensor is None:
            raise NumericFailureError("bridge returned no image")
        return ResidualTensor(tensor)

    def close(self):
        self.conn.close()

"""Client side of the out-of-process denoiser wire protocol.

A remote denoiser speaks length-prefixed frames over stdio or TCP:

    [ msg_type: u8 ][ json_len: u32 LE ][ payload_len: u64 LE ]
    [ json body: json_len bytes ][ payload: payload_len bytes ]

Message types: HELLO=1, DENOISE_REQ=2, DENOISE_RESP=3, ERROR=4, BYE=5.
Tensor payloads are raw little-endian float32 in C order; for tensor
messages ``payload_len`` must equal ``prod(shape) * 4``.  The JSON body of
a tensor message carries shape, dtype ("f32le"), timestep, conditioning
text, clip id and path tag.

The client keeps exactly one request in flight.  Endpoints:

    stdio:<command line>   spawn the command, frames over stdin/stdout
    tcp:<host>:<port>      connect a socket
"""

from __future__ import annotations

import json
import shlex
import socket
import struct
import subprocess

import numpy as np

from .denoisers import Denoiser, DenoiserCapabilities, DenoiseRequest
from .exceptions import BridgeError
from .latent import DenoisePrediction, LatentVideo

PROTOCOL_VERSION = 1

MSG_HELLO = 1
MSG_DENOISE_REQ = 2
MSG_DENOISE_RESP = 3
MSG_ERROR = 4
MSG_BYE = 5

_HEADER = struct.Struct("<BIQ")


def encode_frame(msg_type: int, body: dict, payload: bytes = b"") -> bytes:
    body_bytes = json.dumps(body, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(msg_type, len(body_bytes), len(payload)) + body_bytes + payload


def _read_exact(read, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = read(remaining)
        if not chunk:
            raise BridgeError(
                f"connection closed mid-frame ({n - remaining}/{n} bytes read)"
            )
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(read) -> tuple[int, dict, bytes]:
    head = _read_exact(read, _HEADER.size)
    msg_type, json_len, payload_len = _HEADER.unpack(head)
    body_bytes = _read_exact(read, json_len) if json_len else b"{}"
    try:
        body = json.loads(body_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BridgeError(f"malformed frame body: {e}") from e
    payload = _read_exact(read, payload_len) if payload_len else b""
    return msg_type, body, payload


class _StdioTransport:
    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )

    def send(self, data: bytes):
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def read(self, n: int) -> bytes:
        return self.proc.stdout.read(n)

    def close(self):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.wait(timeout=10)


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def send(self, data: bytes):
        self.sock.sendall(data)

    def read(self, n: int) -> bytes:
        try:
            return self.sock.recv(n)
        except socket.timeout as e:
            raise BridgeError("timed out waiting for remote denoiser") from e

    def close(self):
        self.sock.close()


def _open_transport(endpoint: str, timeout: float):
    if endpoint.startswith("stdio:"):
        return _StdioTransport(endpoint[len("stdio:"):])
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise BridgeError(f"bad tcp endpoint {endpoint!r}; want tcp:host:port")
        return _TcpTransport(host, int(port), timeout)
    raise BridgeError(f"unknown endpoint scheme in {endpoint!r}")


class BridgeDenoiser(Denoiser):
    """Denoiser contract implemented by a remote process.

    Construction performs the HELLO exchange; version disagreement or a
    remote ERROR refuses the connection.  Requests are strictly
    serialized, so the denoiser is not concurrent-safe regardless of the
    remote model.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.transport = _open_transport(endpoint, timeout)
        self.remote = self._handshake()
        self.capabilities = DenoiserCapabilities(
            concurrent_safe=False,
            deterministic=bool(self.remote.get("deterministic", False)),
        )
        self._closed = False

    def _handshake(self) -> dict:
        self.transport.send(
            encode_frame(MSG_HELLO, {"version": PROTOCOL_VERSION})
        )
        msg_type, body, _ = read_frame(self.transport.read)
        if msg_type == MSG_ERROR:
            raise BridgeError(
                f"remote refused handshake: {body.get('code')}: "
                f"{body.get('message')}"
            )
        if msg_type != MSG_HELLO:
            raise BridgeError(f"expected HELLO, got message type {msg_type}")
        if body.get("version") != PROTOCOL_VERSION:
            raise BridgeError(
                f"protocol version mismatch: local {PROTOCOL_VERSION}, "
                f"remote {body.get('version')}"
            )
        return body

    def denoise(self, req: DenoiseRequest) -> DenoisePrediction:
        if self._closed:
            raise BridgeError("bridge already closed")
        shape = list(req.clip.shape)
        payload = np.ascontiguousarray(req.clip.data, dtype="<f4").tobytes()
        body = {
            "shape": shape,
            "dtype": "f32le",
            "timestep": req.t,
            "conditioning": req.conditioning,
            "clip_id": req.clip_id,
            "path": req.path,
        }
        self.transport.send(encode_frame(MSG_DENOISE_REQ, body, payload))
        msg_type, resp, data = read_frame(self.transport.read)
        if msg_type == MSG_ERROR:
            detail = resp.get("traceback") or resp.get("message")
            raise BridgeError(
                f"remote denoiser error at t={req.t}, clip={req.clip_id}: "
                f"{resp.get('code')}: {detail}"
            )
        if msg_type != MSG_DENOISE_RESP:
            raise BridgeError(f"expected DENOISE_RESP, got message type {msg_type}")
        if resp.get("dtype") != "f32le":
            raise BridgeError(f"remote returned dtype {resp.get('dtype')!r}")
        if list(resp.get("shape", [])) != shape:
            raise BridgeError(
                f"remote returned shape {resp.get('shape')}, expected {shape}"
            )
        if len(data) != int(np.prod(shape)) * 4:
            raise BridgeError(
                f"payload length {len(data)} does not match shape {shape}"
            )
        eps = np.frombuffer(data, dtype="<f4").reshape(shape)
        return DenoisePrediction(LatentVideo(eps.copy()), req.t)

    def close(self):
        if getattr(self, "_closed", True):
            return
        self._closed = True
        try:
            self.transport.send(encode_frame(MSG_BYE, {}))
        except (BridgeError, OSError):
            pass
        self.transport.close()

"""Binary tensor files and the out-of-process backend protocol.

Tensor file (little-endian)::

    u32 rank | u32 dims[rank] | f32 data[prod(dims)]   (C order)

Request file::

    u32 header_len | header JSON (UTF-8, {"op": ..., "id": ...}) | tensor

The backend command is invoked as ``<argv...> REQUEST_PATH RESPONSE_PATH`` and
must write a tensor file to RESPONSE_PATH. Ops: ``encode`` (image H x W x 3
-> latent), ``generate`` (latent -> image H x W x 3), ``features`` (image ->
feature vector).
"""
import hashlib
import json
import os
import shlex
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from .._io import atomic_write_bytes
from ..errors import BackendError
from ..imaging import FaceImage, as_pixels

OPS = ("encode", "generate", "features")


def encode_tensor(array) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    head = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def decode_tensor(data: bytes, offset=0):
    """Parse a tensor at ``offset``; returns ``(array, end_offset)``."""
    try:
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
    except struct.error as exc:
        raise BackendError(f"truncated tensor header ({exc})") from exc
    count = int(np.prod(dims)) if rank else 1
    end = offset + 4 * count
    if end > len(data):
        raise BackendError(f"tensor data truncated: need {end} bytes, have {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(dims)
    return arr.astype(np.float64), end


def write_tensor(path, array):
    return atomic_write_bytes(path, encode_tensor(array))


def read_tensor(path):
    data = Path(path).read_bytes()
    arr, end = decode_tensor(data)
    if end != len(data):
        raise BackendError(f"{path}: {len(data) - end} trailing bytes after tensor")
    return arr


def encode_request(op, request_id, array) -> bytes:
    if op not in OPS:
        raise BackendError(f"unknown op {op!r}")
    header = json.dumps({"op": op, "id": str(request_id)}, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(header)) + header + encode_tensor(array)


def decode_request(data: bytes):
    """Returns ``(header dict, array)``."""
    try:
        (n,) = struct.unpack_from("<I", data, 0)
        header = json.loads(data[4:4 + n].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BackendError(f"malformed request header ({exc})") from exc
    if not isinstance(header, dict) or set(header) != {"op", "id"} or header["op"] not in OPS:
        raise BackendError(f"invalid request header {header!r}")
    arr, end = decode_tensor(data, 4 + n)
    if end != len(data):
        raise BackendError("trailing bytes after request tensor")
    return header, arr


class ExternalBackend:
    """Generator, encoder and perceptual backend served by an external command.

    Has no differentiation capability, so latent fitting through it falls
    back to finite differences.
    """

    def __init__(self, argv, size, latent_dim, timeout=600.0):
        if isinstance(argv, str):
            argv = shlex.split(argv)
        if not argv:
            raise BackendError("empty backend command")
        self.argv = list(argv)
        self.output_size = (int(size), int(size))
        self.input_size = self.output_size
        self.latent_dim = int(latent_dim)
        self.timeout = timeout
        self._counter = 0

    def _call(self, op, array):
        self._counter += 1
        with tempfile.TemporaryDirectory(prefix="morphforge-backend-") as tmp:
            req = Path(tmp) / "request.bin"
            resp = Path(tmp) / "response.bin"
            req.write_bytes(encode_request(op, f"{op}-{self._counter}", array))
            try:
                proc = subprocess.run(self.argv + [str(req), str(resp)], capture_output=True,
                                      timeout=self.timeout, check=False)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise BackendError(f"backend command failed to run: {exc}") from exc
            if proc.returncode != 0:
                raise BackendError(f"backend exited with {proc.returncode}: {proc.stderr.decode(errors='replace')[-500:]}")
            if not resp.exists():
                raise BackendError("backend wrote no response")
            return read_tensor(resp)

    def encode(self, image):
        z = self._call("encode", as_pixels(image)).ravel()
        if z.shape != (self.latent_dim,):
            raise BackendError(f"backend returned latent of shape {z.shape}, expected ({self.latent_dim},)")
        return z

    def generate_array(self, z):
        out = self._call("generate", np.asarray(z, dtype=np.float64).ravel())
        w, h = self.output_size
        if out.shape != (h, w, 3):
            raise BackendError(f"backend returned image of shape {out.shape}, expected {(h, w, 3)}")
        return out

    def generate(self, z) -> FaceImage:
        return FaceImage.from_array(self.generate_array(z))

    def features(self, image):
        return self._call("features", as_pixels(image)).ravel()

    def digest(self) -> str:
        return hashlib.sha256(("\0".join(self.argv)).encode()).hexdigest()


def handle_request(request_path, response_path, backends):
    """Serve one request with in-process backends (reference server side)."""
    header, arr = decode_request(Path(request_path).read_bytes())
    op = header["op"]
    if op == "encode":
        out = backends.encoder.encode(arr)
    elif op == "generate":
        out = backends.generator.generate_array(arr)
    else:
        out = backends.perceptual.features(arr)
    write_tensor(response_path, out)


def main(argv=None):
    """``python -m morphforge.regen.tensorio REQUEST RESPONSE`` serves the toy backends.

    ``MORPHFORGE_TOY_SIZE`` / ``MORPHFORGE_TOY_LATENT`` select the toy configuration.
    """
    from .backends import toy_backends

    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print("usage: python -m morphforge.regen.tensorio REQUEST RESPONSE", file=sys.stderr)
        return 1
    size = int(os.environ.get("MORPHFORGE_TOY_SIZE", "64"))
    latent = int(os.environ.get("MORPHFORGE_TOY_LATENT", "512"))
    try:
        handle_request(args[0], args[1], toy_backends(size=size, latent_dim=latent))
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

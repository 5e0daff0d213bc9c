"""Container format shared by recordings, epoch sets and model checkpoints.

A file is a single UTF-8 JSON header line (no embedded newlines) terminated
by ``\\n``, followed by the raw payload as little-endian float64 values.
The header always carries ``version`` and ``kind``; everything else is up to
the caller. Writers emit the header with sorted keys so identical inputs
produce byte-identical files.
"""

import json

import numpy as np

from .errors import MalformedHeaderError, TruncatedPayloadError, VersionMismatchError

_HEADER_LIMIT = 16 * 1024 * 1024  # refuse absurd headers instead of reading forever


def write_container(path, header: dict, payload: np.ndarray) -> None:
    """Write a header dict plus a flat float64 payload to ``path``."""
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    data = np.ascontiguousarray(payload, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        fh.write(data.tobytes())


def read_container(path, kind: str, version: int):
    """Read a container file, validating ``kind`` and ``version``.

    Returns ``(header, payload)`` where payload is a 1-D float64 array.
    """
    with open(path, "rb") as fh:
        raw = fh.readline(_HEADER_LIMIT)
        if not raw.endswith(b"\n"):
            raise MalformedHeaderError(f"{path}: header line is unterminated")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedHeaderError(f"{path}: header is not valid JSON ({exc})") from exc
        if not isinstance(header, dict):
            raise MalformedHeaderError(f"{path}: header is not a JSON object")
        got_kind = header.get("kind")
        if got_kind != kind:
            raise MalformedHeaderError(f"{path}: expected kind={kind!r}, found {got_kind!r}")
        got_version = header.get("version")
        if got_version != version:
            raise VersionMismatchError(
                f"{path}: format version {got_version!r} is not supported (expected {version})"
            )
        body = fh.read()
    if len(body) % 8 != 0:
        raise TruncatedPayloadError(f"{path}: payload length {len(body)} is not a multiple of 8")
    return header, np.frombuffer(body, dtype="<f8")


def check_payload_size(path, payload: np.ndarray, expected: int) -> None:
    """Raise unless the payload holds exactly ``expected`` float64 values."""
    if payload.size != expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {payload.size} values, header declares {expected}"
        )

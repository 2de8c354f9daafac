"""Wire schema: one JSON object per websocket text message.

Field names are part of the protocol contract; unknown fields are ignored
for forward compatibility. encode() is canonical (compact separators,
insertion-order keys, shortest-roundtrip floats) so identical frames always
serialize to identical bytes.
"""

from __future__ import annotations

import json

from .model import MODES

SUBPROTOCOL = "calmrelay.v1"

ROLE_AUDIENCE = "audience"
ROLE_SPEAKER = "speaker"
ROLES = (ROLE_AUDIENCE, ROLE_SPEAKER)

ERR_BAD_HELLO = "ERR_BAD_HELLO"
ERR_ROOM_MODE_MISMATCH = "ERR_ROOM_MODE_MISMATCH"
ERR_ROOM_FULL = "ERR_ROOM_FULL"
ERR_MALFORMED_FLOOD = "ERR_MALFORMED_FLOOD"


class ProtocolError(ValueError):
    def __init__(self, detail: str, code: str = ERR_BAD_HELLO):
        super().__init__(detail)
        self.code = code


def encode(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"), ensure_ascii=False)


def encode_bytes(msg: dict) -> bytes:
    return encode(msg).encode("utf-8")


def decode(text) -> dict:
    try:
        if isinstance(text, (bytes, bytearray)):
            text = text.decode("utf-8", errors="strict")
        msg = json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"bad json: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("message is not an object")
    return msg


def hello(room: str, role: str, mode: str) -> dict:
    return {"type": "hello", "room": room, "role": role, "mode": mode}


def gaze(t: int, x: float, y: float) -> dict:
    return {"type": "gaze", "t": t, "x": x, "y": y}


def nod(t: int, vx: float, vy: float) -> dict:
    return {"type": "nod", "t": t, "vx": vx, "vy": vy}


def frame(mode: str, seq: int, payload: dict) -> dict:
    return {"type": "frame", "mode": mode, "seq": seq, "payload": payload}


def room_info(mode: str, n_audiences: int) -> dict:
    return {"type": "room_info", "mode": mode, "n_audiences": n_audiences}


def error(code: str, detail: str = "") -> dict:
    return {"type": "error", "code": code, "detail": detail}


def bye() -> dict:
    return {"type": "bye"}


def _number(msg: dict, key: str) -> float:
    v = msg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolError(f"field {key!r} must be a number")
    return v


def parse_hello(msg: dict) -> tuple[str, str, str]:
    if msg.get("type") != "hello":
        raise ProtocolError(f"expected hello, got {msg.get('type')!r}")
    room = msg.get("room")
    role = msg.get("role")
    mode = msg.get("mode")
    if not isinstance(room, str) or not room:
        raise ProtocolError("hello.room must be a non-empty string")
    if role not in ROLES:
        raise ProtocolError(f"hello.role must be one of {ROLES}")
    if mode not in MODES:
        raise ProtocolError(f"hello.mode must be one of {MODES}")
    return room, role, mode


def parse_sample(msg: dict) -> tuple[str, float, float, float]:
    """Returns (kind, t, a, b) where (a, b) is (x, y) or (vx, vy)."""
    kind = msg.get("type")
    if kind == "gaze":
        return kind, _number(msg, "t"), _number(msg, "x"), _number(msg, "y")
    if kind == "nod":
        return kind, _number(msg, "t"), _number(msg, "vx"), _number(msg, "vy")
    raise ProtocolError(f"expected a sample message, got {kind!r}")

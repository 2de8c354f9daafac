"""Append-only session logs (JSONL) and deterministic replay.

First line is a header object; every following line is one record
{kind, t, ...} with body fields named exactly as on the wire. Replaying the
SAMPLE/MEMBERSHIP records through a fresh room must rebuild every logged
FRAME bit-exactly; this doubles as the pipeline-determinism regression
suite.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass

from . import protocol
from .config import RoomConfig
from .model import GAZE, GazeSample, NodSample
from .rooms import Room

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

KIND_SAMPLE = "SAMPLE"
KIND_FRAME = "FRAME"
KIND_MEMBERSHIP = "MEMBERSHIP"

ERR_SCHEMA = "ERR_SCHEMA"
ERR_DIVERGENCE = "ERR_DIVERGENCE"


class ReplayError(Exception):
    def __init__(self, detail: str, code: str = ERR_SCHEMA):
        super().__init__(detail)
        self.code = code


class SessionRecorder:
    """Best-effort background writer for one room's session.

    Records go through a bounded queue to a writer thread; the tick loop
    never blocks on disk. Flushes at least once per second so a crash loses
    at most the last second (readers skip a torn final line).
    """

    def __init__(self, path, room_id: str, mode: str, seed: int, t0: float,
                 config: RoomConfig, flush_interval_s: float = 1.0):
        self.path = str(path)
        self._queue: queue.Queue = queue.Queue(maxsize=4096)
        self._failed = False
        self.dropped = 0
        header = {
            "schema_version": SCHEMA_VERSION,
            "room": room_id,
            "mode": mode,
            "seed": seed,
            "t0": t0,
            "created_unix": time.time(),
            "config": config.to_dict(),
        }
        self._file = open(self.path, "w", encoding="utf-8")
        self._file.write(json.dumps(header, separators=(",", ":")) + "\n")
        self._file.flush()
        self._flush_interval = flush_interval_s
        self._thread = threading.Thread(
            target=self._run, name=f"recorder-{room_id}", daemon=True
        )
        self._thread.start()

    def membership(self, t: float, event: str, role: str, member_id: str) -> None:
        self._emit({
            "kind": KIND_MEMBERSHIP,
            "t": t,
            "member": member_id,
            "body": {"event": event, "role": role},
        })

    def sample(self, t: float, member_id: str, sample) -> None:
        if isinstance(sample, GazeSample):
            body = protocol.gaze(sample.t, sample.x, sample.y)
        else:
            body = protocol.nod(sample.t, sample.vx, sample.vy)
        self._emit({"kind": KIND_SAMPLE, "t": t, "member": member_id, "body": body})

    def frame(self, t: float, msg: dict) -> None:
        self._emit({"kind": KIND_FRAME, "t": t, "body": msg})

    def _emit(self, record: dict) -> None:
        if self._failed:
            return
        try:
            self._queue.put_nowait(record)
        except queue.Full:
            self.dropped += 1

    def _run(self) -> None:
        last_flush = time.monotonic()
        dirty = False
        while True:
            try:
                record = self._queue.get(timeout=self._flush_interval)
            except queue.Empty:
                record = False  # timeout: flush opportunity only
            if record is None:
                break
            try:
                if record is not False:
                    self._file.write(
                        json.dumps(record, separators=(",", ":")) + "\n"
                    )
                    dirty = True
                if dirty and time.monotonic() - last_flush >= self._flush_interval:
                    self._file.flush()
                    last_flush = time.monotonic()
                    dirty = False
            except OSError as exc:
                logger.error("session recording failed, disabling: %s", exc)
                self._failed = True
                break
        try:
            self._file.flush()
            self._file.close()
        except OSError:
            pass

    def close(self) -> None:
        if self._thread.is_alive():
            self._queue.put(None)
            self._thread.join(timeout=10.0)


# -- reading / replay -----------------------------------------------------


def read_log(path) -> tuple[dict, list[dict], int]:
    """Parse a session log; returns (header, records, skipped_lines).

    Lines that fail to parse (torn tail after a crash) are skipped.
    """
    header = None
    records: list[dict] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError:
                skipped += 1
                continue
            if not isinstance(obj, dict):
                skipped += 1
                continue
            if header is None:
                if "schema_version" not in obj:
                    raise ReplayError("first record is not a header", ERR_SCHEMA)
                header = obj
            else:
                records.append(obj)
    if header is None:
        raise ReplayError("empty log", ERR_SCHEMA)
    return header, records, skipped


@dataclass
class Divergence:
    seq: int
    reason: str


@dataclass
class ReplayResult:
    path: str
    frames_checked: int
    samples_replayed: int
    skipped_lines: int
    divergence: Divergence | None

    @property
    def ok(self) -> bool:
        return self.divergence is None


def _sample_from_body(member: str, body: dict):
    if body.get("type") == "gaze":
        return GazeSample(member, body["t"], body["x"], body["y"])
    return NodSample(member, body["t"], body["vx"], body["vy"])


def replay(path, config_override: dict | None = None) -> ReplayResult:
    """Re-drive a fresh room from a session log and diff the frames.

    Stops at the first divergence. config_override changes pipeline
    parameters before replaying (useful to confirm a log is sensitive to
    the config it claims).
    """
    header, records, skipped = read_log(path)
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ReplayError(
            f"unsupported schema_version {header.get('schema_version')!r}",
            ERR_SCHEMA,
        )
    cfg_dict = dict(header["config"])
    if config_override:
        cfg_dict.update(config_override)
    config = RoomConfig.from_dict(cfg_dict)
    room = Room(header["room"], header.get("mode", GAZE), config,
                seed=header["seed"], t0=header["t0"])

    frames_checked = 0
    samples = 0
    divergence = None
    for rec in records:
        kind = rec.get("kind")
        if kind == KIND_MEMBERSHIP:
            body = rec["body"]
            if body["event"] == "join":
                room.join(body["role"], member_id=rec["member"], now=rec["t"])
            else:
                room.leave(rec["member"])
        elif kind == KIND_SAMPLE:
            room.apply_admitted(rec["member"], _sample_from_body(rec["member"], rec["body"]))
            samples += 1
        elif kind == KIND_FRAME:
            logged = rec["body"]
            result = room.tick(rec["t"])
            frames_checked += 1
            if result.seq != logged.get("seq"):
                divergence = Divergence(
                    logged.get("seq", -1),
                    f"seq mismatch: replayed {result.seq}",
                )
                break
            logged_bytes = protocol.encode_bytes(logged)
            if result.data != logged_bytes:
                divergence = Divergence(result.seq, _first_diff(result.data, logged_bytes))
                break
    return ReplayResult(str(path), frames_checked, samples, skipped, divergence)


def _first_diff(got: bytes, want: bytes) -> str:
    n = min(len(got), len(want))
    for i in range(n):
        if got[i] != want[i]:
            lo, hi = max(0, i - 20), i + 20
            return (
                f"payload mismatch at byte {i}: "
                f"replayed ...{got[lo:hi]!r} logged ...{want[lo:hi]!r}"
            )
    return f"payload length mismatch: replayed {len(got)} logged {len(want)}"

"""Protocol-speaking load clients and black-box scenario evaluation.

run_scenario launches N scripted audience connections plus one speaker
against a live relay, then computes a report purely from the wire traffic
it saw: frame rate, end-to-end latency, per-frame aggregate metrics, and
pass/fail for the scenario's assertions.
"""

from __future__ import annotations

import asyncio
import logging
import math
import time
from dataclasses import dataclass, field

from websockets.asyncio.client import connect
from websockets.exceptions import ConnectionClosed

from . import protocol
from .model import GAZE
from .gaze import GridSpec
from .nod import vertical_dominance
from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)

ERR_CONNECT = "ERR_CONNECT"
ERR_PROTOCOL = "ERR_PROTOCOL"


class SimulatorError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass
class FrameObs:
    """One frame as observed by the speaker client."""

    arrival_s: float  # perf-clock seconds
    seq: int
    mode: str
    payload: dict
    raw: str
    last_send_s: float | None  # newest sample sent by any client at arrival
    streaming: bool  # audiences were still streaming at arrival


@dataclass
class AssertionResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ScenarioReport:
    room: str
    mode: str
    n_audiences: int
    duration_s: float
    sample_hz: float
    samples_sent: int
    frames_received: int
    frame_rate_observed: float | None
    seq_gaps: int
    latency_median_ms: float | None
    latency_p95_ms: float | None
    protocol_errors: int
    anonymity_hits: int
    dominance: list = field(default_factory=list)  # (rel_s, value)
    argmax_cells: list = field(default_factory=list)  # (rel_s, i, j)
    assertions: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        d = {
            "room": self.room,
            "mode": self.mode,
            "n_audiences": self.n_audiences,
            "duration_s": self.duration_s,
            "sample_hz": self.sample_hz,
            "samples_sent": self.samples_sent,
            "frames_received": self.frames_received,
            "frame_rate_observed": self.frame_rate_observed,
            "seq_gaps": self.seq_gaps,
            "latency_median_ms": self.latency_median_ms,
            "latency_p95_ms": self.latency_p95_ms,
            "protocol_errors": self.protocol_errors,
            "anonymity_hits": self.anonymity_hits,
            "passed": self.passed,
            "assertions": [
                {"name": a.name, "passed": a.passed, "detail": a.detail}
                for a in self.assertions
            ],
        }
        return d


def _ws_url(server_url: str) -> str:
    url = server_url.rstrip("/")
    if not url.endswith("/ws"):
        url += "/ws"
    return url


def _percentile(values: list[float], q: float) -> float:
    vs = sorted(values)
    if not vs:
        raise ValueError("empty")
    pos = (len(vs) - 1) * q
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    if lo == hi:
        return vs[lo]
    f = pos - lo
    return vs[lo] * (1 - f) + vs[hi] * f


class _SharedState:
    def __init__(self):
        self.last_send_s: float | None = None
        self.samples_sent = 0
        self.streaming = True
        self.protocol_errors = 0
        self.id_tokens_seen = 0


async def _audience_client(cfg: ScenarioConfig, url: str, idx: int,
                           state: _SharedState) -> None:
    try:
        ws = await connect(url, subprotocols=[protocol.SUBPROTOCOL])
    except OSError as exc:
        raise SimulatorError(ERR_CONNECT, str(exc)) from exc
    drain: asyncio.Task | None = None
    try:
        await ws.send(protocol.encode(
            protocol.hello(cfg.room, protocol.ROLE_AUDIENCE, cfg.mode)
        ))

        async def _drain() -> None:
            # nod rooms relay frames to audiences too; keep the socket read
            try:
                async for _ in ws:
                    pass
            except ConnectionClosed:
                pass

        drain = asyncio.create_task(_drain())
        build = protocol.gaze if cfg.mode == GAZE else protocol.nod
        interval = 1.0 / cfg.sample_hz
        start = time.perf_counter()
        for t_ms, a, b in cfg.sample_stream(idx):
            target = start + (t_ms / 1000.0)
            delay = target - time.perf_counter()
            if delay > 0:
                await asyncio.sleep(delay)
            await ws.send(protocol.encode(build(t_ms, a, b)))
            state.last_send_s = time.perf_counter()
            state.samples_sent += 1
        # keep the liveness window open a touch so the tail frames count us
        await asyncio.sleep(interval)
        await ws.send(protocol.encode(protocol.bye()))
    except ConnectionClosed as exc:
        raise SimulatorError(ERR_PROTOCOL, f"audience {idx} dropped: {exc}") from exc
    finally:
        if drain is not None:
            drain.cancel()
        await ws.close()


async def _speaker_client(cfg: ScenarioConfig, url: str, state: _SharedState,
                          frames: list[FrameObs], stop: asyncio.Event) -> None:
    try:
        ws = await connect(url, subprotocols=[protocol.SUBPROTOCOL])
    except OSError as exc:
        raise SimulatorError(ERR_CONNECT, str(exc)) from exc
    try:
        await ws.send(protocol.encode(
            protocol.hello(cfg.room, protocol.ROLE_SPEAKER, cfg.mode)
        ))
        while not stop.is_set():
            recv = asyncio.create_task(ws.recv())
            stopped = asyncio.create_task(stop.wait())
            done, pending = await asyncio.wait(
                {recv, stopped}, return_when=asyncio.FIRST_COMPLETED
            )
            for task in pending:
                task.cancel()
            if recv not in done:
                break
            try:
                raw = recv.result()
            except ConnectionClosed:
                break
            arrival = time.perf_counter()
            try:
                msg = protocol.decode(raw)
            except protocol.ProtocolError:
                state.protocol_errors += 1
                continue
            mtype = msg.get("type")
            if mtype == "frame":
                text = raw if isinstance(raw, str) else raw.decode("utf-8")
                frames.append(FrameObs(
                    arrival_s=arrival,
                    seq=msg.get("seq", -1),
                    mode=msg.get("mode", ""),
                    payload=msg.get("payload", {}),
                    raw=text,
                    last_send_s=state.last_send_s,
                    streaming=state.streaming,
                ))
            elif mtype == "room_info":
                continue
            elif mtype == "error":
                state.protocol_errors += 1
                logger.warning("server error: %s", msg)
            else:
                state.protocol_errors += 1
    finally:
        await ws.close()


async def run_scenario(cfg: ScenarioConfig, server_url: str) -> ScenarioReport:
    url = _ws_url(server_url)
    state = _SharedState()
    frames: list[FrameObs] = []
    stop = asyncio.Event()

    speaker = asyncio.create_task(_speaker_client(cfg, url, state, frames, stop))
    # speaker connects first and creates the room; give it a moment
    await asyncio.sleep(0.2)
    stream_start = time.perf_counter()
    audiences = [
        asyncio.create_task(_audience_client(cfg, url, i, state))
        for i in range(cfg.n_audiences)
    ]
    try:
        if audiences:
            await asyncio.gather(*audiences)
        else:
            await asyncio.sleep(cfg.duration_s)
    finally:
        for task in audiences:
            task.cancel()
        state.streaming = False
        stream_stop = time.perf_counter()
        # small drain so in-flight frames for the last samples arrive
        await asyncio.sleep(0.3)
        stop.set()
        await speaker

    return _build_report(cfg, state, frames, stream_start, stream_stop)


def _build_report(cfg: ScenarioConfig, state: _SharedState,
                  frames: list[FrameObs], stream_start: float,
                  stream_stop: float) -> ScenarioReport:
    grid = GridSpec()  # wire payload carries w/h; this is just a fallback
    latencies: list[float] = []
    dominance: list[tuple[float, float]] = []
    argmax_cells: list[tuple[float, int, int]] = []
    anonymity_hits = 0
    seq_gaps = 0
    prev_seq = None
    # latency quantization: newest sample is on average half an aggregate
    # send interval old when the tick fires
    agg_rate = cfg.n_audiences * cfg.sample_hz
    quant_ms = 500.0 / agg_rate if agg_rate > 0 else 0.0

    rate_window = [
        f for f in frames
        if f.streaming and stream_start + 1.0 <= f.arrival_s <= stream_stop
    ]
    for f in frames:
        if prev_seq is not None and f.seq != prev_seq + 1:
            seq_gaps += 1
        prev_seq = f.seq
        if _contains_id_token(f.raw):
            anonymity_hits += 1
        rel = f.arrival_s - stream_start
        if f.streaming and f.last_send_s is not None:
            latencies.append(max(
                (f.arrival_s - f.last_send_s) * 1000.0 - quant_ms, 0.0
            ))
        if not f.streaming:
            continue  # behavior metrics only cover the active window
        if f.mode == "trails":
            dominance.append((rel, vertical_dominance(f.payload.get("slots", []))))
        elif f.mode == "heat":
            cells = f.payload.get("cells", [])
            w = f.payload.get("w", grid.w)
            if cells and f.payload.get("max", 0.0) > 0.0:
                arg = max(range(len(cells)), key=cells.__getitem__)
                argmax_cells.append((rel, arg % w, arg // w))

    window_s = stream_stop - (stream_start + 1.0)
    frame_rate = len(rate_window) / window_s if window_s > 0 and rate_window else None

    report = ScenarioReport(
        room=cfg.room,
        mode=cfg.mode,
        n_audiences=cfg.n_audiences,
        duration_s=cfg.duration_s,
        sample_hz=cfg.sample_hz,
        samples_sent=state.samples_sent,
        frames_received=len(frames),
        frame_rate_observed=frame_rate,
        seq_gaps=seq_gaps,
        latency_median_ms=_percentile(latencies, 0.5) if latencies else None,
        latency_p95_ms=_percentile(latencies, 0.95) if latencies else None,
        protocol_errors=state.protocol_errors,
        anonymity_hits=anonymity_hits,
        dominance=dominance,
        argmax_cells=argmax_cells,
    )
    report.assertions = [evaluate_assertion(spec, report) for spec in cfg.assertions]
    return report


def _contains_id_token(raw: str) -> bool:
    """Member tokens look like 'a'+16 hex chars; JSON numbers cannot contain
    'a' so a hit in a frame would be a real leak, not a float digit."""
    i = raw.find('"a')
    while i != -1:
        chunk = raw[i + 2: i + 18]
        if len(chunk) == 16 and all(c in "0123456789abcdef" for c in chunk):
            return True
        i = raw.find('"a', i + 1)
    return False


def _frac_detail(name: str, ok_count: int, total: int, min_frac: float) -> tuple[bool, str]:
    frac = ok_count / total if total else 0.0
    return frac >= min_frac, f"{ok_count}/{total} frames ({frac:.1%}, need {min_frac:.0%})"


def evaluate_assertion(spec: dict, report: ScenarioReport) -> AssertionResult:
    metric = spec.get("metric")
    name = spec.get("name", metric or "?")
    warmup = float(spec.get("warmup_s", 0.0))

    if metric == "frame_rate":
        expected = float(spec["expected"])
        tol = float(spec.get("tol_pct", 10.0)) / 100.0
        got = report.frame_rate_observed
        ok = got is not None and abs(got - expected) <= expected * tol
        return AssertionResult(
            name, ok, f"observed {got if got is None else round(got, 2)} Hz, "
                      f"expected {expected} ±{tol:.0%}"
        )
    if metric == "latency_median_ms":
        limit = float(spec["max"])
        got = report.latency_median_ms
        ok = got is not None and got < limit
        return AssertionResult(
            name, ok,
            f"median {'n/a' if got is None else f'{got:.1f} ms'} (limit {limit} ms)",
        )
    if metric == "protocol_errors":
        limit = int(spec.get("max", 0))
        return AssertionResult(
            name, report.protocol_errors <= limit,
            f"{report.protocol_errors} errors (limit {limit})",
        )
    if metric == "anonymity_hits":
        limit = int(spec.get("max", 0))
        return AssertionResult(
            name, report.anonymity_hits <= limit,
            f"{report.anonymity_hits} frames with id tokens (limit {limit})",
        )
    if metric == "seq_gaps":
        limit = int(spec.get("max", 0))
        return AssertionResult(
            name, report.seq_gaps <= limit,
            f"{report.seq_gaps} gaps (limit {limit})",
        )
    if metric == "frames_received":
        need = int(spec["min"])
        return AssertionResult(
            name, report.frames_received >= need,
            f"{report.frames_received} frames (need >= {need})",
        )
    if metric == "dominance_frac":
        value = float(spec["value"])
        op = spec.get("op", "gt")
        min_frac = float(spec.get("min_frac", 0.9))
        series = [v for rel, v in report.dominance if rel >= warmup]
        if op == "gt":
            hits = sum(1 for v in series if v > value)
        else:
            hits = sum(1 for v in series if v < value)
        ok, detail = _frac_detail(name, hits, len(series), min_frac)
        return AssertionResult(name, ok and bool(series),
                               f"dominance {op} {value}: {detail}")
    if metric == "argmax_cell_frac":
        gw = int(spec.get("grid_w", 64))
        gh = int(spec.get("grid_h", 36))
        grid = GridSpec(gw, gh)
        want = grid.cell_of(float(spec["x"]), float(spec["y"]))
        min_frac = float(spec.get("min_frac", 0.95))
        series = [(i, j) for rel, i, j in report.argmax_cells if rel >= warmup]
        hits = sum(1 for c in series if c == want)
        ok, detail = _frac_detail(name, hits, len(series), min_frac)
        return AssertionResult(name, ok and bool(series),
                               f"argmax in cell {want}: {detail}")
    return AssertionResult(name, False, f"unknown metric {metric!r}")

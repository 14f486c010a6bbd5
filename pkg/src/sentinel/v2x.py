"""Simulated V2X transport: binary codec, lossy channel, ingestion buffer.

Wire layout (little-endian):
  magic "V2XM" | u16 schema_version | u32 total_len | u32 agent_id |
  u64 tick | f64 sent_time | u32 det_count |
  det records (class u8, f32 x, y, yaw, len, wid, conf) |
  u16 cells_x | u16 cells_y | f32 resolution | cells_x*cells_y bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MalformedMessage, UnsupportedVersion, ValidationError
from .sensing import BevGrid, Detection3D, GridSpec, SensorFrame

MAGIC = b"V2XM"
SCHEMA_VERSION = 1

CLASS_CODES = {"car": 0, "truck": 1, "van": 2, "pedestrian": 3}
CLASS_NAMES = {v: k for k, v in CLASS_CODES.items()}

_HEAD = struct.Struct("<4sHI")          # magic, version, total_len
_BODY = struct.Struct("<IQdI")          # agent, tick, sent_time, det_count
_DET = struct.Struct("<B6f")            # class, x, y, yaw, len, wid, conf
_GRID = struct.Struct("<HHf")           # cells_x, cells_y, resolution


@dataclass(frozen=True)
class V2XMessage:
    schema_version: int
    agent_num: int
    tick: int
    sent_time_s: float
    payload: SensorFrame


def quantize_cells(cells: np.ndarray) -> bytes:
    """Occupancy [0,1] to one byte per cell, round-half-up."""
    return np.floor(cells * 255.0 + 0.5).astype(np.uint8).tobytes()


def dequantize_cells(raw: bytes, cells_y: int, cells_x: int) -> np.ndarray:
    arr = np.frombuffer(raw, dtype=np.uint8).astype(float) / 255.0
    return arr.reshape(cells_y, cells_x)


def encode_message(frame: SensorFrame, sent_time_s: float) -> bytes:
    if frame.local_grid is None:
        raise ValidationError("frame must carry a local grid to go on the wire")
    grid = frame.local_grid
    parts = [_BODY.pack(frame.agent_num, frame.tick, sent_time_s, len(frame.detections))]
    for d in frame.detections:
        parts.append(_DET.pack(
            CLASS_CODES[d.kind], d.x, d.y, d.yaw, d.length, d.width, d.confidence
        ))
    parts.append(_GRID.pack(grid.spec.cells_x, grid.spec.cells_y,
                            grid.spec.resolution_m_per_cell))
    parts.append(quantize_cells(grid.cells))
    body = b"".join(parts)
    total_len = _HEAD.size + len(body)
    return _HEAD.pack(MAGIC, SCHEMA_VERSION, total_len) + body


def decode_message(buf: bytes) -> V2XMessage:
    if len(buf) < _HEAD.size:
        raise MalformedMessage(f"buffer of {len(buf)} bytes is shorter than the header")
    magic, version, total_len = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedMessage(f"bad magic {magic!r}")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersion(f"schema_version {version} (this build speaks {SCHEMA_VERSION})")
    if total_len != len(buf):
        raise MalformedMessage(f"declared length {total_len} != buffer length {len(buf)}")

    off = _HEAD.size
    if off + _BODY.size > len(buf):
        raise MalformedMessage("truncated before message body")
    agent_num, tick, sent_time, det_count = _BODY.unpack_from(buf, off)
    off += _BODY.size

    dets = []
    for _ in range(det_count):
        if off + _DET.size > len(buf):
            raise MalformedMessage("truncated inside detection records")
        code, x, y, yaw, length, width, conf = _DET.unpack_from(buf, off)
        off += _DET.size
        if code not in CLASS_NAMES:
            raise MalformedMessage(f"unknown class code {code}")
        dets.append(Detection3D(
            kind=CLASS_NAMES[code], x=x, y=y, yaw=yaw,
            length=length, width=width,
            confidence=min(1.0, max(0.0, conf)),
        ))

    if off + _GRID.size > len(buf):
        raise MalformedMessage("truncated before grid header")
    cells_x, cells_y, resolution = _GRID.unpack_from(buf, off)
    off += _GRID.size
    n_cells = cells_x * cells_y
    if off + n_cells != len(buf):
        raise MalformedMessage(
            f"grid payload should end the buffer at {off + n_cells}, buffer has {len(buf)}"
        )
    spec = GridSpec(cells_x=cells_x, cells_y=cells_y, resolution_m_per_cell=resolution)
    grid = BevGrid(spec, dequantize_cells(buf[off:], cells_y, cells_x), tick=tick)

    # ego pose is not a wire field; the fusion side re-attaches it from its
    # own pose table
    payload = SensorFrame(
        agent_num=agent_num, tick=tick, ego_pose=None,
        detections=tuple(dets), local_grid=grid,
    )
    return V2XMessage(
        schema_version=version, agent_num=agent_num, tick=tick,
        sent_time_s=sent_time, payload=payload,
    )


# ---------------------------------------------------------------------------
# channel

@dataclass(frozen=True)
class ChannelModel:
    latency_base_s: float = 0.05
    latency_jitter_s: float = 0.02
    drop_prob: float = 0.02
    bandwidth_bytes_per_tick: int = 65536

    def __post_init__(self):
        if min(self.latency_base_s, self.latency_jitter_s, self.drop_prob) < 0:
            raise ValidationError("channel parameters must be non-negative")
        if self.drop_prob > 1.0:
            raise ValidationError("drop_prob must be at most 1")
        if self.bandwidth_bytes_per_tick <= 0:
            raise ValidationError("bandwidth must be positive")


class Channel:
    """Lossy, latent, bandwidth-capped pipe. Deterministic for a given seed."""

    def __init__(self, model: ChannelModel, seed: int, dt_s: float):
        self.model = model
        self.dt_s = dt_s
        self._rng = np.random.default_rng(seed)
        self._tick_usage: dict[int, int] = {}
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    def transmit(self, msg: bytes, tick: int, sent_time_s: float) -> float | None:
        """Delivery time for the message, or None when the channel drops it."""
        self.sent += 1
        if self._rng.uniform() < self.model.drop_prob:
            self.dropped += 1
            return None
        jitter = self.model.latency_jitter_s * self._rng.uniform()
        # bandwidth: fill ticks FIFO; an oversized message takes a free tick
        slot = tick
        size = len(msg)
        cap = self.model.bandwidth_bytes_per_tick
        while True:
            used = self._tick_usage.get(slot, 0)
            if used == 0 or used + size <= cap:
                break
            slot += 1
        self._tick_usage[slot] = self._tick_usage.get(slot, 0) + size
        delay = (slot - tick) * self.dt_s
        self.delivered += 1
        return sent_time_s + delay + self.model.latency_base_s + jitter


# ---------------------------------------------------------------------------
# ingestion buffer

@dataclass(frozen=True)
class ReadySet:
    tick: int
    messages: tuple[V2XMessage, ...]
    complete: bool


class IngestBuffer:
    """Gathers per-tick messages; a tick fires once, when all expected agents
    arrive or when its staleness deadline passes, whichever comes first."""

    def __init__(self, dt_s: float, expected_agents: set[int], staleness_s: float = 0.3):
        self.dt_s = dt_s
        self.expected = frozenset(expected_agents)
        self.staleness_s = staleness_s
        self._pending: dict[int, dict[int, V2XMessage]] = {}
        self._fired: set[int] = set()

    def _fire(self, tick: int) -> ReadySet:
        msgs = self._pending.pop(tick)
        self._fired.add(tick)
        ordered = tuple(msgs[a] for a in sorted(msgs))
        return ReadySet(tick=tick, messages=ordered,
                        complete=set(msgs) >= self.expected)

    def _deadline(self, tick: int) -> float:
        return tick * self.dt_s + self.staleness_s

    def poll(self, now_s: float) -> list[ReadySet]:
        """Fire every pending tick whose deadline has passed."""
        due = sorted(t for t in self._pending if now_s >= self._deadline(t))
        return [self._fire(t) for t in due]

    def add(self, msg: V2XMessage, now_s: float) -> list[ReadySet]:
        """Insert a message; returns any ready-sets this insertion releases
        (stale deadlines first, then the message's own tick if complete)."""
        fired = self.poll(now_s)
        if msg.tick in self._fired:
            return fired
        if now_s - msg.tick * self.dt_s > self.staleness_s:
            return fired
        slot = self._pending.setdefault(msg.tick, {})
        slot[msg.agent_num] = msg  # duplicate (agent, tick): last writer wins
        if set(slot) >= self.expected:
            fired.append(self._fire(msg.tick))
        return fired

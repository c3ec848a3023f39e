"""Time-tag streams of gate openings and detections, and coincidence extraction.

File format: UTF-8 text, one record per line, ``<channel>,<ticks>`` where the
channel code is one of ``GC``, ``GD`` (gate opened on detector c / d) or
``DC``, ``DD`` (detection on c / d) and ticks is a base-10 unsigned 64-bit
count of 81 ps clock ticks. Lines starting with ``#`` are comments; a
``# tick_ps=<n>`` comment overrides the tick duration.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import NoGates, ParseError, ValidationError
from .stats import binomial_se, visibility_se

TICK_PS = 81
TICK_SECONDS = TICK_PS * 1e-12
_U64_MAX = 2 ** 64 - 1


class Channel(enum.IntEnum):
    GATE_C = 0
    GATE_D = 1
    DET_C = 2
    DET_D = 3

    @property
    def code(self) -> str:
        return _CODES[self]


_CODES = {Channel.GATE_C: "GC", Channel.GATE_D: "GD", Channel.DET_C: "DC", Channel.DET_D: "DD"}
_BY_CODE = {v.encode(): k for k, v in _CODES.items()}


class TimeTagRecord(NamedTuple):
    channel: Channel
    ticks: int


class TimeTagStream:
    """Time-ordered records held as parallel ``channel``/``ticks`` arrays."""

    def __init__(self, channels, ticks, tick_ps: int = TICK_PS):
        self.channels = np.asarray(channels, dtype=np.uint8)
        self.ticks = np.asarray(ticks, dtype=np.uint64)
        if self.channels.shape != self.ticks.shape or self.channels.ndim != 1:
            raise ValidationError("channels and ticks must be 1-D arrays of equal length")
        if len(self.channels) and self.channels.max() > 3:
            raise ValidationError("channel values must be 0..3")
        self.tick_ps = int(tick_ps)

    @classmethod
    def from_records(cls, records: Iterable[TimeTagRecord], tick_ps: int = TICK_PS):
        recs = list(records)
        return cls([int(r[0]) for r in recs], [int(r[1]) for r in recs], tick_ps)

    def __len__(self) -> int:
        return len(self.channels)

    def __iter__(self):
        for c, t in zip(self.channels.tolist(), self.ticks.tolist()):
            yield TimeTagRecord(Channel(c), t)

    def __getitem__(self, i) -> TimeTagRecord:
        return TimeTagRecord(Channel(int(self.channels[i])), int(self.ticks[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (self.tick_ps == other.tick_ps
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.ticks, other.ticks))

    @property
    def tick_seconds(self) -> float:
        return self.tick_ps * 1e-12

    def channel_ticks(self, ch: Channel) -> np.ndarray:
        return self.ticks[self.channels == ch]


def serialize_timetags(stream: TimeTagStream | Iterable[TimeTagRecord]) -> bytes:
    if not isinstance(stream, TimeTagStream):
        stream = TimeTagStream.from_records(stream)
    codes = [_CODES[Channel(c)] for c in range(4)]
    lines = [f"# tick_ps={stream.tick_ps}"]
    lines += [f"{codes[c]},{t}" for c, t in zip(stream.channels.tolist(), stream.ticks.tolist())]
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_timetags(stream: TimeTagStream, path) -> None:
    Path(path).write_bytes(serialize_timetags(stream))


def parse_timetags(byte_stream) -> TimeTagStream:
    """Parse the text format from ``bytes`` or a binary file object.

    Raises :class:`ParseError` carrying the byte offset of the offending line
    for unknown channel codes, malformed or out-of-range tick values, invalid
    UTF-8, and timestamps that go backwards within a channel.
    """
    if isinstance(byte_stream, str):
        raise TypeError("parse_timetags expects bytes, not str")
    data = byte_stream if isinstance(byte_stream, (bytes, bytearray)) else byte_stream.read()
    if isinstance(data, str):
        raise TypeError("parse_timetags expects bytes, not str")
    tick_ps = TICK_PS
    chans: list[int] = []
    ticks: list[int] = []
    last = [-1, -1, -1, -1]
    offset = 0
    for raw in bytes(data).splitlines(keepends=True):
        line = raw.rstrip(b"\r\n")
        here = offset
        offset += len(raw)
        if not line.strip():
            continue
        if line.startswith(b"#"):
            try:
                text = line[1:].decode("utf-8").strip()
            except UnicodeDecodeError:
                raise ParseError(here, "comment is not valid UTF-8") from None
            if text.startswith("tick_ps="):
                value = text[len("tick_ps="):].strip()
                if not value.isdigit() or int(value) == 0:
                    raise ParseError(here, f"bad tick_ps value {value!r}")
                tick_ps = int(value)
            continue
        parts = line.split(b",")
        if len(parts) != 2:
            raise ParseError(here, "expected '<channel>,<ticks>'")
        ch = _BY_CODE.get(parts[0])
        if ch is None:
            raise ParseError(here, f"unknown channel code {parts[0][:16]!r}")
        digits = parts[1]
        if not digits.isdigit() or not digits.isascii():
            raise ParseError(here, f"ticks must be an unsigned decimal integer, got {digits[:32]!r}")
        t = int(digits)
        if t > _U64_MAX:
            raise ParseError(here, "ticks exceed 64 bits")
        if t < last[ch]:
            raise ParseError(here, f"timestamp regression on channel {ch.code}")
        last[ch] = t
        chans.append(int(ch))
        ticks.append(t)
    return TimeTagStream(np.array(chans, dtype=np.uint8), np.array(ticks, dtype=np.uint64),
                         tick_ps)


def read_timetags(path) -> TimeTagStream:
    with open(path, "rb") as fh:
        return parse_timetags(fh)


@dataclass(frozen=True)
class CoincidenceReport:
    coinciding_gates: int
    coincidences: int
    singles_c: int
    singles_d: int
    outside_gate_c: int
    outside_gate_d: int
    p_coin_emp: float
    p_c_emp: float
    p_d_emp: float
    v_hom_emp: float | None
    se_coin_emp: float
    se_v_emp: float | None

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_csv(self) -> str:
        d = self.as_dict()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(d.keys())
        w.writerow(_fmt(v) for v in d.values())
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _as_stream(records) -> TimeTagStream:
    return records if isinstance(records, TimeTagStream) else TimeTagStream.from_records(records)


def _signed(t: np.ndarray) -> np.ndarray:
    if len(t) and t.max() >= 2 ** 63:
        raise ValidationError("timestamps beyond 2**63 ticks are not supported in analysis")
    out = t.astype(np.int64)
    if np.any(np.diff(out) < 0):
        raise ValidationError("records must be time-ordered within each channel")
    return out


def _first_detection_per_gate(gates: np.ndarray, dets: np.ndarray,
                              width: float) -> tuple[np.ndarray, int]:
    """Time of the first detection inside each gate (-1 if none), and the
    number of detections that fell in no gate."""
    first = np.full(len(gates), -1, dtype=np.int64)
    if len(dets) == 0:
        return first, 0
    gi = np.searchsorted(gates, dets, side="right") - 1
    inside = gi >= 0
    inside[inside] = (dets[inside] - gates[gi[inside]]) <= width
    gi_in, t_in = gi[inside], dets[inside]
    uniq, idx = np.unique(gi_in, return_index=True)
    first[uniq] = t_in[idx]
    return first, int((~inside).sum())


def extract_coincidences(records, gate_width: float, pair_window: float | None = None,
                         coincidence_window: float = 5e-9) -> CoincidenceReport:
    """Empirical coincidence probability and visibility from a time-tag stream.

    Gate openings on c and d within ``pair_window`` (default ``gate_width``)
    of each other form a coinciding gate pair; each gate on c pairs with the
    first unused gate on d inside the window. A detection belongs to the most
    recent gate on its own channel if it falls within ``gate_width`` of the
    opening; others are counted as out-of-gate diagnostics. A coincidence is a
    coinciding pair with detections on both channels no more than
    ``coincidence_window`` apart. Windows are in seconds.
    """
    pair_window = gate_width if pair_window is None else pair_window
    for name, v in (("gate_width", gate_width), ("pair_window", pair_window),
                    ("coincidence_window", coincidence_window)):
        if not v > 0:
            raise ValidationError(f"{name} must be > 0, got {v!r}")
    s = _as_stream(records)
    tick = s.tick_seconds
    w_gate, w_pair, w_coin = gate_width / tick, pair_window / tick, coincidence_window / tick
    gc = _signed(s.channel_ticks(Channel.GATE_C))
    gd = _signed(s.channel_ticks(Channel.GATE_D))
    dc = _signed(s.channel_ticks(Channel.DET_C))
    dd = _signed(s.channel_ticks(Channel.DET_D))

    j = np.searchsorted(gd, gc - w_pair, side="left")
    ok = j < len(gd)
    ok[ok] = np.abs(gd[j[ok]] - gc[ok]) <= w_pair
    ci = np.flatnonzero(ok)
    dj = j[ok]
    dj, keep = np.unique(dj, return_index=True)
    ci = ci[keep]
    n_pairs = len(ci)
    if n_pairs == 0:
        raise NoGates("no coinciding gate pairs in stream")

    first_c, out_c = _first_detection_per_gate(gc, dc, w_gate)
    first_d, out_d = _first_detection_per_gate(gd, dd, w_gate)
    tc, td = first_c[ci], first_d[dj]
    has_c, has_d = tc >= 0, td >= 0
    n_c, n_d = int(has_c.sum()), int(has_d.sum())
    n_coin = int((has_c & has_d & (np.abs(tc - td) <= w_coin)).sum())

    p_coin, p_c, p_d = n_coin / n_pairs, n_c / n_pairs, n_d / n_pairs
    v = 1.0 - p_coin / (p_c * p_d) if n_c and n_d else None
    return CoincidenceReport(
        coinciding_gates=n_pairs, coincidences=n_coin, singles_c=n_c, singles_d=n_d,
        outside_gate_c=out_c, outside_gate_d=out_d,
        p_coin_emp=p_coin, p_c_emp=p_c, p_d_emp=p_d, v_hom_emp=v,
        se_coin_emp=binomial_se(n_coin, n_pairs),
        se_v_emp=visibility_se(n_coin, n_c, n_d, n_pairs),
    )

"""CAN frame ingestion and byte-pair decomposition.

Two text formats are supported:

* candump logs, one frame per line: ``(TIMESTAMP) CHANNEL AID#HEXDATA``
* CSV records: ``timestamp,aid_hex,data_hex`` (header row optional)

Payloads are treated as four consecutive byte pairs: the up-to-8-byte data
field is right-padded with zeros and split into four 16-bit values, which
are the unit of analysis everywhere downstream.  The first byte of a pair
is the high-order byte, so the 16-bit value preserves the hex-dump order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

MAX_PAYLOAD_BYTES = 8
PAIRS_PER_FRAME = 4
PAIR_MAX = 0xFFFF
STANDARD_AID_MAX = 1 << 11
EXTENDED_AID_MAX = 1 << 29


class CodecError(ValueError):
    """Base class for ingestion failures."""


class MalformedLine(CodecError):
    """Line does not match any supported record structure."""


class PayloadTooLong(CodecError):
    """Data field longer than 8 bytes (16 hex digits)."""


class BadHex(CodecError):
    """AID or data field contains invalid or odd-length hex."""


@dataclass(frozen=True, order=True)
class BytePairId:
    """Identity of one 16-bit signal: (arbitration id, byte-pair index)."""

    aid: int
    pair_index: int

    def __post_init__(self) -> None:
        if not 0 <= self.aid < EXTENDED_AID_MAX:
            raise ValueError(f"aid out of range: {self.aid}")
        if self.pair_index not in (0, 1, 2, 3):
            raise ValueError(f"pair_index must be in 0..3, got {self.pair_index}")

    def __str__(self) -> str:
        return f"{self.aid:03X}:{self.pair_index}"

    @classmethod
    def parse(cls, text: str) -> "BytePairId":
        aid_str, _, idx_str = text.partition(":")
        if not idx_str:
            raise ValueError(f"expected 'AID:pair', got {text!r}")
        if aid_str.lower().startswith("0x"):
            aid_str = aid_str[2:]
        try:
            return cls(int(aid_str, 16), int(idx_str))
        except ValueError as exc:
            raise ValueError(f"bad byte-pair id {text!r}: {exc}") from None


@dataclass(frozen=True)
class CanFrame:
    """One timestamped CAN 2.0 data frame."""

    timestamp: float
    aid: int
    payload: bytes
    channel: str = "can0"
    extended: bool = False

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp: {self.timestamp}")
        if len(self.payload) > MAX_PAYLOAD_BYTES:
            raise PayloadTooLong(f"payload of {len(self.payload)} bytes exceeds 8")
        limit = EXTENDED_AID_MAX if self.extended else STANDARD_AID_MAX
        if not 0 <= self.aid < limit:
            raise ValueError(
                f"aid 0x{self.aid:X} out of range for "
                f"{'extended' if self.extended else 'standard'} frame"
            )


_CANDUMP_RE = re.compile(
    r"^\((?P<ts>\d+(?:\.\d+)?)\)\s+(?P<chan>\S+)\s+"
    r"(?P<aid>[0-9A-Fa-f]{1,8})#(?P<data>\S*)$"
)


def _parse_hex_payload(data: str) -> bytes:
    if len(data) > 2 * MAX_PAYLOAD_BYTES:
        raise PayloadTooLong(f"{len(data)} hex digits exceed the 8-byte data field")
    if len(data) % 2 != 0:
        raise BadHex(f"odd hex digit count in data field: {data!r}")
    try:
        return bytes.fromhex(data)
    except ValueError:
        raise BadHex(f"invalid hex in data field: {data!r}") from None


def _make_frame(ts: float, aid_str: str, data: str, channel: str) -> CanFrame:
    try:
        aid = int(aid_str, 16)
    except ValueError:
        raise BadHex(f"invalid hex arbitration id: {aid_str!r}") from None
    # candump prints standard ids with up to 3 digits; anything longer, or any
    # value past 11 bits, is treated as an extended frame.
    extended = len(aid_str) > 3 or aid >= STANDARD_AID_MAX
    if aid >= EXTENDED_AID_MAX:
        raise MalformedLine(f"arbitration id 0x{aid:X} exceeds 29 bits")
    return CanFrame(
        timestamp=ts,
        aid=aid,
        payload=_parse_hex_payload(data),
        channel=channel,
        extended=extended,
    )


def parse_log_line(line: str) -> CanFrame:
    """Decode one candump or CSV record into a frame.

    Candump lines start with a parenthesised timestamp; anything else with
    commas is tried as ``timestamp,aid_hex,data_hex``.  Remote/error frames
    are not data frames and raise MalformedLine here; file-level readers
    drop them with a counter instead.
    """
    stripped = line.strip()
    if not stripped:
        raise MalformedLine("empty line")
    if stripped.startswith("("):
        m = _CANDUMP_RE.match(stripped)
        if not m:
            raise MalformedLine(f"not a candump record: {line!r}")
        data = m.group("data")
        if data.upper().startswith("R"):
            raise MalformedLine("remote frame")
        try:
            ts = float(m.group("ts"))
        except ValueError:
            raise MalformedLine(f"bad timestamp in {line!r}") from None
        return _make_frame(ts, m.group("aid"), data, m.group("chan"))
    if "," in stripped:
        parts = [p.strip() for p in stripped.split(",")]
        if len(parts) != 3:
            raise MalformedLine(f"expected 3 CSV fields, got {len(parts)}: {line!r}")
        ts_str, aid_str, data = parts
        try:
            ts = float(ts_str)
        except ValueError:
            raise MalformedLine(f"bad timestamp in {line!r}") from None
        return _make_frame(ts, aid_str, data, "can0")
    raise MalformedLine(f"unrecognized record: {line!r}")


def format_log_line(frame: CanFrame) -> str:
    """Render a frame in candump format. Inverse of parse_log_line."""
    width = 8 if frame.extended else 3
    return (
        f"({frame.timestamp:.6f}) {frame.channel} "
        f"{frame.aid:0{width}X}#{frame.payload.hex().upper()}"
    )


def format_csv_line(frame: CanFrame) -> str:
    width = 8 if frame.extended else 3
    return f"{frame.timestamp:.6f},{frame.aid:0{width}X},{frame.payload.hex().upper()}"


CSV_HEADER = "timestamp,aid_hex,data_hex"


def decompose(frame: CanFrame) -> list[tuple[BytePairId, int]]:
    """Split a frame's payload into its four 16-bit byte-pair values.

    The payload is zero-padded to 8 bytes; pair i covers bytes 2i and 2i+1
    with the first byte high-order.  Total on valid frames: always exactly
    four pairs, each in [0, 65535].
    """
    padded = frame.payload.ljust(MAX_PAYLOAD_BYTES, b"\x00")
    return [
        (BytePairId(frame.aid, i), (padded[2 * i] << 8) | padded[2 * i + 1])
        for i in range(PAIRS_PER_FRAME)
    ]


def reassemble(values: Iterable[int]) -> bytes:
    """Rebuild the zero-padded 8-byte payload from four pair values."""
    out = bytearray()
    for v in values:
        if not 0 <= v <= PAIR_MAX:
            raise ValueError(f"pair value out of range: {v}")
        out.append(v >> 8)
        out.append(v & 0xFF)
    if len(out) != MAX_PAYLOAD_BYTES:
        raise ValueError("expected exactly 4 pair values")
    return bytes(out)


@dataclass
class IngestStats:
    """Counters for records skipped while reading a capture file."""

    frames: int = 0
    dropped_remote: int = 0
    dropped_error: int = 0


def iter_log(
    path: str | Path,
    format: str = "candump",
    stats: IngestStats | None = None,
) -> Iterator[CanFrame]:
    """Stream frames from a capture file.

    Remote frames (candump ``R`` payload) and error-frame markers are
    dropped and counted, matching how a data-frame pipeline treats them.
    Structurally broken lines raise MalformedLine.
    """
    if format not in ("candump", "csv"):
        raise ValueError(f"unknown format {format!r}")
    stats = stats if stats is not None else IngestStats()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if format == "csv" and lineno == 1 and line.lower().startswith("timestamp"):
                continue
            if "ERRORFRAME" in line:
                stats.dropped_error += 1
                continue
            if line.startswith("(") and "#" in line:
                data_part = line.rsplit("#", 1)[1]
                if data_part.upper().startswith("R"):
                    stats.dropped_remote += 1
                    continue
            try:
                frame = parse_log_line(line)
            except CodecError as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
            stats.frames += 1
            yield frame


def read_log(path: str | Path, format: str = "candump") -> tuple[list[CanFrame], IngestStats]:
    """Read a whole capture, returning frames sorted by timestamp."""
    stats = IngestStats()
    frames = list(iter_log(path, format=format, stats=stats))
    frames.sort(key=lambda f: f.timestamp)  # stable: preserves on-wire order at ties
    return frames, stats


def write_log(path: str | Path, frames: Iterable[CanFrame], format: str = "candump") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if format == "csv":
            fh.write(CSV_HEADER + "\n")
            for fr in frames:
                fh.write(format_csv_line(fr) + "\n")
        else:
            for fr in frames:
                fh.write(format_log_line(fr) + "\n")

"""Correction message codec: RTCM-style framing with CRC-24Q.

Frame layout: 0xD3 preamble, 6 reserved zero bits, 10-bit big-endian payload
length, payload, 3-byte CRC-24Q over everything before the CRC. The first
payload byte is the message type. All multi-byte integers are big-endian.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum

PREAMBLE = 0xD3
CRC24Q_POLY = 0x1864CFB
MAX_PAYLOAD = 1023
FRAME_OVERHEAD = 6  # preamble + 2 header bytes + 3 CRC bytes


class WireError(Exception):
    pass


class PayloadTooLarge(WireError):
    pass


class NeedMoreData(WireError):
    """Buffer ends before a complete frame; retry with more bytes."""


class CrcMismatch(WireError):
    def __init__(self, resume_offset: int):
        super().__init__(f"CRC mismatch, resync at offset {resume_offset}")
        self.resume_offset = resume_offset


class UnknownMsgType(WireError):
    pass


class MsgType(IntEnum):
    STATION_INFO = 1
    OBSERVATION_EPOCH = 2


_CRC_TABLE: list[int] = []


def _crc_table() -> list[int]:
    if not _CRC_TABLE:
        for i in range(256):
            crc = i << 16
            for _ in range(8):
                crc <<= 1
                if crc & 0x1000000:
                    crc ^= CRC24Q_POLY
            _CRC_TABLE.append(crc & 0xFFFFFF)
    return _CRC_TABLE


def crc24q(data: bytes) -> int:
    """CRC-24Q (poly 0x1864CFB, init 0, no reflection)."""
    table = _crc_table()
    crc = 0
    for b in data:
        crc = ((crc << 8) & 0xFFFFFF) ^ table[((crc >> 16) ^ b) & 0xFF]
    return crc


@dataclass(frozen=True)
class CorrectionFrame:
    msg_type: int
    payload: bytes


def encode_frame(frame: CorrectionFrame) -> bytes:
    """Frame a message for the wire; overhead is exactly 6 bytes + payload."""
    body = bytes([frame.msg_type & 0xFF]) + frame.payload
    if len(body) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload {len(body)} exceeds {MAX_PAYLOAD} bytes")
    head = struct.pack(">BH", PREAMBLE, len(body) & 0x3FF)
    crc = crc24q(head + body)
    return head + body + crc.to_bytes(3, "big")


def decode_frame(buf: bytes) -> tuple[CorrectionFrame, int]:
    """Decode the first frame in buf; returns (frame, bytes consumed).

    Scans forward for the preamble, so leading garbage is skipped. Raises
    NeedMoreData when the buffer ends mid-frame and CrcMismatch (with a
    resume offset past the bad preamble) on corruption.
    """
    start = buf.find(bytes([PREAMBLE]))
    if start < 0:
        # Nothing resembling a frame; consume everything.
        raise NeedMoreData(f"no preamble in {len(buf)} bytes")
    if len(buf) < start + 3:
        raise NeedMoreData("incomplete header")
    length = struct.unpack(">H", buf[start + 1:start + 3])[0] & 0x3FF
    end = start + 3 + length + 3
    if len(buf) < end:
        raise NeedMoreData("incomplete frame body")
    body = buf[start + 3:start + 3 + length]
    crc = int.from_bytes(buf[start + 3 + length:end], "big")
    if crc != crc24q(buf[start:start + 3 + length]) or length == 0:
        raise CrcMismatch(start + 1)
    return CorrectionFrame(msg_type=body[0], payload=body[1:]), end


class FrameDecoder:
    """Streaming decoder: feed arbitrary byte chunks, get whole frames.

    Resynchronizes at the next preamble after a CRC failure and counts the
    failures for diagnostics.
    """

    def __init__(self):
        self._buf = bytearray()
        self.crc_errors = 0

    def feed(self, data: bytes) -> list[CorrectionFrame]:
        self._buf.extend(data)
        frames = []
        while True:
            try:
                frame, consumed = decode_frame(bytes(self._buf))
            except NeedMoreData:
                # Drop bytes that can never start a frame.
                keep = self._buf.find(bytes([PREAMBLE]))
                if keep > 0:
                    del self._buf[:keep]
                elif keep < 0:
                    self._buf.clear()
                return frames
            except CrcMismatch as err:
                self.crc_errors += 1
                del self._buf[:err.resume_offset]
                continue
            del self._buf[:consumed]
            frames.append(frame)


class _BitWriter:
    def __init__(self):
        self._bits: list[int] = []

    def put(self, value: int, width: int):
        value &= (1 << width) - 1
        for i in range(width - 1, -1, -1):
            self._bits.append((value >> i) & 1)

    def put_signed(self, value: int, width: int):
        self.put(value & ((1 << width) - 1), width)

    def to_bytes(self) -> bytes:
        bits = self._bits + [0] * (-len(self._bits) % 8)
        out = bytearray()
        for i in range(0, len(bits), 8):
            byte = 0
            for b in bits[i:i + 8]:
                byte = (byte << 1) | b
            out.append(byte)
        return bytes(out)


class _BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def get(self, width: int) -> int:
        value = 0
        for _ in range(width):
            byte = self._data[self._pos >> 3]
            value = (value << 1) | ((byte >> (7 - (self._pos & 7))) & 1)
            self._pos += 1
        return value

    def get_signed(self, width: int) -> int:
        value = self.get(width)
        if value & (1 << (width - 1)):
            value -= 1 << width
        return value


@dataclass(frozen=True)
class StationInfo:
    station_id: int
    ecef_x: float  # m
    ecef_y: float
    ecef_z: float
    healthy: bool

    def encode(self) -> CorrectionFrame:
        w = _BitWriter()
        w.put(self.station_id, 16)
        for v in (self.ecef_x, self.ecef_y, self.ecef_z):
            w.put_signed(round(v * 1e4), 64)  # 0.1 mm units
        w.put(1 if self.healthy else 0, 1)
        return CorrectionFrame(MsgType.STATION_INFO, w.to_bytes())

    @classmethod
    def decode(cls, payload: bytes) -> "StationInfo":
        r = _BitReader(payload)
        station_id = r.get(16)
        coords = [r.get_signed(64) * 1e-4 for _ in range(3)]
        healthy = bool(r.get(1))
        return cls(station_id, coords[0], coords[1], coords[2], healthy)


@dataclass(frozen=True)
class ObsRecord:
    constellation_id: int
    sat_id: int
    pseudorange: float    # m
    carrier_phase: float  # cycles
    cn0: float            # dB-Hz
    lock: bool
    loss_count: int


@dataclass(frozen=True)
class ObservationEpochMsg:
    week: int
    tow_ms: int
    records: tuple[ObsRecord, ...]

    def encode(self) -> CorrectionFrame:
        w = _BitWriter()
        w.put(self.week, 16)
        w.put(self.tow_ms, 32)
        w.put(len(self.records), 8)
        for rec in sorted(self.records, key=lambda r: (r.constellation_id, r.sat_id)):
            w.put(rec.constellation_id, 4)
            w.put(rec.sat_id, 8)
            w.put_signed(round(rec.pseudorange * 1e4), 64)      # 0.1 mm
            w.put_signed(round(rec.carrier_phase * 1e4), 64)    # 0.1 milli-cycle
            w.put(round(rec.cn0 / 0.25) & 0xFF, 8)              # 0.25 dB-Hz
            w.put(1 if rec.lock else 0, 1)
            w.put(rec.loss_count & 0x7F, 7)
        return CorrectionFrame(MsgType.OBSERVATION_EPOCH, w.to_bytes())

    @classmethod
    def decode(cls, payload: bytes) -> "ObservationEpochMsg":
        r = _BitReader(payload)
        week = r.get(16)
        tow_ms = r.get(32)
        count = r.get(8)
        records = []
        for _ in range(count):
            records.append(ObsRecord(
                constellation_id=r.get(4),
                sat_id=r.get(8),
                pseudorange=r.get_signed(64) * 1e-4,
                carrier_phase=r.get_signed(64) * 1e-4,
                cn0=r.get(8) * 0.25,
                lock=bool(r.get(1)),
                loss_count=r.get(7),
            ))
        return cls(week, tow_ms, tuple(records))

    @property
    def t(self) -> float:
        return self.week * 604800.0 + self.tow_ms * 1e-3


def decode_message(frame: CorrectionFrame):
    """Parse a frame payload into its typed message."""
    if frame.msg_type == MsgType.STATION_INFO:
        return StationInfo.decode(frame.payload)
    if frame.msg_type == MsgType.OBSERVATION_EPOCH:
        return ObservationEpochMsg.decode(frame.payload)
    raise UnknownMsgType(f"message type {frame.msg_type}")

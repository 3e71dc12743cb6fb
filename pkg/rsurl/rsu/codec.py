"""
Binary V2I wire format, little-endian, documented byte by byte in docs/formats.md.

    frame   = header (6 bytes) | payload (n bytes) | crc (2 bytes)
    header  = magic b"RS" | version u8 | msg_type u8 | payload length u16
    crc     = CRC-16/CCITT (binascii.crc_hqx, initial value 0xFFFF) over the payload

    REPORT  payload (50 bytes): vehicle_id u32, timestamp_ms u64, x f64, y f64, heading f64, speed f64,
                                entry_arm u8, exit_arm u8 (255 = undeclared), seq u32
    COMMAND payload (40 bytes): vehicle_id u32, timestamp_ms u64, a_acc f64, a_steer f64, seq u32,
                                valid_until_ms u64
"""
import binascii
import struct

import numpy as np

from rsurl.object2 import SlotsObject
from rsurl.env.config import ACTION_LOW, ACTION_HIGH
from rsurl.env.routes import ARMS

MAGIC = b"RS"
VERSION = 1
REPORT, COMMAND = 0x01, 0x02
UNDECLARED = 255
CRC_INIT = 0xFFFF

HEADER = struct.Struct("<2sBBH")
CRC = struct.Struct("<H")
PAYLOADS = {REPORT: struct.Struct("<IQddddBBI"),
            COMMAND: struct.Struct("<IQddIQ")}

U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1


class DecodeError(ValueError):
    pass


class TruncatedError(DecodeError):
    pass


class BadMagicError(DecodeError):
    pass


class ChecksumError(DecodeError):
    pass


class UnknownTypeError(DecodeError):
    pass


def _check_uint(name, x, high):
    if not 0 <= x <= high:
        raise ValueError(f"{name} must be in [0, {high}], got {x}")


def _check_finite(**kwargs):
    for k, v in kwargs.items():
        if not np.isfinite(v):
            raise ValueError(f"{k} must be finite, got {v}")


class V2iStateReport(SlotsObject):
    """CAV -> RSU. Arms are indices into ARMS; exit_arm is UNDECLARED if the CAV does not announce its route."""
    __slots__ = ("vehicle_id", "timestamp", "x", "y", "heading", "speed", "entry_arm", "exit_arm", "seq")
    msg_type = REPORT

    def __init__(self, vehicle_id=0, timestamp=0, x=0., y=0., heading=0., speed=0., entry_arm=0,
                 exit_arm=UNDECLARED, seq=0):
        self.vehicle_id = int(vehicle_id)
        self.timestamp = int(timestamp)  # ms
        self.x = float(x)
        self.y = float(y)
        self.heading = float(heading)
        self.speed = float(speed)
        self.entry_arm = int(entry_arm)
        self.exit_arm = int(exit_arm)
        self.seq = int(seq)

    @property
    def xy(self):
        return np.array([self.x, self.y])

    @property
    def entry(self):
        return ARMS[self.entry_arm]

    @property
    def exit(self):
        return None if self.exit_arm == UNDECLARED else ARMS[self.exit_arm]

    def validate(self):
        _check_uint("vehicle_id", self.vehicle_id, U32_MAX)
        _check_uint("timestamp", self.timestamp, U64_MAX)
        _check_uint("seq", self.seq, U32_MAX)
        _check_finite(x=self.x, y=self.y, heading=self.heading, speed=self.speed)
        if not 0 <= self.entry_arm < len(ARMS):
            raise ValueError(f"entry_arm must index {ARMS}, got {self.entry_arm}")
        if not (0 <= self.exit_arm < len(ARMS) or self.exit_arm == UNDECLARED):
            raise ValueError(f"exit_arm must index {ARMS} or be {UNDECLARED}, got {self.exit_arm}")
        return self

    def pack(self):
        return PAYLOADS[REPORT].pack(self.vehicle_id, self.timestamp, self.x, self.y, self.heading, self.speed,
                                     self.entry_arm, self.exit_arm, self.seq)


class V2iCommand(SlotsObject):
    """RSU -> CAV. (a_acc, a_steer) is the clamped action in physical units; ignored from valid_until on."""
    __slots__ = ("vehicle_id", "timestamp", "a_acc", "a_steer", "seq", "valid_until")
    msg_type = COMMAND

    def __init__(self, vehicle_id=0, timestamp=0, a_acc=0., a_steer=0., seq=0, valid_until=1):
        self.vehicle_id = int(vehicle_id)
        self.timestamp = int(timestamp)  # ms
        self.a_acc = float(a_acc)
        self.a_steer = float(a_steer)
        self.seq = int(seq)
        self.valid_until = int(valid_until)  # ms

    @property
    def action(self):
        return np.array([self.a_acc, self.a_steer])

    def validate(self):
        _check_uint("vehicle_id", self.vehicle_id, U32_MAX)
        _check_uint("timestamp", self.timestamp, U64_MAX)
        _check_uint("valid_until", self.valid_until, U64_MAX)
        _check_uint("seq", self.seq, U32_MAX)
        _check_finite(a_acc=self.a_acc, a_steer=self.a_steer)
        if np.any(self.action < ACTION_LOW) or np.any(self.action > ACTION_HIGH):
            raise ValueError(f"Command action {self.action} outside the bounds [{ACTION_LOW}, {ACTION_HIGH}]")
        if self.valid_until <= self.timestamp:
            raise ValueError(f"valid_until {self.valid_until} must lie after the timestamp {self.timestamp}")
        return self

    def pack(self):
        return PAYLOADS[COMMAND].pack(self.vehicle_id, self.timestamp, self.a_acc, self.a_steer, self.seq,
                                      self.valid_until)


MESSAGES = {REPORT: V2iStateReport,
            COMMAND: V2iCommand}


def crc16(payload: bytes) -> int:
    return binascii.crc_hqx(payload, CRC_INIT)


def encode(msg) -> bytes:
    msg.validate()
    payload = msg.pack()
    return HEADER.pack(MAGIC, VERSION, msg.msg_type, len(payload)) + payload + CRC.pack(crc16(payload))


def decode(b: bytes):
    b = bytes(b)
    if len(b) < HEADER.size:
        raise TruncatedError(f"Frame of {len(b)} bytes is shorter than the {HEADER.size} byte header")

    magic, version, msg_type, n = HEADER.unpack_from(b)
    if magic != MAGIC:
        raise BadMagicError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DecodeError(f"Unsupported wire format version {version}, expected {VERSION}")
    if msg_type not in MESSAGES:
        raise UnknownTypeError(f"Unknown message type 0x{msg_type:02X}")
    if n != PAYLOADS[msg_type].size:
        raise DecodeError(f"Payload length {n} does not match message type 0x{msg_type:02X} "
                          f"({PAYLOADS[msg_type].size} bytes)")

    size = HEADER.size + n + CRC.size
    if len(b) < size:
        raise TruncatedError(f"Frame of {len(b)} bytes, the header announces {size}")
    if len(b) > size:
        raise DecodeError(f"{len(b) - size} trailing bytes after a {size} byte frame")

    payload = b[HEADER.size:HEADER.size + n]
    crc, = CRC.unpack_from(b, HEADER.size + n)
    if crc != crc16(payload):
        raise ChecksumError(f"CRC mismatch: frame carries 0x{crc:04X}, payload gives 0x{crc16(payload):04X}")

    msg = MESSAGES[msg_type](*PAYLOADS[msg_type].unpack(payload))
    try:
        return msg.validate()
    except ValueError as e:
        raise DecodeError(f"Invalid {type(msg).__name__}: {e}") from e

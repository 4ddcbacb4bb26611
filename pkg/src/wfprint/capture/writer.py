"""pcapng and classic pcap writers (used by the synthetic generator and tests)."""
from __future__ import annotations

import struct
from typing import BinaryIO, Iterable, NamedTuple, Protocol

from .reader import (
    BLK_ENHANCED_PACKET,
    BLK_INTERFACE,
    BLK_SECTION_HEADER,
    BYTE_ORDER_MAGIC,
    OPT_IF_TSRESOL,
    PCAP_MAGIC_NS,
    PCAP_MAGIC_US,
    ByteOrder,
)


class FrameRecord(NamedTuple):
    ticks: int
    data: bytes
    wire_len: int | None = None


class _Frame(Protocol):
    ticks: int
    data: bytes
    wire_len: int | None


def _pad4(n: int) -> int:
    return (n + 3) & ~3


def _block(prefix: str, btype: int, body: bytes) -> bytes:
    body = body + b"\x00" * (_pad4(len(body)) - len(body))
    total = len(body) + 12
    return struct.pack(prefix + "II", btype, total) + body + struct.pack(prefix + "I", total)


def write_pcapng(fh: BinaryIO, frames: Iterable[_Frame], *, byte_order: ByteOrder = ByteOrder.LITTLE,
                 link_type: int = 1, snap_len: int = 0, tsresol: int | None = None) -> int:
    """Write a single-section, single-interface pcapng file.

    ``tsresol`` is the raw ``if_tsresol`` option byte; ``None`` omits the
    option (microsecond ticks).  Returns the number of packets written.
    """
    p = byte_order.prefix
    shb = struct.pack(p + "IHHq", BYTE_ORDER_MAGIC, 1, 0, -1)
    fh.write(_block(p, BLK_SECTION_HEADER, shb))
    idb = struct.pack(p + "HHI", link_type, 0, snap_len)
    if tsresol is not None:
        idb += struct.pack(p + "HHB3x", OPT_IF_TSRESOL, 1, tsresol) + struct.pack(p + "HH", 0, 0)
    fh.write(_block(p, BLK_INTERFACE, idb))
    count = 0
    for frame in frames:
        data = bytes(frame.data)
        wire = frame.wire_len if frame.wire_len is not None else len(data)
        hdr = struct.pack(p + "IIIII", 0, (frame.ticks >> 32) & 0xFFFFFFFF,
                          frame.ticks & 0xFFFFFFFF, len(data), wire)
        fh.write(_block(p, BLK_ENHANCED_PACKET, hdr + data))
        count += 1
    return count


def write_pcap(fh: BinaryIO, frames: Iterable[_Frame], *, byte_order: ByteOrder = ByteOrder.LITTLE,
               nanosecond: bool = False, link_type: int = 1, snap_len: int = 262144) -> int:
    """Write a classic pcap file; frame ticks are micro- or nanoseconds."""
    p = byte_order.prefix
    magic = PCAP_MAGIC_NS if nanosecond else PCAP_MAGIC_US
    unit = 10**9 if nanosecond else 10**6
    fh.write(struct.pack(p + "IHHiIII", magic, 2, 4, 0, 0, snap_len, link_type))
    rec = struct.Struct(p + "IIII")
    count = 0
    for frame in frames:
        data = bytes(frame.data)
        wire = frame.wire_len if frame.wire_len is not None else len(data)
        sec, frac = divmod(frame.ticks, unit)
        fh.write(rec.pack(sec, frac, len(data), wire))
        fh.write(data)
        count += 1
    return count

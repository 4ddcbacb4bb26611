"""Container-level parsing for pcapng and classic pcap files.

Only the container is handled here: blocks/records are walked and raw frames
are yielded together with their timestamp tick counts.  Header decoding lives
in :mod:`wfprint.capture.decode`.
"""
from __future__ import annotations

import enum
import logging
import mmap
import os
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple

from ..errors import LengthMismatch, MissingInterface, TruncatedBlock, UnknownMagic

logger = logging.getLogger(__name__)

# Block types
BLK_SECTION_HEADER = 0x0A0D0D0A
BLK_INTERFACE = 0x00000001
BLK_SIMPLE_PACKET = 0x00000003
BLK_ENHANCED_PACKET = 0x00000006

BYTE_ORDER_MAGIC = 0x1A2B3C4D
PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D

OPT_ENDOFOPT = 0
OPT_IF_TSRESOL = 9

MICRO = Fraction(1, 10**6)
NANO = Fraction(1, 10**9)


class CaptureFormat(enum.Enum):
    PCAPNG = "pcapng"
    PCAP_US = "pcap_us"
    PCAP_NS = "pcap_ns"


class ByteOrder(enum.Enum):
    LITTLE = "<"
    BIG = ">"

    @property
    def prefix(self) -> str:
        return self.value


@dataclass(frozen=True)
class InterfaceInfo:
    link_type: int
    ts_resolution: Fraction = MICRO
    snap_len: int = 0


@dataclass
class CaptureFile:
    """An opened capture: format metadata plus the backing bytes.

    ``interfaces`` is filled in lazily for pcapng, since Interface Description
    Blocks may appear anywhere in a section.
    """

    path: str | None
    format: CaptureFormat
    byte_order: ByteOrder
    interfaces: list[InterfaceInfo] = field(default_factory=list)
    data: bytes | mmap.mmap | None = field(default=None, repr=False)


class RawPacket(NamedTuple):
    data: bytes
    ticks: int
    resolution: Fraction
    interface: int
    wire_len: int

    @property
    def timestamp(self) -> float:
        # int / int true division is correctly rounded.
        return self.ticks * self.resolution.numerator / self.resolution.denominator


def tsresol_to_fraction(value: int) -> Fraction:
    """Decode an ``if_tsresol`` option byte into seconds per tick."""
    exponent = value & 0x7F
    if value & 0x80:
        return Fraction(1, 2**exponent)
    return Fraction(1, 10**exponent)


def detect_format(leading: bytes) -> tuple[CaptureFormat, ByteOrder | None]:
    """Identify the capture format from its first bytes.

    For pcapng the byte order comes from the byte-order magic at offset 8, so
    it is only reported when at least 12 bytes are supplied.
    """
    if len(leading) < 4:
        raise TruncatedBlock(f"need at least 4 bytes to detect format, got {len(leading)}")
    head = bytes(leading[:4])
    if head == b"\x0a\x0d\x0d\x0a":
        if len(leading) < 12:
            return CaptureFormat.PCAPNG, None
        bom = bytes(leading[8:12])
        if bom == struct.pack("<I", BYTE_ORDER_MAGIC):
            return CaptureFormat.PCAPNG, ByteOrder.LITTLE
        if bom == struct.pack(">I", BYTE_ORDER_MAGIC):
            return CaptureFormat.PCAPNG, ByteOrder.BIG
        raise UnknownMagic(f"bad pcapng byte-order magic {bom.hex()}")
    for order in (ByteOrder.LITTLE, ByteOrder.BIG):
        (magic,) = struct.unpack(order.prefix + "I", head)
        if magic == PCAP_MAGIC_US:
            return CaptureFormat.PCAP_US, order
        if magic == PCAP_MAGIC_NS:
            return CaptureFormat.PCAP_NS, order
    raise UnknownMagic(f"unrecognised capture magic {head.hex()}")


def open_capture(source: str | os.PathLike | bytes) -> CaptureFile:
    """Open a capture from a path or an in-memory byte string."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        path, data = None, bytes(source)
    else:
        path = os.fspath(source)
        with open(path, "rb") as fh:
            size = os.fstat(fh.fileno()).st_size
            if size == 0:
                data = b""
            else:
                data = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
    fmt, order = detect_format(data[:12])
    if order is None:
        raise TruncatedBlock("section header block is truncated")
    cap = CaptureFile(path=path, format=fmt, byte_order=order, data=data)
    if fmt is not CaptureFormat.PCAPNG:
        if len(data) < 24:
            raise TruncatedBlock("pcap global header is truncated")
        snap_len, network = struct.unpack_from(order.prefix + "II", data, 16)
        res = NANO if fmt is CaptureFormat.PCAP_NS else MICRO
        cap.interfaces.append(InterfaceInfo(network & 0x0FFFFFFF, res, snap_len))
    return cap


def read_packets(capture: CaptureFile | str | os.PathLike | bytes) -> Iterator[RawPacket]:
    """Yield every packet of ``capture`` in file order."""
    if not isinstance(capture, CaptureFile):
        capture = open_capture(capture)
    if capture.format is CaptureFormat.PCAPNG:
        return _read_pcapng(capture)
    return _read_pcap(capture)


def _read_pcap(cap: CaptureFile) -> Iterator[RawPacket]:
    data = cap.data
    end = len(data)
    iface = cap.interfaces[0]
    hdr = struct.Struct(cap.byte_order.prefix + "IIII")
    unit = iface.ts_resolution.denominator
    off = 24
    while off < end:
        if off + 16 > end:
            raise TruncatedBlock(f"record header at offset {off} is truncated")
        sec, frac, incl, orig = hdr.unpack_from(data, off)
        off += 16
        if off + incl > end:
            raise TruncatedBlock(f"record data at offset {off} is truncated")
        yield RawPacket(bytes(data[off:off + incl]), sec * unit + frac, iface.ts_resolution, 0, orig)
        off += incl


def _parse_options(data, start: int, stop: int, prefix: str) -> dict[int, bytes]:
    opts: dict[int, bytes] = {}
    off = start
    while off + 4 <= stop:
        code, length = struct.unpack_from(prefix + "HH", data, off)
        off += 4
        if code == OPT_ENDOFOPT:
            break
        if off + length > stop:
            break
        opts.setdefault(code, bytes(data[off:off + length]))
        off += (length + 3) & ~3
    return opts


def _read_pcapng(cap: CaptureFile) -> Iterator[RawPacket]:
    data = cap.data
    end = len(data)
    prefix = cap.byte_order.prefix
    u32 = struct.Struct(prefix + "I")
    epb = struct.Struct(prefix + "IIIII")
    off = 0
    while off < end:
        if off + 12 > end:
            raise TruncatedBlock(f"block header at offset {off} is truncated")
        (btype,) = u32.unpack_from(data, off)
        if btype == BLK_SECTION_HEADER:
            bom = bytes(data[off + 8:off + 12])
            if bom == struct.pack("<I", BYTE_ORDER_MAGIC):
                cap.byte_order = ByteOrder.LITTLE
            elif bom == struct.pack(">I", BYTE_ORDER_MAGIC):
                cap.byte_order = ByteOrder.BIG
            else:
                raise UnknownMagic(f"bad byte-order magic at offset {off}")
            prefix = cap.byte_order.prefix
            u32 = struct.Struct(prefix + "I")
            epb = struct.Struct(prefix + "IIIII")
            cap.interfaces = []
        (blen,) = u32.unpack_from(data, off + 4)
        if blen < 12 or blen % 4:
            raise LengthMismatch(f"invalid block length {blen} at offset {off}")
        if off + blen > end:
            raise TruncatedBlock(f"block at offset {off} extends past end of file")
        (trailer,) = u32.unpack_from(data, off + blen - 4)
        if trailer != blen:
            raise LengthMismatch(f"block at offset {off}: leading length {blen} != trailing {trailer}")
        body, body_end = off + 8, off + blen - 4

        if btype == BLK_ENHANCED_PACKET:
            if body + 20 > body_end:
                raise TruncatedBlock(f"enhanced packet block at offset {off} is too short")
            iface_id, ts_hi, ts_lo, caplen, orig = epb.unpack_from(data, body)
            if iface_id >= len(cap.interfaces):
                raise MissingInterface(f"packet references undeclared interface {iface_id}")
            if body + 20 + caplen > body_end:
                raise TruncatedBlock(f"captured length {caplen} exceeds block at offset {off}")
            pkt = bytes(data[body + 20:body + 20 + caplen])
            res = cap.interfaces[iface_id].ts_resolution
            yield RawPacket(pkt, (ts_hi << 32) | ts_lo, res, iface_id, orig)
        elif btype == BLK_SIMPLE_PACKET:
            if not cap.interfaces:
                raise MissingInterface("simple packet block before any interface")
            (orig,) = u32.unpack_from(data, body)
            iface = cap.interfaces[0]
            caplen = min(orig, body_end - body - 4)
            if iface.snap_len:
                caplen = min(caplen, iface.snap_len)
            pkt = bytes(data[body + 4:body + 4 + caplen])
            yield RawPacket(pkt, 0, iface.ts_resolution, 0, orig)
        elif btype == BLK_INTERFACE:
            if body + 8 > body_end:
                raise TruncatedBlock(f"interface block at offset {off} is too short")
            link_type, _reserved, snap_len = struct.unpack_from(prefix + "HHI", data, body)
            opts = _parse_options(data, body + 8, body_end, prefix)
            res = MICRO
            if OPT_IF_TSRESOL in opts and opts[OPT_IF_TSRESOL]:
                res = tsresol_to_fraction(opts[OPT_IF_TSRESOL][0])
            cap.interfaces.append(InterfaceInfo(link_type, res, snap_len))
        elif btype != BLK_SECTION_HEADER:
            logger.debug("skipping block type %#x at offset %d", btype, off)
        off += blen

"""Link, network and transport header decoding."""
from __future__ import annotations

import enum
import ipaddress
import struct
from typing import NamedTuple, Optional, Union

from ..errors import MalformedHeader

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LINUX_SLL = 113

ETH_IPV4 = 0x0800
ETH_IPV6 = 0x86DD
ETH_VLAN = 0x8100

PROTO_TCP = 6
PROTO_UDP = 17

# IPv6 next-header values that introduce an extension header.
IPV6_EXTENSIONS = frozenset({0, 43, 44, 50, 51, 60, 135, 139, 140, 253, 254})

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]


class Transport(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"


class TCPFlags(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20
    ECE = 0x40
    CWR = 0x80


class PacketRecord(NamedTuple):
    timestamp: float
    src_addr: IPAddress
    dst_addr: IPAddress
    src_port: int
    dst_port: int
    transport: Transport
    wire_len: int
    payload_len: int
    tcp_flags: Optional[TCPFlags] = None


def decode_packet(frame: bytes, link_type: int, timestamp: float = 0.0,
                  wire_len: int | None = None) -> PacketRecord | None:
    """Decode one captured frame; return ``None`` for frames we skip.

    ``wire_len`` is the original on-the-wire length.  Declared IP/UDP lengths
    are checked against it rather than against the captured bytes, so frames
    truncated by the snap length still report their true payload size.
    Headers themselves must be fully captured.
    """
    if wire_len is None:
        wire_len = len(frame)
    wire_len = max(wire_len, len(frame))

    if link_type == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            raise MalformedHeader("ethernet header truncated")
        (ethertype,) = struct.unpack_from("!H", frame, 12)
        off = 14
        if ethertype == ETH_VLAN:
            if len(frame) < 18:
                raise MalformedHeader("802.1Q tag truncated")
            (ethertype,) = struct.unpack_from("!H", frame, 16)
            off = 18
        if ethertype == ETH_IPV4:
            version = 4
        elif ethertype == ETH_IPV6:
            version = 6
        else:
            return None
    elif link_type == LINKTYPE_LINUX_SLL:
        if len(frame) < 16:
            raise MalformedHeader("linux cooked header truncated")
        (ethertype,) = struct.unpack_from("!H", frame, 14)
        off = 16
        if ethertype == ETH_IPV4:
            version = 4
        elif ethertype == ETH_IPV6:
            version = 6
        else:
            return None
    elif link_type == LINKTYPE_RAW:
        if not frame:
            raise MalformedHeader("empty raw IP frame")
        off = 0
        version = frame[0] >> 4
        if version not in (4, 6):
            return None
    else:
        return None

    available = wire_len - off
    if version == 4:
        return _decode_ipv4(frame, off, available, timestamp, wire_len)
    return _decode_ipv6(frame, off, available, timestamp, wire_len)


def _decode_ipv4(frame, off, available, timestamp, wire_len):
    if len(frame) < off + 20:
        raise MalformedHeader("IPv4 header truncated")
    vihl = frame[off]
    if vihl >> 4 != 4:
        raise MalformedHeader(f"IP version {vihl >> 4} in an IPv4 frame")
    ihl = (vihl & 0x0F) * 4
    total_len, frag, proto = struct.unpack_from("!H2xHxB", frame, off + 2)
    if ihl < 20 or len(frame) < off + ihl:
        raise MalformedHeader(f"bad IPv4 header length {ihl}")
    if total_len < ihl or total_len > available:
        raise MalformedHeader(f"IPv4 total length {total_len} inconsistent with frame")
    if frag & 0x1FFF:
        return None
    src = ipaddress.IPv4Address(frame[off + 12:off + 16])
    dst = ipaddress.IPv4Address(frame[off + 16:off + 20])
    return _decode_transport(frame, off + ihl, total_len - ihl, proto, src, dst,
                             timestamp, wire_len)


def _decode_ipv6(frame, off, available, timestamp, wire_len):
    if len(frame) < off + 40:
        raise MalformedHeader("IPv6 header truncated")
    if frame[off] >> 4 != 6:
        raise MalformedHeader(f"IP version {frame[off] >> 4} in an IPv6 frame")
    plen, nxt = struct.unpack_from("!HB", frame, off + 4)
    if 40 + plen > available:
        raise MalformedHeader(f"IPv6 payload length {plen} exceeds frame")
    if nxt in IPV6_EXTENSIONS:
        return None
    src = ipaddress.IPv6Address(frame[off + 8:off + 24])
    dst = ipaddress.IPv6Address(frame[off + 24:off + 40])
    return _decode_transport(frame, off + 40, plen, nxt, src, dst, timestamp, wire_len)


def _decode_transport(frame, off, ip_payload, proto, src, dst, timestamp, wire_len):
    if proto == PROTO_TCP:
        if ip_payload < 20 or len(frame) < off + 20:
            raise MalformedHeader("TCP header truncated")
        sport, dport, doff_byte, flags = struct.unpack_from("!HH8xBB", frame, off)
        doff = (doff_byte >> 4) * 4
        if doff < 20 or doff > ip_payload or len(frame) < off + doff:
            raise MalformedHeader(f"bad TCP data offset {doff}")
        return PacketRecord(timestamp, src, dst, sport, dport, Transport.TCP, wire_len,
                            ip_payload - doff, TCPFlags(flags))
    if proto == PROTO_UDP:
        if ip_payload < 8 or len(frame) < off + 8:
            raise MalformedHeader("UDP header truncated")
        sport, dport, ulen = struct.unpack_from("!HHH", frame, off)
        if ulen < 8 or ulen > ip_payload:
            raise MalformedHeader(f"bad UDP length {ulen}")
        return PacketRecord(timestamp, src, dst, sport, dport, Transport.UDP, wire_len, ulen - 8)
    return PacketRecord(timestamp, src, dst, 0, 0, Transport.OTHER, wire_len, ip_payload)

"""Capture ingestion: container parsing, header decoding and writing."""
from .decode import (
    LINKTYPE_ETHERNET,
    LINKTYPE_LINUX_SLL,
    LINKTYPE_RAW,
    PacketRecord,
    TCPFlags,
    Transport,
    decode_packet,
)
from .reader import (
    ByteOrder,
    CaptureFile,
    CaptureFormat,
    InterfaceInfo,
    RawPacket,
    detect_format,
    open_capture,
    read_packets,
)
from .writer import FrameRecord, write_pcap, write_pcapng

__all__ = [
    "ByteOrder", "CaptureFile", "CaptureFormat", "FrameRecord", "InterfaceInfo",
    "LINKTYPE_ETHERNET", "LINKTYPE_LINUX_SLL", "LINKTYPE_RAW", "PacketRecord",
    "RawPacket", "TCPFlags", "Transport", "decode_packet", "decode_capture",
    "detect_format", "open_capture", "read_packets", "write_pcap", "write_pcapng",
]


def decode_capture(capture, stats: dict | None = None):
    """Read and decode every packet of a capture, skipping undecodable frames.

    ``stats`` (if given) receives ``packets``, ``decoded`` and ``skipped``
    counts.  MalformedHeader propagates.
    """
    cap = capture if isinstance(capture, CaptureFile) else open_capture(capture)
    counts = {"packets": 0, "decoded": 0, "skipped": 0}
    for raw in read_packets(cap):
        counts["packets"] += 1
        rec = decode_packet(raw.data, cap.interfaces[raw.interface].link_type,
                            raw.timestamp, raw.wire_len)
        if rec is None:
            counts["skipped"] += 1
            continue
        counts["decoded"] += 1
        yield rec
    if stats is not None:
        stats.update(counts)

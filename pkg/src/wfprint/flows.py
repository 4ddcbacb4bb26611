"""Bidirectional flow assembly over decoded packets."""
from __future__ import annotations

import csv
import datetime as dt
import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .capture.decode import IPAddress, PacketRecord, TCPFlags, Transport

DEFAULT_IDLE_TIMEOUT = 120.0
DEFAULT_ACTIVE_TIMEOUT = 3600.0


class Termination(str, enum.Enum):
    IDLE_TIMEOUT = "IDLE_TIMEOUT"
    ACTIVE_TIMEOUT = "ACTIVE_TIMEOUT"
    TCP_CLOSE = "TCP_CLOSE"
    END_OF_CAPTURE = "END_OF_CAPTURE"


class FlowKey(NamedTuple):
    addr_a: IPAddress
    port_a: int
    addr_b: IPAddress
    port_b: int
    transport: Transport

    def sort_key(self) -> tuple:
        return (self.addr_a.version, self.addr_a.packed, self.port_a,
                self.addr_b.packed, self.port_b, self.transport.value)


def canonical_key(pkt: PacketRecord) -> tuple[FlowKey, bool]:
    """Return the direction-free key and whether the packet's source is side A."""
    src = (pkt.src_addr.packed, pkt.src_port)
    dst = (pkt.dst_addr.packed, pkt.dst_port)
    if src <= dst:
        return FlowKey(pkt.src_addr, pkt.src_port, pkt.dst_addr, pkt.dst_port, pkt.transport), True
    return FlowKey(pkt.dst_addr, pkt.dst_port, pkt.src_addr, pkt.src_port, pkt.transport), False


@dataclass
class Flow:
    key: FlowKey
    initiator: tuple[IPAddress, int]
    first_ts: float
    last_ts: float
    fwd_packets: int = 0
    bwd_packets: int = 0
    fwd_bytes: int = 0
    bwd_bytes: int = 0
    fwd_payload_bytes: int = 0
    bwd_payload_bytes: int = 0
    termination: Termination = Termination.END_OF_CAPTURE

    @property
    def responder(self) -> tuple[IPAddress, int]:
        if self.initiator == (self.key.addr_a, self.key.port_a):
            return self.key.addr_b, self.key.port_b
        return self.key.addr_a, self.key.port_a

    @property
    def total_packets(self) -> int:
        return self.fwd_packets + self.bwd_packets

    def endpoints(self) -> tuple[IPAddress, IPAddress]:
        return self.key.addr_a, self.key.addr_b


@dataclass
class _Open:
    flow: Flow
    fin_fwd: bool = False
    fin_bwd: bool = False


@dataclass
class FlowAssembler:
    """Stateful fold turning a packet stream into flows.

    Feed packets with :meth:`add`, then call :meth:`finish` to flush the
    remaining open flows.  ``dropped`` counts non TCP/UDP packets.
    """

    idle_timeout: float = DEFAULT_IDLE_TIMEOUT
    active_timeout: float = DEFAULT_ACTIVE_TIMEOUT
    honor_tcp_close: bool = True
    dropped: int = 0
    seen: int = 0
    _open: dict = field(default_factory=dict, repr=False)
    _done: list = field(default_factory=list, repr=False)

    def add(self, pkt: PacketRecord) -> None:
        self.seen += 1
        if pkt.transport is Transport.OTHER:
            self.dropped += 1
            return
        key, _ = canonical_key(pkt)
        ts = pkt.timestamp
        state = self._open.get(key)
        if state is not None:
            flow = state.flow
            if ts - flow.last_ts > self.idle_timeout:
                flow.termination = Termination.IDLE_TIMEOUT
                self._emit(key)
                state = None
            elif ts - flow.first_ts > self.active_timeout:
                flow.termination = Termination.ACTIVE_TIMEOUT
                self._emit(key)
                state = None
        if state is None:
            flow = Flow(key, (pkt.src_addr, pkt.src_port), ts, ts)
            state = self._open[key] = _Open(flow)
        flow = state.flow
        forward = (pkt.src_addr, pkt.src_port) == flow.initiator
        if forward:
            flow.fwd_packets += 1
            flow.fwd_bytes += pkt.wire_len
            flow.fwd_payload_bytes += pkt.payload_len
        else:
            flow.bwd_packets += 1
            flow.bwd_bytes += pkt.wire_len
            flow.bwd_payload_bytes += pkt.payload_len
        flow.first_ts = min(flow.first_ts, ts)
        flow.last_ts = max(flow.last_ts, ts)

        if self.honor_tcp_close and pkt.tcp_flags is not None:
            flags = pkt.tcp_flags
            if flags & TCPFlags.FIN:
                if forward:
                    state.fin_fwd = True
                else:
                    state.fin_bwd = True
            if flags & TCPFlags.RST or (state.fin_fwd and state.fin_bwd):
                flow.termination = Termination.TCP_CLOSE
                self._emit(key)

    def _emit(self, key: FlowKey) -> None:
        self._done.append(self._open.pop(key).flow)

    def finish(self) -> list[Flow]:
        """Flush open flows and return every flow in emission order."""
        for key in list(self._open):
            self._open[key].flow.termination = Termination.END_OF_CAPTURE
            self._emit(key)
        flows = sorted(self._done, key=lambda f: (f.first_ts, f.key.sort_key()))
        self._done = []
        return flows


def assemble(packets: Iterable[PacketRecord], idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
             active_timeout: float = DEFAULT_ACTIVE_TIMEOUT, honor_tcp_close: bool = True) -> list[Flow]:
    asm = FlowAssembler(idle_timeout, active_timeout, honor_tcp_close)
    for pkt in packets:
        asm.add(pkt)
    return asm.finish()


@dataclass(frozen=True)
class FlowStats:
    packet_total: int
    flow_total: int
    per_day: list[tuple[dt.date, int, int]]


def flow_stats(flows: Iterable[Flow]) -> FlowStats:
    days: dict[dt.date, list[int]] = {}
    packets = count = 0
    for flow in flows:
        n = flow.fwd_packets + flow.bwd_packets
        packets += n
        count += 1
        day = dt.datetime.fromtimestamp(flow.first_ts, tz=dt.timezone.utc).date()
        bucket = days.setdefault(day, [0, 0])
        bucket[0] += n
        bucket[1] += 1
    return FlowStats(packets, count, [(d, p, f) for d, (p, f) in sorted(days.items())])


def format_flow_stats(stats: FlowStats) -> str:
    """Render per-day packet/flow counts as an aligned table."""
    rows = [("Time", "Packet number", "Flow number")]
    for i, (day, p, f) in enumerate(stats.per_day, 1):
        rows.append((f"Day {i} ({day.isoformat()})", str(p), str(f)))
    rows.append(("Total", str(stats.packet_total), str(stats.flow_total)))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


FLOW_CSV_COLUMNS = (
    "addr_a", "port_a", "addr_b", "port_b", "transport", "initiator_addr", "initiator_port",
    "first_ts", "last_ts", "fwd_packets", "bwd_packets", "fwd_bytes", "bwd_bytes",
    "fwd_payload_bytes", "bwd_payload_bytes", "termination",
)


def write_flows_csv(fh, flows: Iterable[Flow]) -> None:
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(FLOW_CSV_COLUMNS)
    for f in flows:
        k = f.key
        w.writerow([k.addr_a, k.port_a, k.addr_b, k.port_b, k.transport.value,
                    f.initiator[0], f.initiator[1], repr(f.first_ts), repr(f.last_ts),
                    f.fwd_packets, f.bwd_packets, f.fwd_bytes, f.bwd_bytes,
                    f.fwd_payload_bytes, f.bwd_payload_bytes, f.termination.value])


def read_flows_csv(fh) -> list[Flow]:
    from .errors import HeaderMismatch

    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header) != FLOW_CSV_COLUMNS:
        raise HeaderMismatch(f"unexpected flow CSV header: {header}")
    flows = []
    for row in reader:
        if not row:
            continue
        r = dict(zip(FLOW_CSV_COLUMNS, row))
        key = FlowKey(ipaddress.ip_address(r["addr_a"]), int(r["port_a"]),
                      ipaddress.ip_address(r["addr_b"]), int(r["port_b"]), Transport(r["transport"]))
        flows.append(Flow(
            key, (ipaddress.ip_address(r["initiator_addr"]), int(r["initiator_port"])),
            float(r["first_ts"]), float(r["last_ts"]),
            int(r["fwd_packets"]), int(r["bwd_packets"]), int(r["fwd_bytes"]), int(r["bwd_bytes"]),
            int(r["fwd_payload_bytes"]), int(r["bwd_payload_bytes"]), Termination(r["termination"]),
        ))
    return flows

"""Synthetic closed-world traffic with known ground truth.

Two generators share the same per-site parameters: :func:`generate_capture`
renders TCP conversations into a pcapng file, :func:`generate_dataset`
samples feature vectors directly.
"""
from __future__ import annotations

import csv
import io
import ipaddress
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .capture.reader import ByteOrder, CaptureFormat
from .capture.writer import FrameRecord, write_pcap, write_pcapng
from .dataset import TARGETED, UNTARGETED, LabeledDataset, MonitoredList, largest_remainder
from .features import from_counters

MSS = 1460
HEADER_BYTES = 14 + 20 + 20
MAX_DURATION = 60.0
MIN_DURATION = 1e-3
DEFAULT_START = 1_700_000_000  # seconds since epoch

# log-space centre of the per-site parameters
_CENTRE = {
    "duration": math.log(0.8),
    "fwd_bytes": math.log(4000.0),
    "bwd_bytes": math.log(40000.0),
    "fwd_packets": math.log(12.0),
    "bwd_packets": math.log(30.0),
}
_PARAMS = tuple(_CENTRE)


@dataclass(frozen=True)
class SiteProfile:
    """Per-site flow distributions.

    ``duration``, ``fwd_bytes`` and ``bwd_bytes`` are log-normal ``(mu,
    sigma)`` pairs; packet counts are ``1 + Poisson(mean)``.  Sampled
    datasets use the byte totals as wire lengths directly, rendered
    captures use them as TCP payload totals (headers and handshake
    packets come on top).
    """

    site_label: str
    addresses: tuple[str, ...]
    flows_per_visit: tuple[int, int] = (1, 3)
    duration: tuple[float, float] = (_CENTRE["duration"], 0.25)
    fwd_bytes: tuple[float, float] = (_CENTRE["fwd_bytes"], 0.25)
    bwd_bytes: tuple[float, float] = (_CENTRE["bwd_bytes"], 0.25)
    fwd_packets: float = 12.0
    bwd_packets: float = 30.0
    noise_scale: float = 1.0
    targeted: bool = True

    def __post_init__(self):
        values = [*self.duration, *self.fwd_bytes, *self.bwd_bytes, self.fwd_packets,
                  self.bwd_packets, self.noise_scale]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("profile parameters must be finite")
        if self.noise_scale < 0 or min(self.duration[1], self.fwd_bytes[1], self.bwd_bytes[1]) < 0:
            raise ValueError("sigmas and noise_scale must be >= 0")
        if self.fwd_packets <= 0 or self.bwd_packets <= 0:
            raise ValueError("packet-count means must be positive")
        lo, hi = self.flows_per_visit
        if not 1 <= lo <= hi:
            raise ValueError(f"flows_per_visit must satisfy 1 <= lo <= hi, got {self.flows_per_visit}")
        if not self.addresses:
            raise ValueError("a profile needs at least one address")

    def log_params(self) -> dict[str, float]:
        return {"duration": self.duration[0], "fwd_bytes": self.fwd_bytes[0],
                "bwd_bytes": self.bwd_bytes[0], "fwd_packets": math.log(self.fwd_packets),
                "bwd_packets": math.log(self.bwd_packets)}

    def log_sigmas(self) -> dict[str, float]:
        s = self.noise_scale
        return {"duration": self.duration[1] * s, "fwd_bytes": self.fwd_bytes[1] * s,
                "bwd_bytes": self.bwd_bytes[1] * s}


def _spread_directions(n: int, dim: int, rng, oversample: int = 32) -> np.ndarray:
    """Unit vectors picked greedily (farthest point first) from random candidates."""
    cand = rng.normal(size=(max(n * oversample, 1), dim))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    chosen = [0]
    dmin = np.linalg.norm(cand - cand[0], axis=1)
    while len(chosen) < n:
        j = int(np.argmax(dmin))
        chosen.append(j)
        dmin = np.minimum(dmin, np.linalg.norm(cand - cand[j], axis=1))
    return cand[chosen]


def make_profiles(n_sites: int, seed: int, n_untargeted: int = 0, spread: float = 0.5,
                  sigma: float = 0.25, flows_per_visit=(1, 3)) -> list[SiteProfile]:
    """Random site profiles whose log-parameters lie on a sphere of radius ``spread``.

    Directions are chosen to be mutually far apart, so site separation
    grows evenly with the separability factor used at sampling time.

    The last ``n_untargeted`` profiles are marked untargeted.  Site ``i``
    gets addresses in 198.18.i.0/24 (plus 198.19.x.0/24 beyond 256 sites).
    """
    if n_sites < 1 or not 0 <= n_untargeted <= n_sites:
        raise ValueError("need n_sites >= 1 and 0 <= n_untargeted <= n_sites")
    rng = np.random.default_rng(seed)
    dirs = _spread_directions(n_sites, len(_PARAMS), rng)
    profiles = []
    for i in range(n_sites):
        u = spread * dirs[i]
        p = {name: _CENTRE[name] + u[j] for j, name in enumerate(_PARAMS)}
        net = ipaddress.IPv4Address("198.18.0.0") + (i << 8)
        profiles.append(SiteProfile(
            site_label=f"site{i:02d}",
            addresses=(str(net + 10), str(net + 11)),
            flows_per_visit=tuple(flows_per_visit),
            duration=(p["duration"], sigma),
            fwd_bytes=(p["fwd_bytes"], sigma),
            bwd_bytes=(p["bwd_bytes"], sigma),
            fwd_packets=math.exp(p["fwd_packets"]),
            bwd_packets=math.exp(p["bwd_packets"]),
            targeted=i < n_sites - n_untargeted,
        ))
    return profiles


@dataclass(frozen=True)
class SiteDistribution:
    """Effective sampling parameters of one site at a given separability."""

    site_label: str
    targeted: bool
    log_mean: dict
    log_sigma: dict

    @property
    def poisson(self) -> dict:
        return {k: math.exp(self.log_mean[k]) for k in ("fwd_packets", "bwd_packets")}

    def expected(self, name: str) -> tuple[float, float]:
        """Mean and standard deviation of a sampled raw counter."""
        if name in ("fwd_packets", "bwd_packets"):
            lam = math.exp(self.log_mean[name])
            return 1.0 + lam, math.sqrt(lam)
        mu, s = self.log_mean[name], self.log_sigma[name]
        mean = math.exp(mu + s * s / 2)
        return mean, math.sqrt(math.expm1(s * s)) * mean


def site_distributions(profiles, separability: float) -> list[SiteDistribution]:
    """Shrink (or stretch) every profile towards the pooled centre by ``separability``.

    Separability 0 makes all sites identical; 1 reproduces the profiles.
    Sigmas are interpolated in log space so they stay positive.
    """
    if separability < 0:
        raise ValueError("separability must be >= 0")
    logs = [p.log_params() for p in profiles]
    centre = {k: float(np.mean([lp[k] for lp in logs])) for k in _PARAMS}
    sig = [p.log_sigmas() for p in profiles]
    out = []
    for p, lp, sp in zip(profiles, logs, sig):
        mean = {k: centre[k] + separability * (lp[k] - centre[k]) for k in _PARAMS}
        sigma = {}
        for k in sp:
            vals = [s[k] for s in sig]
            if min(vals) <= 0:
                sigma[k] = float(np.mean(vals)) if separability == 0 else sp[k]
            else:
                lc = float(np.mean(np.log(vals)))
                sigma[k] = math.exp(lc + separability * (math.log(sp[k]) - lc))
        out.append(SiteDistribution(p.site_label, p.targeted, mean, sigma))
    return out


def _sample_counters(dist: SiteDistribution, rng, n: int) -> dict[str, np.ndarray]:
    out = {}
    for k in ("duration", "fwd_bytes", "bwd_bytes"):
        out[k] = np.exp(rng.normal(dist.log_mean[k], dist.log_sigma[k], n))
    for k, lam in dist.poisson.items():
        out[k] = 1 + rng.poisson(lam, n)
    return out


def generate_dataset(profiles, rows_per_class: int, separability: float = 1.0,
                     imbalance: float | None = None, seed: int = 0) -> LabeledDataset:
    """Sample feature rows directly from the per-site distributions.

    Without ``imbalance`` every profile contributes ``rows_per_class`` rows.
    With it, the same total is re-apportioned so that a fraction
    ``imbalance`` of rows come from targeted profiles.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one profile")
    dists = site_distributions(profiles, separability)
    total = rows_per_class * len(profiles)
    if imbalance is None:
        counts = [rows_per_class] * len(profiles)
    else:
        tgt = [i for i, p in enumerate(profiles) if p.targeted]
        unt = [i for i, p in enumerate(profiles) if not p.targeted]
        if not tgt or not unt:
            raise ValueError("imbalance needs both targeted and untargeted profiles")
        n_t = round(imbalance * total)
        counts = [0] * len(profiles)
        for group, n in ((tgt, n_t), (unt, total - n_t)):
            for i, c in zip(group, largest_remainder(n, [1 / len(group)] * len(group))):
                counts[i] = c
    rng = np.random.default_rng(seed)
    rows, binary, site = [], [], []
    for dist, n in zip(dists, counts):
        c = _sample_counters(dist, rng, n)
        for j in range(n):
            rows.append(from_counters(c["duration"][j], c["fwd_packets"][j], c["bwd_packets"][j],
                                      c["fwd_bytes"][j], c["bwd_bytes"][j]))
            binary.append(TARGETED if dist.targeted else UNTARGETED)
            site.append(dist.site_label if dist.targeted else None)
    order = rng.permutation(len(rows))
    X = np.asarray(rows, dtype=float).reshape(-1, 8)[order]
    return LabeledDataset(X, np.asarray(binary, dtype=object)[order], np.asarray(site, dtype=object)[order])


# --------------------------------------------------------------------------
# Packet-level generation
# --------------------------------------------------------------------------

SYN, ACK, PSH, FIN = 0x02, 0x10, 0x08, 0x01
CLIENT_MAC = bytes.fromhex("020000000001")
SERVER_MAC = bytes.fromhex("020000000002")


def _checksum(header: bytes) -> int:
    s = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def tcp_frame(src: str, dst: str, sport: int, dport: int, flags: int, payload_len: int,
              seq: int = 0, ack: int = 0, ip_id: int = 0, from_client: bool = True) -> bytes:
    """Ethernet + IPv4 + TCP frame with a zero-filled payload."""
    s, d = ipaddress.IPv4Address(src).packed, ipaddress.IPv4Address(dst).packed
    total = 40 + payload_len
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, ip_id & 0xFFFF, 0x4000, 64, 6, 0, s, d)
    ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]
    tcp = struct.pack("!HHIIBBHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                      5 << 4, flags, 65535, 0, 0)
    macs = SERVER_MAC + CLIENT_MAC if from_client else CLIENT_MAC + SERVER_MAC
    return macs + b"\x08\x00" + ip + tcp + bytes(payload_len)


def _split_payload(total: int, n: int) -> list[int]:
    if n == 0:
        return []
    base, extra = divmod(total, n)
    return [base + (i < extra) for i in range(n)]


@dataclass
class SynthFlow:
    site_label: str | None
    client: tuple[str, int]
    server: tuple[str, int]
    start_ticks: int
    packets: list = field(default_factory=list)  # (ticks, frame)


@dataclass
class SynthCapture:
    frames: list[FrameRecord]
    flows: list[SynthFlow]
    monitored: MonitoredList

    @property
    def truth(self) -> list[tuple[int, str | None]]:
        return [(i, f.site_label) for i, f in enumerate(self.flows)]

    def to_bytes(self, fmt: CaptureFormat = CaptureFormat.PCAPNG,
                 byte_order: ByteOrder = ByteOrder.LITTLE) -> bytes:
        buf = io.BytesIO()
        if fmt is CaptureFormat.PCAPNG:
            write_pcapng(buf, self.frames, byte_order=byte_order)
        elif fmt is CaptureFormat.PCAP_US:
            write_pcap(buf, self.frames, byte_order=byte_order)
        else:
            frames = [FrameRecord(f.ticks * 1000, f.data, f.wire_len) for f in self.frames]
            write_pcap(buf, frames, byte_order=byte_order, nanosecond=True)
        return buf.getvalue()

    def truth_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(("flow_index", "site_label"))
        for i, lab in self.truth:
            w.writerow((i, lab or ""))
        return buf.getvalue()


def _render_flow(flow: SynthFlow, dist: SiteDistribution, rng) -> None:
    lam_f, lam_b = dist.poisson["fwd_packets"], dist.poisson["bwd_packets"]
    fwd_data = int(rng.poisson(lam_f))
    bwd_data = int(rng.poisson(lam_b))
    fwd_payload = int(np.exp(rng.normal(dist.log_mean["fwd_bytes"], dist.log_sigma["fwd_bytes"])))
    bwd_payload = int(np.exp(rng.normal(dist.log_mean["bwd_bytes"], dist.log_sigma["bwd_bytes"])))
    if fwd_data:
        fwd_data = max(fwd_data, -(-fwd_payload // MSS))
    if bwd_data:
        bwd_data = max(bwd_data, -(-bwd_payload // MSS))
    duration = float(np.exp(rng.normal(dist.log_mean["duration"], dist.log_sigma["duration"])))
    duration = min(max(duration, MIN_DURATION), MAX_DURATION)

    data = [(True, n) for n in _split_payload(fwd_payload if fwd_data else 0, fwd_data)]
    data += [(False, n) for n in _split_payload(bwd_payload if bwd_data else 0, bwd_data)]
    data = [data[i] for i in rng.permutation(len(data))]
    plan = [(True, SYN, 0), (False, SYN | ACK, 0), (True, ACK, 0)]
    plan += [(fwd, PSH | ACK, n) for fwd, n in data]
    plan += [(True, FIN | ACK, 0), (False, FIN | ACK, 0)]

    span = int(round(duration * 1e6))
    offsets = np.sort(rng.integers(0, span + 1, len(plan)))
    offsets[0], offsets[-1] = 0, span
    offsets = np.maximum.accumulate(offsets)

    (caddr, cport), (saddr, sport) = flow.client, flow.server
    cseq, sseq = int(rng.integers(0, 2**32)), int(rng.integers(0, 2**32))
    for (fwd, flags, n), off in zip(plan, offsets):
        if fwd:
            frame = tcp_frame(caddr, saddr, cport, sport, flags, n, cseq, sseq)
            cseq += n + (1 if flags & (SYN | FIN) else 0)
        else:
            frame = tcp_frame(saddr, caddr, sport, cport, flags, n, sseq, cseq, from_client=False)
            sseq += n + (1 if flags & (SYN | FIN) else 0)
        flow.packets.append((flow.start_ticks + int(off), frame))


def synthesize(profiles, visits: int, seed: int, separability: float = 1.0,
               start: int = DEFAULT_START) -> SynthCapture:
    """Build frames for ``visits`` visits to every profile, in random visit order."""
    profiles = list(profiles)
    if not profiles or visits < 1:
        raise ValueError("need at least one profile and one visit")
    dists = site_distributions(profiles, separability)
    rng = np.random.default_rng(seed)
    schedule = [i for i in range(len(profiles)) for _ in range(visits)]
    schedule = [schedule[i] for i in rng.permutation(len(schedule))]
    clock = start * 10**6
    port_counter = 0
    flows: list[SynthFlow] = []
    for site_idx in schedule:
        prof, dist = profiles[site_idx], dists[site_idx]
        lo, hi = prof.flows_per_visit
        for _ in range(int(rng.integers(lo, hi + 1))):
            clock += int(rng.integers(1_000, 200_000))
            port_counter += 1
            client = (f"10.0.{(port_counter // 60000) % 256}.2", 1024 + port_counter % 60000)
            server = (str(prof.addresses[int(rng.integers(0, len(prof.addresses)))]), 443)
            flow = SynthFlow(prof.site_label if prof.targeted else None, client, server, clock)
            _render_flow(flow, dist, rng)
            flows.append(flow)
        clock += int(rng.integers(2_000_000, 10_000_000))
    packets = sorted(((t, i, j, fr) for i, f in enumerate(flows) for j, (t, fr) in enumerate(f.packets)))
    frames = [FrameRecord(t, fr) for t, _, _, fr in packets]
    monitored = MonitoredList.from_pairs((p.site_label, a) for p in profiles if p.targeted for a in p.addresses)
    return SynthCapture(frames, flows, monitored)


def generate_capture(profiles, visits: int, seed: int, separability: float = 1.0,
                     fmt: CaptureFormat = CaptureFormat.PCAPNG,
                     byte_order: ByteOrder = ByteOrder.LITTLE) -> tuple[bytes, MonitoredList, SynthCapture]:
    """Render a capture; returns (file bytes, monitored list, generation record with ground truth)."""
    cap = synthesize(profiles, visits, seed, separability)
    return cap.to_bytes(fmt, byte_order), cap.monitored, cap

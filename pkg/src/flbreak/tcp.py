"""Simplified reliable transport with the connection-management tunables
that matter for bursty, idle-heavy workloads.

Modeled mechanisms: SYN/SYN-ACK handshake with exponential retry, an
application-level connect deadline, cumulative ACKs with optional selective
acknowledgment, a single retransmission timer for the oldest unacked
segment with doubling backoff, keepalive probing of idle peers, a bounded
out-of-order reassembly buffer, and a listen backlog cap.

Deliberately absent: congestion control, Nagle, delayed ACKs, connection
teardown handshakes. Windows are limited purely by rmem/wmem flow control.

Sequence numbers count payload bytes from 0 per direction; control segments
consume no sequence space. Application message boundaries ride as push
marks on data segments, so delivery order equals send order and no wire
bytes are spent on framing.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from pydantic import AliasChoices, BaseModel, ConfigDict, Field

from .link import LinkPath, Packet
from .sim import EventHandle, Simulator

MSS = 1448
HEADER_BYTES = 40
RTO_CAP = 120.0
UNSCALED_WINDOW_MAX = 65535
SACK_BLOCKS = 4  # ranges reported per ACK
RETX_BATCH = 2  # un-SACKed segments retransmitted per timeout in SACK mode


# config files may use the sysctl spellings interchangeably with field names
SYSCTL_ALIASES = {
    "tcp_syn_retries": "syn_retries",
    "tcp_synack_retries": "synack_retries",
    "tcp_keepalive_time": "keepalive_time",
    "tcp_keepalive_intvl": "keepalive_intvl",
    "tcp_keepalive_probes": "keepalive_probes",
    "tcp_retries2": "retries2",
    "tcp_rmem": "rmem_bytes",
    "tcp_wmem": "wmem_bytes",
    "tcp_max_syn_backlog": "max_syn_backlog",
    "tcp_sack": "sack_enabled",
    "tcp_window_scaling": "window_scaling",
}


def _with_sysctl_alias(name: str, **kw):
    sysctl = next(alias for alias, field_name in SYSCTL_ALIASES.items() if field_name == name)
    return Field(validation_alias=AliasChoices(name, sysctl), **kw)


class TcpParams(BaseModel):
    """Connection-management tunables, sysctl-style names."""

    model_config = ConfigDict(populate_by_name=True)

    syn_retries: int = _with_sysctl_alias("syn_retries", default=6, ge=0)
    synack_retries: int = _with_sysctl_alias("synack_retries", default=5, ge=0)
    keepalive_time: float = _with_sysctl_alias("keepalive_time", default=7200.0, gt=0.0)
    keepalive_intvl: float = _with_sysctl_alias("keepalive_intvl", default=75.0, gt=0.0)
    keepalive_probes: int = _with_sysctl_alias("keepalive_probes", default=9, ge=0)
    retries2: int = _with_sysctl_alias("retries2", default=15, ge=0)
    rmem_bytes: int = _with_sysctl_alias("rmem_bytes", default=131072, ge=MSS)
    wmem_bytes: int = _with_sysctl_alias("wmem_bytes", default=131072, ge=MSS)
    max_syn_backlog: int = _with_sysctl_alias("max_syn_backlog", default=128, ge=1)
    sack_enabled: bool = _with_sysctl_alias("sack_enabled", default=True)
    window_scaling: bool = _with_sysctl_alias("window_scaling", default=True)
    connect_deadline: float = Field(default=10.0, gt=0.0, description="application-level handshake deadline, seconds")
    initial_rto: float = Field(default=1.0, gt=0.0)


class ConnState(Enum):
    CLOSED = "Closed"
    SYN_SENT = "SynSent"
    SYN_RCVD = "SynReceived"
    ESTABLISHED = "Established"
    ABORTED = "Aborted"


# abort / failure reason tags
CONNECT_TIMEOUT = "ConnectTimeout"
BACKLOG_FULL = "BacklogFull"
RETRIES_EXCEEDED = "RetriesExceeded"
DEAD_PEER = "DeadPeer"


class SegKind(Enum):
    SYN = "Syn"
    SYNACK = "SynAck"
    ACK = "Ack"
    DATA = "Data"
    PROBE = "KeepaliveProbe"
    PROBE_ACK = "ProbeAck"
    RST = "Rst"


@dataclass
class Segment:
    kind: SegKind
    conn_id: str
    src: str
    ack: int = 0
    adv_window: int = 0
    seq: int = 0
    payload: bytes = b""
    reason: str = ""
    ts: float = -1.0  # send timestamp
    echo_ts: float = -1.0  # timestamp echoed back by ACKs for RTT sampling
    sack: tuple = ()  # up to SACK_BLOCKS (start, end) received-out-of-order ranges
    msg_end: int = -1  # stream offset where this segment's message ends (push boundary)

    @property
    def size_bytes(self) -> int:
        return HEADER_BYTES + len(self.payload)


@dataclass
class ConnCounters:
    syn_retransmits: int = 0
    data_retransmits: int = 0
    keepalive_probes_sent: int = 0
    segments_dropped_buffer_full: int = 0
    aborts_by_kind: dict = field(default_factory=dict)

    def record_abort(self, kind: str) -> None:
        self.aborts_by_kind[kind] = self.aborts_by_kind.get(kind, 0) + 1

    def merge(self, other: "ConnCounters") -> None:
        self.syn_retransmits += other.syn_retransmits
        self.data_retransmits += other.data_retransmits
        self.keepalive_probes_sent += other.keepalive_probes_sent
        self.segments_dropped_buffer_full += other.segments_dropped_buffer_full
        for k, v in other.aborts_by_kind.items():
            self.aborts_by_kind[k] = self.aborts_by_kind.get(k, 0) + v


class ConnEnd:
    """One endpoint's half of a connection."""

    def __init__(self, host: "TcpHost", conn_id: str, peer: str, params: TcpParams, is_client: bool):
        self.host = host
        self.sim = host.sim
        self.conn_id = conn_id
        self.peer = peer
        self.params = params
        self.is_client = is_client
        self.state = ConnState.CLOSED
        self.established_at: Optional[float] = None

        # send side
        self.snd_una = 0
        self.snd_nxt = 0
        self._out = bytearray()
        self._out_base = 0  # stream offset of _out[0]
        self._segments: dict[int, int] = {}  # seq -> payload length, unacked
        self.srtt: Optional[float] = None
        self.rto = params.initial_rto
        self.retransmit_count = 0
        self._rto_timer: Optional[EventHandle] = None
        self._dupacks = 0
        self.peer_adv = UNSCALED_WINDOW_MAX

        # receive side
        self.rcv_nxt = 0
        self._reassembly: dict[int, bytes] = {}
        self.reassembly_occupancy = 0
        self._app_in = bytearray()
        self._sack_cache: Optional[tuple] = ()
        self._sacked: set[int] = set()  # sender view: segment starts the peer holds
        self._msg_ends: list[int] = []  # sender: ascending message boundaries
        self._bounds_heap: list[int] = []  # receiver: boundaries seen, pending flush
        self._bounds_seen: set[int] = set()
        self._last_bound = 0

        # handshake timers
        self._syn_attempts = 0
        self._syn_rto = params.initial_rto
        self._syn_timer: Optional[EventHandle] = None
        self._deadline_timer: Optional[EventHandle] = None
        self._connect_started = 0.0
        self._peer_syn_ts = -1.0

        # keepalive
        self.last_receipt = 0.0
        self._ka_timer: Optional[EventHandle] = None
        self._probes_out = 0

        self.counters = ConnCounters()
        self.message_handler: Optional[Callable[[bytes], None]] = None
        self.abort_handler: Optional[Callable[[str], None]] = None
        self.connect_handler: Optional[Callable[["ConnEnd", bool, str], None]] = None
        self.established_handler: Optional[Callable[["ConnEnd"], None]] = None
        self.closed_handler: Optional[Callable[["ConnEnd"], None]] = None

    # ------------------------------------------------------------------ utils

    def _send_segment(self, seg: Segment) -> None:
        self.host.send_to_link(self.peer, seg)

    def _adv_window(self) -> int:
        free = max(0, self.params.rmem_bytes - self.reassembly_occupancy)
        if not self.params.window_scaling:
            free = min(free, UNSCALED_WINDOW_MAX)
        return free

    def _effective_window(self) -> int:
        adv = self.peer_adv
        if not self.params.window_scaling:
            adv = min(adv, UNSCALED_WINDOW_MAX)
        return min(self.params.wmem_bytes, adv)

    def _cancel(self, handle: Optional[EventHandle]) -> None:
        if handle is not None:
            self.sim.cancel(handle)

    # ------------------------------------------------------------- handshake

    def start_connect(self) -> None:
        self.state = ConnState.SYN_SENT
        self._connect_started = self.sim.now()
        self._send_syn(first=True)
        if math.isfinite(self.params.connect_deadline):
            self._deadline_timer = self.sim.schedule_in(self.params.connect_deadline, self._deadline_fired)

    def _send_syn(self, first: bool = False) -> None:
        if not first:
            self.counters.syn_retransmits += 1
        self._send_segment(
            Segment(SegKind.SYN, self.conn_id, self.host.name, adv_window=self._adv_window(), ts=self.sim.now())
        )
        self._syn_timer = self.sim.schedule_in(self._syn_rto, self._syn_timer_fired)

    def _syn_timer_fired(self, _=None) -> None:
        if self.state != ConnState.SYN_SENT:
            return
        if self._syn_attempts >= self.params.syn_retries:
            self._fail_connect(CONNECT_TIMEOUT)
            return
        self._syn_attempts += 1
        self._syn_rto *= 2.0  # SYN backoff is uncapped, matching give-up arithmetic
        self._send_syn()

    def _deadline_fired(self, _=None) -> None:
        # Completion at exactly the deadline still counts: defer the verdict one
        # queue turn so a simultaneous SYN-ACK delivery wins the tie.
        self.sim.schedule(self.sim.now(), self._deadline_verdict)

    def _deadline_verdict(self, _=None) -> None:
        if self.state == ConnState.SYN_SENT:
            self._fail_connect(CONNECT_TIMEOUT)

    def _fail_connect(self, reason: str) -> None:
        self.state = ConnState.ABORTED
        self.counters.record_abort(reason)
        self._cancel(self._syn_timer)
        self._cancel(self._deadline_timer)
        if self.connect_handler:
            self.connect_handler(self, False, reason)

    def _become_established(self) -> None:
        self.state = ConnState.ESTABLISHED
        self.established_at = self.sim.now()
        self.last_receipt = self.sim.now()
        self._cancel(self._syn_timer)
        self._cancel(self._deadline_timer)
        self._arm_keepalive_idle()
        if self.is_client and self.connect_handler:
            self.connect_handler(self, True, "")
        if self.established_handler:
            self.established_handler(self)

    # --------------------------------------------------------------- sending

    def send_message(self, data: bytes) -> None:
        """Queue a message on the outgoing byte stream.

        Boundaries ride as push marks on the data segments, so the receiver
        hands the application whole messages in send order.
        """
        if self.state != ConnState.ESTABLISHED:
            raise RuntimeError(f"send on {self.state.value} connection {self.conn_id}")
        if not data:
            raise ValueError("empty message")
        self._out += data
        self._msg_ends.append(self._out_base + len(self._out))
        self._pump()

    def _pump(self) -> None:
        if self.state != ConnState.ESTABLISHED:
            return
        out_end = self._out_base + len(self._out)
        window = self._effective_window()
        while self.snd_nxt < out_end and (self.snd_nxt - self.snd_una) < window:
            room = window - (self.snd_nxt - self.snd_una)
            length = min(MSS, out_end - self.snd_nxt, room)
            if length <= 0:
                break
            self._segments[self.snd_nxt] = length
            self._transmit_data(self.snd_nxt, length, retransmission=False)
            self.snd_nxt += length
        if self._segments and self._rto_timer is None:
            self._arm_rto()

    def _payload_at(self, seq: int, length: int) -> bytes:
        off = seq - self._out_base
        return bytes(self._out[off : off + length])

    def _transmit_data(self, seq: int, length: int, retransmission: bool) -> None:
        if retransmission:
            self.counters.data_retransmits += 1
        idx = bisect_right(self._msg_ends, seq)
        msg_end = self._msg_ends[idx] if idx < len(self._msg_ends) else -1
        self._send_segment(
            Segment(
                SegKind.DATA,
                self.conn_id,
                self.host.name,
                ack=self.rcv_nxt,
                adv_window=self._adv_window(),
                seq=seq,
                payload=self._payload_at(seq, length),
                ts=self.sim.now(),
                msg_end=msg_end,
            )
        )

    def _arm_rto(self) -> None:
        self._cancel(self._rto_timer)
        self._rto_timer = self.sim.schedule_in(self.rto, self._rto_fired)

    def _rto_fired(self, _=None) -> None:
        self._rto_timer = None
        if self.state != ConnState.ESTABLISHED or not self._segments:
            return
        if self.retransmit_count >= self.params.retries2:
            self._abort(RETRIES_EXCEEDED)
            return
        self.retransmit_count += 1
        if self.params.sack_enabled:
            # resend only known holes, a bounded batch per timeout
            holes = [seq for seq in sorted(self._segments) if seq not in self._sacked][:RETX_BATCH]
            for seq in holes:
                self._transmit_data(seq, self._segments[seq], retransmission=True)
        else:
            # no selective state to lean on: resend the whole unacked window
            for seq in sorted(self._segments):
                self._transmit_data(seq, self._segments[seq], retransmission=True)
        self.rto = min(self.rto * 2.0, RTO_CAP)
        self._arm_rto()

    def _base_rto(self) -> float:
        if self.srtt is None:
            return self.params.initial_rto
        return min(max(self.params.initial_rto, 2.0 * self.srtt), RTO_CAP)

    def _retransmit_now(self) -> None:
        """Path liveness came back (probe exchange): retry immediately."""
        if self.state != ConnState.ESTABLISHED or not self._segments:
            return
        self.rto = self._base_rto()
        self.retransmit_count = 0
        self._transmit_data(self.snd_una, self._segments[self.snd_una], retransmission=True)
        self._arm_rto()

    def _take_rtt_sample(self, seg: Segment) -> None:
        if seg.echo_ts >= 0.0:
            sample = self.sim.now() - seg.echo_ts
            self.srtt = sample if self.srtt is None else 0.875 * self.srtt + 0.125 * sample

    def _apply_sack(self, ranges: tuple) -> None:
        for start, end in ranges:
            seq = start
            while seq < end:
                length = self._segments.get(seq)
                if length is None:
                    break  # boundary mismatch: stale range below una
                self._sacked.add(seq)
                seq += length

    def _handle_ack(self, seg: Segment) -> None:
        self.peer_adv = seg.adv_window
        self._take_rtt_sample(seg)
        if seg.sack:
            self._apply_sack(seg.sack)
        if seg.ack > self.snd_una:
            for seq in list(self._segments):
                if seq + self._segments[seq] <= seg.ack:
                    del self._segments[seq]
                    self._sacked.discard(seq)
            self.snd_una = seg.ack
            trim = self.snd_una - self._out_base
            if trim > 0:
                del self._out[:trim]
                self._out_base = self.snd_una
                del self._msg_ends[: bisect_right(self._msg_ends, self.snd_una)]
            self.retransmit_count = 0
            self._dupacks = 0
            self.rto = self._base_rto()
            self._cancel(self._rto_timer)
            self._rto_timer = None
            if self._segments and self._sacked:
                # partial ack during recovery: the next hole is known, resend now
                self._transmit_data(self.snd_una, self._segments[self.snd_una], retransmission=True)
            self._pump()
            if self._segments and self._rto_timer is None:
                self._arm_rto()
        elif seg.ack == self.snd_una and self._segments:
            self._dupacks += 1
            if self._dupacks >= 3:
                self._dupacks = 0
                self._transmit_data(self.snd_una, self._segments[self.snd_una], retransmission=True)
        # a window update may unblock queued data
        self._pump()

    # -------------------------------------------------------------- receiving

    def _handle_data(self, seg: Segment) -> None:
        if seg.msg_end > self._last_bound and seg.msg_end not in self._bounds_seen:
            self._bounds_seen.add(seg.msg_end)
            heapq.heappush(self._bounds_heap, seg.msg_end)
        if seg.seq == self.rcv_nxt:
            self._app_deliver(seg.payload)
            while self.rcv_nxt in self._reassembly:
                chunk = self._reassembly.pop(self.rcv_nxt)
                self.reassembly_occupancy -= len(chunk)
                self._app_deliver(chunk)
            self._sack_cache = None
            self._flush_messages()
        elif seg.seq > self.rcv_nxt:
            if seg.seq not in self._reassembly:
                if self.reassembly_occupancy + len(seg.payload) <= self.params.rmem_bytes:
                    self._reassembly[seg.seq] = seg.payload
                    self.reassembly_occupancy += len(seg.payload)
                    self._sack_cache = None
                else:
                    self.counters.segments_dropped_buffer_full += 1
        # seq < rcv_nxt: duplicate, nothing to store; every case gets an ACK
        self._send_segment(
            Segment(
                SegKind.ACK,
                self.conn_id,
                self.host.name,
                ack=self.rcv_nxt,
                adv_window=self._adv_window(),
                echo_ts=seg.ts,
                sack=self._sack_ranges() if self.params.sack_enabled else (),
            )
        )

    def _sack_ranges(self) -> tuple:
        if self._sack_cache is None:
            ranges: list[list[int]] = []
            for start in sorted(self._reassembly):
                end = start + len(self._reassembly[start])
                if ranges and ranges[-1][1] == start:
                    ranges[-1][1] = end
                else:
                    if len(ranges) == SACK_BLOCKS:
                        break
                    ranges.append([start, end])
            self._sack_cache = tuple((s, e) for s, e in ranges)
        return self._sack_cache

    def _app_deliver(self, payload: bytes) -> None:
        self.rcv_nxt += len(payload)
        self._app_in += payload

    def _flush_messages(self) -> None:
        while self._bounds_heap and self._bounds_heap[0] <= self.rcv_nxt:
            bound = heapq.heappop(self._bounds_heap)
            self._bounds_seen.discard(bound)
            size = bound - self._last_bound
            msg = bytes(self._app_in[:size])
            del self._app_in[:size]
            self._last_bound = bound
            if self.message_handler:
                self.message_handler(msg)

    # -------------------------------------------------------------- keepalive

    def _arm_keepalive_idle(self) -> None:
        self._cancel(self._ka_timer)
        self._probes_out = 0
        self._ka_timer = self.sim.schedule(self.last_receipt + self.params.keepalive_time, self._ka_fired)

    def _ka_fired(self, _=None) -> None:
        if self.state != ConnState.ESTABLISHED:
            return
        if self._probes_out == 0:
            # lazy idle check: receipts since arming push the probe out
            idle_target = self.last_receipt + self.params.keepalive_time
            if self.sim.now() < idle_target:
                self._ka_timer = self.sim.schedule(idle_target, self._ka_fired)
                return
        elif self._probes_out >= self.params.keepalive_probes:
            self._abort(DEAD_PEER)
            return
        self._probes_out += 1
        self.counters.keepalive_probes_sent += 1
        self._send_segment(
            Segment(SegKind.PROBE, self.conn_id, self.host.name, ack=self.rcv_nxt, adv_window=self._adv_window())
        )
        self._ka_timer = self.sim.schedule_in(self.params.keepalive_intvl, self._ka_fired)

    def _note_receipt(self) -> None:
        self.last_receipt = self.sim.now()
        if self._probes_out > 0:
            self._arm_keepalive_idle()

    # ----------------------------------------------------------------- abort

    def _abort(self, reason: str) -> None:
        if self.state == ConnState.ABORTED:
            return
        self.state = ConnState.ABORTED
        self.counters.record_abort(reason)
        for t in (self._rto_timer, self._ka_timer, self._syn_timer, self._deadline_timer):
            self._cancel(t)
        self._rto_timer = None
        self._ka_timer = None
        if self.abort_handler:
            self.abort_handler(reason)

    # -------------------------------------------------------------- dispatch

    def on_segment(self, seg: Segment) -> None:
        if self.state in (ConnState.CLOSED, ConnState.ABORTED):
            return
        self._note_receipt()
        kind = seg.kind
        if kind == SegKind.SYNACK:
            if self.state == ConnState.SYN_SENT:
                self.peer_adv = seg.adv_window
                self._take_rtt_sample(seg)
                self._become_established()
            # duplicate SYN-ACK while established: server missed our ACK
            self._send_segment(
                Segment(
                    SegKind.ACK,
                    self.conn_id,
                    self.host.name,
                    ack=self.rcv_nxt,
                    adv_window=self._adv_window(),
                    echo_ts=seg.ts,
                )
            )
            return
        if kind == SegKind.RST:
            if self.state == ConnState.SYN_SENT:
                self._fail_connect(seg.reason or CONNECT_TIMEOUT)
            else:
                self._abort(seg.reason or CONNECT_TIMEOUT)
            return
        if self.state == ConnState.SYN_RCVD and kind in (SegKind.ACK, SegKind.DATA, SegKind.PROBE):
            self.host.half_open -= 1
            self._become_established()
        if kind == SegKind.DATA:
            self._handle_ack(seg)
            self._handle_data(seg)
        elif kind == SegKind.ACK:
            self._handle_ack(seg)
        elif kind == SegKind.PROBE:
            self._send_segment(
                Segment(SegKind.PROBE_ACK, self.conn_id, self.host.name, ack=self.rcv_nxt, adv_window=self._adv_window())
            )
            if self._segments and self.retransmit_count > 0:
                self._retransmit_now()
        elif kind == SegKind.PROBE_ACK:
            self._handle_ack(seg)
            if self._segments and self.retransmit_count > 0:
                self._retransmit_now()


class TcpHost:
    """A host endpoint; owns its connection ends and its link attachments."""

    def __init__(self, sim: Simulator, name: str):
        self.sim = sim
        self.name = name
        self.alive = True
        self.ends: dict[str, ConnEnd] = {}
        self.paths: dict[str, LinkPath] = {}
        self.half_open = 0
        self._listen_params: Optional[TcpParams] = None
        self._accept_handler: Optional[Callable[[ConnEnd], None]] = None

    def attach(self, peer_name: str, path: LinkPath) -> None:
        self.paths[peer_name] = path

    def listen(self, params: TcpParams, on_accept: Optional[Callable[[ConnEnd], None]] = None) -> None:
        self._listen_params = params
        self._accept_handler = on_accept

    def connect(
        self,
        peer_name: str,
        params: TcpParams,
        on_result: Optional[Callable[[ConnEnd, bool, str], None]] = None,
    ) -> ConnEnd:
        conn_id = f"{self.name}~{peer_name}"
        end = ConnEnd(self, conn_id, peer_name, params, is_client=True)
        end.connect_handler = on_result
        self.ends[conn_id] = end
        end.start_connect()
        return end

    def send_to_link(self, peer_name: str, seg: Segment) -> None:
        if not self.alive:
            return
        path = self.paths[peer_name]
        path.transmit(Packet(src=self.name, dst=peer_name, segment=seg, size_bytes=seg.size_bytes))

    def deliver(self, packet: Packet) -> None:
        if not self.alive:
            return
        seg: Segment = packet.segment
        end = self.ends.get(seg.conn_id)
        if end is not None and end.state not in (ConnState.CLOSED,):
            end.on_segment(seg)
            return
        if seg.kind == SegKind.SYN and self._listen_params is not None:
            self._accept_syn(seg)

    def _accept_syn(self, seg: Segment) -> None:
        params = self._listen_params
        if self.half_open >= params.max_syn_backlog:
            rst = Segment(SegKind.RST, seg.conn_id, self.name, reason=BACKLOG_FULL)
            self.send_to_link(seg.src, rst)
            return
        end = ConnEnd(self, seg.conn_id, seg.src, params, is_client=False)
        end.state = ConnState.SYN_RCVD
        end.peer_adv = seg.adv_window
        end._peer_syn_ts = seg.ts
        self.ends[seg.conn_id] = end
        self.half_open += 1
        if self._accept_handler:
            self._accept_handler(end)
        self._send_synack(end, first=True)

    def _send_synack(self, end: ConnEnd, first: bool = False) -> None:
        if not first:
            end.counters.syn_retransmits += 1
        end._send_segment(
            Segment(
                SegKind.SYNACK,
                end.conn_id,
                self.name,
                ack=0,
                adv_window=end._adv_window(),
                ts=self.sim.now(),
                echo_ts=end._peer_syn_ts,
            )
        )
        end._syn_timer = self.sim.schedule_in(end._syn_rto, lambda _=None: self._synack_timer_fired(end))

    def _synack_timer_fired(self, end: ConnEnd) -> None:
        if end.state != ConnState.SYN_RCVD:
            return
        if end._syn_attempts >= end.params.synack_retries:
            # give up on the half-open entry; the client keeps retrying or times out
            end.state = ConnState.CLOSED
            self.half_open -= 1
            del self.ends[end.conn_id]
            if end.closed_handler:
                end.closed_handler(end)
            return
        end._syn_attempts += 1
        end._syn_rto *= 2.0
        self._send_synack(end)

    def aggregate_counters(self) -> ConnCounters:
        total = ConnCounters()
        for end in self.ends.values():
            total.merge(end.counters)
        return total

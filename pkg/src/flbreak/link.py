"""Impairment channel between a client endpoint and the server endpoint.

Each client-server path carries two directed links sharing one LinkConfig:
per-packet i.i.d. loss, a one-way propagation delay, a bounded in-flight
queue, and optionally a serialization rate cap and uniform jitter. Dead
endpoints and blackhole windows silently eat packets, the same way a pulled
network cable would.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Protocol

from pydantic import BaseModel, Field

from .sim import Simulator


class LinkConfig(BaseModel):
    """Per-direction impairment settings (applied to both directions of a path)."""

    one_way_delay: float = Field(default=0.005, ge=0.0, description="propagation delay per direction, seconds")
    loss_prob: float = Field(default=0.0, ge=0.0, le=1.0, description="per-packet drop probability per traversal")
    queue_limit: int = Field(default=200, ge=1, description="max packets in flight per direction")
    rate_cap: Optional[float] = Field(default=None, gt=0.0, description="bits/second; None = unlimited")
    jitter: float = Field(default=0.0, ge=0.0, description="uniform +/- half-width added to delay, seconds")


@dataclass
class Packet:
    src: str
    dst: str
    segment: Any
    size_bytes: int


@dataclass
class LinkStats:
    transmitted: int = 0
    delivered: int = 0
    dropped_loss: int = 0
    dropped_queue: int = 0
    bytes_sent: int = 0
    bytes_delivered: int = 0


class Endpoint(Protocol):
    name: str
    alive: bool

    def deliver(self, packet: Packet) -> None: ...


class DirectedLink:
    """One direction of a path. Owns its queue occupancy and counters."""

    def __init__(self, sim: Simulator, label: str, cfg: LinkConfig, dst: Endpoint):
        self.sim = sim
        self.label = label
        self.cfg = cfg
        self.dst = dst
        self.in_flight = 0
        self.stats = LinkStats()
        self.blackhole_until = 0.0
        self._last_sched_delivery = 0.0
        self._busy_until = 0.0  # serialization front when rate_cap is set

    def transmit(self, packet: Packet) -> None:
        now = self.sim.now()
        self.stats.transmitted += 1
        self.stats.bytes_sent += packet.size_bytes
        if not self.dst.alive or now < self.blackhole_until:
            self.stats.dropped_loss += 1
            return
        cfg = self.cfg
        if cfg.loss_prob > 0.0 and self.sim.stream(f"link.{self.label}.loss").bernoulli(cfg.loss_prob):
            self.stats.dropped_loss += 1
            return
        if self.in_flight >= cfg.queue_limit:
            self.stats.dropped_queue += 1
            return
        deliver_at = now
        if cfg.rate_cap is not None:
            self._busy_until = max(self._busy_until, now) + packet.size_bytes * 8.0 / cfg.rate_cap
            deliver_at = self._busy_until
        deliver_at += cfg.one_way_delay
        if cfg.jitter > 0.0:
            u = self.sim.stream(f"link.{self.label}.jitter").uniform01()
            deliver_at += (2.0 * u - 1.0) * cfg.jitter
            deliver_at = max(deliver_at, now)
        else:
            # keep FIFO order even if the delay was lowered mid-run
            deliver_at = max(deliver_at, self._last_sched_delivery)
            self._last_sched_delivery = deliver_at
        self.in_flight += 1
        self.sim.schedule(deliver_at, self._deliver, packet)

    def _deliver(self, packet: Packet) -> None:
        self.in_flight -= 1
        if not self.dst.alive:
            self.stats.dropped_loss += 1
            return
        self.stats.delivered += 1
        self.stats.bytes_delivered += packet.size_bytes
        self.dst.deliver(packet)


class LinkPath:
    """Bidirectional client-server path: two directed links, one config."""

    def __init__(self, sim: Simulator, name: str, cfg: LinkConfig, client: Endpoint, server: Endpoint):
        self.sim = sim
        self.name = name
        self.up = DirectedLink(sim, f"{name}.up", cfg, dst=server)
        self.down = DirectedLink(sim, f"{name}.down", cfg, dst=client)
        self._client_name = client.name

    @property
    def cfg(self) -> LinkConfig:
        return self.up.cfg

    def transmit(self, packet: Packet) -> None:
        if packet.src == self._client_name:
            self.up.transmit(packet)
        else:
            self.down.transmit(packet)

    def set_params(self, at: float, cfg: LinkConfig) -> None:
        """Packets transmitted after `at` use the new config; in-flight ones don't."""
        if at < self.sim.now():
            raise ValueError(f"set_params at {at} < now {self.sim.now()}")
        self.sim.schedule(at, self.apply_params_now, cfg)

    def apply_params_now(self, cfg: LinkConfig) -> None:
        self.up.cfg = cfg
        self.down.cfg = cfg

    def set_blackhole(self, until: float) -> None:
        self.up.blackhole_until = max(self.up.blackhole_until, until)
        self.down.blackhole_until = max(self.down.blackhole_until, until)

"""Federated averaging rounds simulated over the transport layer.

One TrainingRun owns a Simulator, a server host, N client hosts, and one
impaired path per client. Every round: broadcast the global model, clients
run local gradient descent (simulated compute time), upload padded updates,
aggregate what arrived before the round deadline, evaluate centrally.

The server never learns of silent client deaths directly; it only sees
transport evidence (aborted connections) or missing updates at the
deadline. That asymmetry is the point of the model.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from . import chaos as chaos_mod
from . import data as data_mod
from .chaos import ChaosAction
from .link import LinkConfig, LinkPath
from .metrics import RoundRecord, RunResult, TransportCounters
from .sim import Simulator
from .tcp import (
    CONNECT_TIMEOUT,
    RETRIES_EXCEEDED,
    ConnEnd,
    ConnState,
    TcpHost,
    TcpParams,
)

INSUFFICIENT_CLIENTS = "InsufficientClients"
DEADLINE_NO_QUORUM = "DeadlineNoQuorum"
BUFFER_STALL = "BufferStall"
TRANSPORT_ABORT = "TransportAbort"  # round-level tag; runs report a transport kind

DONE_FLAG = "training-done"


class StrategyConfig(BaseModel):
    num_clients: int = Field(default=10, ge=1)
    num_rounds: int = Field(default=20, ge=1)
    min_fit_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    min_eval_fraction: float = Field(default=0.1, gt=0.0, le=1.0)  # accepted for parity; evaluation is centralized
    round_deadline: float = Field(default=1800.0, gt=0.0)
    local_epochs: int = Field(default=1, ge=0)
    payload_bytes: int = Field(default=300000, ge=1)
    base_compute: float = Field(default=30.0, ge=0.0, description="simulated local-training seconds per epoch")
    dataset_samples: int = Field(default=2000, ge=10)
    dataset_dim: int = Field(default=16, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "StrategyConfig":
        if self.dataset_samples < 10 * self.num_clients:
            raise ValueError("dataset_samples must be at least 10x num_clients")
        model_bytes = 13 + 8 * (self.dataset_dim + 1)
        if self.payload_bytes < model_bytes:
            raise ValueError(f"payload_bytes {self.payload_bytes} below serialized model size {model_bytes}")
        return self

    def quorum(self) -> int:
        return math.ceil(self.min_fit_fraction * self.num_clients - 1e-9)


class ExperimentSetup(BaseModel):
    """Everything one simulation needs (the sweep/grid layers build these)."""

    master_seed: int = 1
    dataset_seed: Optional[int] = None
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    link: LinkConfig = Field(default_factory=LinkConfig)
    tcp: TcpParams = Field(default_factory=TcpParams)
    chaos: list[ChaosAction] = Field(default_factory=list)


class FLClient:
    def __init__(self, run: "TrainingRun", cid: int, host: TcpHost, shard_x: np.ndarray, shard_y: np.ndarray):
        self.run = run
        self.cid = cid
        self.host = host
        self.shard_x = shard_x
        self.shard_y = shard_y
        self.alive = True
        self.conn: Optional[ConnEnd] = None
        self._busy = False
        self._queue: list[tuple[int, np.ndarray]] = []

    def on_broadcast(self, msg: bytes) -> None:
        if not self.alive:
            return
        kind, round_index, _, weights = data_mod.decode_params(msg)
        if kind != data_mod.MSG_BROADCAST:
            return
        # a laggard skips superseded rounds and trains on the newest model only
        self._queue = [(round_index, weights)]
        if not self._busy:
            self._start_next()

    def _start_next(self) -> None:
        round_index, weights = self._queue.pop(0)
        self._busy = True
        strategy = self.run.strategy
        compute = strategy.base_compute * strategy.local_epochs
        self.run.sim.schedule_in(compute, self._compute_done, (round_index, weights))

    def _compute_done(self, payload) -> None:
        round_index, weights = payload
        self._busy = False
        if not self.alive:
            return  # killed mid-fit: no update produced
        strategy = self.run.strategy
        update = data_mod.local_fit(weights, self.shard_x, self.shard_y, strategy.local_epochs)
        if self.conn is not None and self.conn.state == ConnState.ESTABLISHED:
            msg = data_mod.encode_params(
                data_mod.MSG_UPDATE, round_index, len(self.shard_y), update, pad_to=strategy.payload_bytes
            )
            self.conn.send_message(msg)
        if self._queue and self.alive:
            self._start_next()


class TrainingRun:
    """Builds and executes one simulation; collect() yields the RunResult."""

    def __init__(self, setup: ExperimentSetup):
        self.setup = setup
        self.strategy = setup.strategy
        self.sim = Simulator(setup.master_seed)
        n = self.strategy.num_clients
        self.n_clients = n

        dataset_seed = setup.dataset_seed if setup.dataset_seed is not None else setup.master_seed
        self.dataset = data_mod.make_dataset(
            dataset_seed, self.strategy.dataset_samples, self.strategy.dataset_dim, n
        )
        self.global_params = data_mod.init_params(self.strategy.dataset_dim)

        self.server = TcpHost(self.sim, "server")
        self.clients: list[FLClient] = []
        self.paths: dict[int, LinkPath] = {}
        for cid in range(n):
            host = TcpHost(self.sim, f"c{cid}")
            client = FLClient(self, cid, host, *self.dataset.shards[cid])
            path = LinkPath(self.sim, f"c{cid}", setup.link, client=host, server=self.server)
            host.attach("server", path)
            self.server.attach(f"c{cid}", path)
            self.clients.append(client)
            self.paths[cid] = path
        self.server.listen(setup.tcp, on_accept=self._on_accept)

        # connect phase state
        self._attempts_resolved = 0
        self._client_ok: set[int] = set()
        self._rounds_started = False

        # round state
        self.round_index = 0
        self.rounds: list[RoundRecord] = []
        self.rounds_completed = 0
        self._consecutive_failures = 0
        self._participants: list[int] = []
        self._received: dict[int, tuple[np.ndarray, int]] = {}
        self._round_open = False
        self._round_started_at = 0.0
        self._deadline_timer = None

        self.failure_kind: Optional[str] = None
        self.finished = False
        self.final_accuracy = data_mod.accuracy(self.global_params, self.dataset.test_x, self.dataset.test_y)

        chaos_mod.apply(setup.chaos, self)

    # ------------------------------------------------------- chaos interface

    def kill_client(self, cid: int) -> None:
        client = self.clients[cid]
        client.alive = False
        client.host.alive = False

    def path_for(self, cid: int) -> LinkPath:
        return self.paths[cid]

    def all_paths(self) -> list[LinkPath]:
        return [self.paths[cid] for cid in sorted(self.paths)]

    # ------------------------------------------------------------ connection

    def execute(self) -> RunResult:
        for client in self.clients:
            client.conn = client.host.connect("server", self.setup.tcp, on_result=self._on_connect_result)
            client.conn.message_handler = client.on_broadcast
        self.sim.run(until_flag=DONE_FLAG)
        return self.collect()

    def _on_connect_result(self, end: ConnEnd, ok: bool, reason: str) -> None:
        self._attempts_resolved += 1
        if ok:
            self._client_ok.add(int(end.host.name[1:]))
        self._maybe_start_rounds()

    def _on_accept(self, end: ConnEnd) -> None:
        cid = int(end.peer[1:])
        end.message_handler = lambda msg, cid=cid: self._on_update(cid, msg)
        end.abort_handler = lambda reason, cid=cid: self._on_server_abort(cid, reason)
        end.established_handler = lambda _end: self._maybe_start_rounds()
        end.closed_handler = lambda _end: self._maybe_start_rounds()

    def _server_end(self, cid: int) -> Optional[ConnEnd]:
        return self.server.ends.get(f"c{cid}~server")

    def _connected(self, cid: int) -> bool:
        client = self.clients[cid]
        server_end = self._server_end(cid)
        return (
            client.conn is not None
            and client.conn.state == ConnState.ESTABLISHED
            and server_end is not None
            and server_end.state == ConnState.ESTABLISHED
        )

    def _maybe_start_rounds(self) -> None:
        if self._rounds_started or self.finished:
            return
        if self._attempts_resolved < self.n_clients:
            return
        for cid in self._client_ok:
            end = self._server_end(cid)
            if end is not None and end.state == ConnState.SYN_RCVD:
                return  # handshake tail still in progress
        self._rounds_started = True
        connected = [cid for cid in range(self.n_clients) if self._connected(cid)]
        if len(connected) < self.strategy.quorum():
            self._finish(CONNECT_TIMEOUT)
            return
        self._start_round(1)

    # ----------------------------------------------------------------- rounds

    def _start_round(self, index: int) -> None:
        if self.finished:
            return
        self.round_index = index
        participants = [
            cid for cid in range(self.n_clients) if self.clients[cid].alive and self._connected(cid)
        ]
        now = self.sim.now()
        if len(participants) < self.strategy.quorum():
            self._record_round(participants=[], excluded=[], failure=INSUFFICIENT_CLIENTS, started_at=now)
            return
        self._participants = participants
        self._received = {}
        self._round_open = True
        self._round_started_at = now
        payload = data_mod.encode_params(
            data_mod.MSG_BROADCAST,
            index,
            0,
            self.global_params,
            pad_to=self.strategy.payload_bytes // self.n_clients,
        )
        for cid in participants:
            self._server_end(cid).send_message(payload)
        self._deadline_timer = self.sim.schedule_in(self.strategy.round_deadline, self._deadline_fired)

    def _on_update(self, cid: int, msg: bytes) -> None:
        if not self._round_open:
            return
        kind, round_index, n_samples, weights = data_mod.decode_params(msg)
        if kind != data_mod.MSG_UPDATE or round_index != self.round_index:
            return  # stale update from an excluded laggard
        if cid not in self._participants or cid in self._received:
            return
        self._received[cid] = (weights, n_samples)
        self._check_round_resolved()

    def _on_server_abort(self, cid: int, reason: str) -> None:
        if self._round_open:
            self._check_round_resolved()
        elif self._rounds_started and not self.finished:
            self._check_all_aborted()

    def _check_round_resolved(self) -> None:
        for cid in self._participants:
            if cid in self._received:
                continue
            end = self._server_end(cid)
            if end is not None and end.state == ConnState.ESTABLISHED:
                return  # still might deliver
        self._close_round()

    def _deadline_fired(self, _=None) -> None:
        if self._round_open:
            self._close_round()

    def _close_round(self) -> None:
        self._round_open = False
        if self._deadline_timer is not None:
            self.sim.cancel(self._deadline_timer)
            self._deadline_timer = None
        excluded = [cid for cid in self._participants if cid not in self._received]
        if len(self._received) >= self.strategy.quorum():
            updates = [self._received[cid] for cid in sorted(self._received)]
            self.global_params = data_mod.aggregate_fedavg(updates)
            self.final_accuracy = data_mod.accuracy(self.global_params, self.dataset.test_x, self.dataset.test_y)
            self._record_round(self._participants, excluded, failure=None, started_at=self._round_started_at)
        else:
            all_aborted = all(
                (end := self._server_end(cid)) is None or end.state == ConnState.ABORTED
                for cid in self._participants
            )
            failure = TRANSPORT_ABORT if all_aborted else DEADLINE_NO_QUORUM
            self._record_round(self._participants, excluded, failure=failure, started_at=self._round_started_at)

    def _record_round(self, participants: list[int], excluded: list[int], failure: Optional[str], started_at: float) -> None:
        record = RoundRecord(
            round_index=self.round_index,
            participants=participants,
            started_at=started_at,
            ended_at=self.sim.now(),
            updates_received=len(participants) - len(excluded),
            eval_accuracy=self.final_accuracy,
            excluded_by_deadline=excluded,
            failure=failure,
        )
        self.rounds.append(record)
        if failure is None:
            self.rounds_completed += 1
            self._consecutive_failures = 0
        else:
            self._consecutive_failures += 1
        if self._consecutive_failures >= 2:
            self._finish(self._derive_failure(failure))
            return
        if self.rounds_completed >= self.strategy.num_rounds:
            self._finish(None)
            return
        if self._check_all_aborted():
            return
        self._start_round(self.round_index + 1)

    def _check_all_aborted(self) -> bool:
        """All-connections-aborted is an immediate training failure."""
        if not self._rounds_started or self.finished:
            return False
        for cid in range(self.n_clients):
            end = self._server_end(cid)
            if end is not None and end.state == ConnState.ESTABLISHED:
                return False
        self._finish(self._derive_failure(DEADLINE_NO_QUORUM))
        return True

    def _derive_failure(self, last_failure: str) -> str:
        if last_failure == INSUFFICIENT_CLIENTS:
            return INSUFFICIENT_CLIENTS
        counters = self._aggregate_counters()
        if counters.aborts_by_kind.get(RETRIES_EXCEEDED, 0) > 0:
            return RETRIES_EXCEEDED
        if counters.segments_dropped_buffer_full > 0:
            return BUFFER_STALL
        return DEADLINE_NO_QUORUM

    def _finish(self, failure_kind: Optional[str]) -> None:
        if self.finished:
            return
        self.finished = True
        self.failure_kind = failure_kind
        self.sim.set_flag(DONE_FLAG)

    # ----------------------------------------------------------------- result

    def _aggregate_counters(self) -> TransportCounters:
        total = self.server.aggregate_counters()
        for client in self.clients:
            total.merge(client.host.aggregate_counters())
        return TransportCounters(
            syn_retransmits=total.syn_retransmits,
            data_retransmits=total.data_retransmits,
            keepalive_probes_sent=total.keepalive_probes_sent,
            segments_dropped_buffer_full=total.segments_dropped_buffer_full,
            aborts_by_kind=dict(sorted(total.aborts_by_kind.items())),
        )

    def collect(self) -> RunResult:
        bytes_up = sum(p.up.stats.bytes_sent for p in self.all_paths())
        bytes_down = sum(p.down.stats.bytes_sent for p in self.all_paths())
        delivered = sum(p.up.stats.bytes_delivered + p.down.stats.bytes_delivered for p in self.all_paths())
        canonical = json.dumps(self.setup.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return RunResult(
            config_digest=hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16],
            master_seed=self.setup.master_seed,
            total_time=self.sim.now(),
            rounds_completed=self.rounds_completed,
            final_accuracy=self.final_accuracy,
            failure_kind=self.failure_kind,
            rounds=self.rounds,
            transport=self._aggregate_counters(),
            bytes_sent=bytes_up + bytes_down,
            bytes_delivered=delivered,
            bytes_up=bytes_up,
            bytes_down=bytes_down,
        )


def run_training(setup: ExperimentSetup) -> RunResult:
    return TrainingRun(setup).execute()

"""Scheduled fault injection: silent client kills, link blackholes, and
mid-run impairment changes.

Kills are silent by design: no reset, no teardown — the server can only
find out through transport timeouts, which is what makes keepalive and
retransmission tuning observable.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from .link import LinkConfig


class ScheduleInvalid(ValueError):
    pass


class ChaosAction(BaseModel):
    at: float = Field(ge=0.0)
    kind: Literal["kill_clients", "blackhole", "set_link"]
    # kill_clients
    fraction: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    client_ids: Optional[list[int]] = None
    permanent: bool = True
    # blackhole
    duration: Optional[float] = Field(default=None, gt=0.0)
    # set_link
    link: Optional[LinkConfig] = None

    @model_validator(mode="after")
    def _check_kind_args(self) -> "ChaosAction":
        if self.kind == "kill_clients":
            if self.fraction is None and self.client_ids is None:
                raise ValueError("kill_clients needs fraction or client_ids")
            if not self.permanent:
                raise ValueError("client revival is not supported; permanent must be true")
        elif self.kind == "blackhole":
            if self.duration is None:
                raise ValueError("blackhole needs duration")
        elif self.kind == "set_link":
            if self.link is None:
                raise ValueError("set_link needs link")
        return self


def kill_count(fraction: float, n_clients: int) -> int:
    """Fractional kills round half-up."""
    return int(fraction * n_clients + 0.5)


def select_victims(action: ChaosAction, n_clients: int, stream) -> list[int]:
    if action.client_ids is not None:
        bad = [c for c in action.client_ids if not 0 <= c < n_clients]
        if bad:
            raise ScheduleInvalid(f"client ids out of range: {bad}")
        return sorted(action.client_ids)
    order = stream.shuffle(n_clients)
    return sorted(order[: kill_count(action.fraction, n_clients)])


def apply(schedule: list[ChaosAction], run) -> None:
    """Install every action as a simulation event on the run context.

    The run context provides: sim, n_clients, kill_client(cid),
    path_for(cid), and all_paths().
    """
    prev = 0.0
    for action in schedule:
        if action.at < prev:
            raise ScheduleInvalid("chaos actions must be sorted by time")
        prev = action.at
    for action in schedule:
        if action.kind == "kill_clients":
            victims = select_victims(action, run.n_clients, run.sim.stream("chaos.kill"))
            run.sim.schedule(action.at, _kill_event, (run, victims))
        elif action.kind == "blackhole":
            targets = action.client_ids if action.client_ids is not None else None
            run.sim.schedule(action.at, _blackhole_event, (run, targets, action.duration))
        elif action.kind == "set_link":
            run.sim.schedule(action.at, _set_link_event, (run, action.link))


def _kill_event(payload) -> None:
    run, victims = payload
    for cid in victims:
        run.kill_client(cid)


def _blackhole_event(payload) -> None:
    run, targets, duration = payload
    until = run.sim.now() + duration
    paths = run.all_paths() if targets is None else [run.path_for(cid) for cid in targets]
    for path in paths:
        path.set_blackhole(until)


def _set_link_event(payload) -> None:
    run, cfg = payload
    for path in run.all_paths():
        path.apply_params_now(cfg)

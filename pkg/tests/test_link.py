import pytest

from flbreak.link import LinkConfig, LinkPath, Packet
from flbreak.sim import Simulator


class Sink:
    def __init__(self, name, sim):
        self.name = name
        self.sim = sim
        self.alive = True
        self.received = []

    def deliver(self, packet):
        self.received.append((self.sim.now(), packet))


def build(seed=0, **cfg_kw):
    sim = Simulator(master_seed=seed)
    client = Sink("c0", sim)
    server = Sink("server", sim)
    path = LinkPath(sim, "c0", LinkConfig(**cfg_kw), client=client, server=server)
    return sim, client, server, path


def pkt(n=0, size=100):
    return Packet(src="c0", dst="server", segment=("seg", n), size_bytes=size)


def test_delivery_at_one_way_delay():
    sim, _, server, path = build(one_way_delay=5.0)
    path.transmit(pkt())
    sim.run()
    assert [t for t, _ in server.received] == [5.0]


def test_total_loss_drops_everything():
    sim, _, server, path = build(loss_prob=1.0)
    for i in range(50):
        path.transmit(pkt(i))
    sim.run()
    assert server.received == []
    assert path.up.stats.dropped_loss == 50


def test_queue_limit_tail_drop():
    # the 201st concurrent in-flight packet is dropped at the default limit
    sim, _, server, path = build(one_way_delay=1.0)
    for i in range(201):
        path.transmit(pkt(i))
    sim.run()
    assert path.up.stats.dropped_queue == 1
    assert len(server.received) == 200


def test_set_params_mid_run_delay_change():
    sim, _, server, path = build(one_way_delay=0.05)
    path.set_params(100.0, LinkConfig(one_way_delay=5.0))
    sim.schedule(99.0, lambda _: path.transmit(pkt(1)))
    sim.schedule(101.0, lambda _: path.transmit(pkt(2)))
    sim.run()
    times = {p.segment[1]: t for t, p in server.received}
    assert times[1] == pytest.approx(99.05)
    assert times[2] == pytest.approx(106.0)


def test_loss_fraction_monte_carlo():
    sim, _, _, path = build(seed=11, loss_prob=0.5, queue_limit=10**9)
    n = 10**5
    for i in range(n):
        path.transmit(pkt(i, size=1))
    dropped = path.up.stats.dropped_loss
    assert abs(dropped / n - 0.5) < 0.01


def test_conservation_every_packet_has_one_fate():
    sim, _, server, path = build(seed=3, loss_prob=0.3, queue_limit=40, one_way_delay=0.5)
    stream = sim.stream("traffic")
    for i in range(2000):
        sim.schedule(stream.uniform01() * 50.0, lambda _, i=i: path.transmit(pkt(i)))
    sim.run()
    stats = path.up.stats
    assert stats.transmitted == 2000
    assert stats.delivered + stats.dropped_loss + stats.dropped_queue == 2000
    assert len(server.received) == stats.delivered


def test_no_loss_no_queue_full_delivers_all():
    sim, _, server, path = build(queue_limit=10**6)
    for i in range(500):
        path.transmit(pkt(i))
    sim.run()
    assert path.up.stats.delivered == 500
    assert path.up.stats.bytes_delivered == path.up.stats.bytes_sent


def test_no_reordering_without_jitter_or_rate_cap():
    # even a mid-run delay drop must not reorder deliveries
    sim, _, server, path = build(one_way_delay=3.0)
    path.set_params(10.0, LinkConfig(one_way_delay=0.01))
    for i, t in enumerate([9.0, 9.5, 10.5, 11.0]):
        sim.schedule(t, lambda _, i=i: path.transmit(pkt(i)))
    sim.run()
    order = [p.segment[1] for _, p in server.received]
    assert order == [0, 1, 2, 3]
    times = [t for t, _ in server.received]
    assert times == sorted(times)


def test_reapplying_identical_config_changes_nothing():
    def run(reapply):
        sim, _, server, path = build(seed=8, loss_prob=0.2, one_way_delay=0.4)
        if reapply:
            path.set_params(5.0, LinkConfig(loss_prob=0.2, one_way_delay=0.4))
        for i in range(200):
            sim.schedule(i * 0.1, lambda _, i=i: path.transmit(pkt(i)))
        sim.run()
        return [(t, p.segment[1]) for t, p in server.received]

    assert run(False) == run(True)


def test_rate_cap_serialization_delay():
    # 8000-bit packet on a 8000 bps link: 1 s serialization each, FIFO
    sim, _, server, path = build(one_way_delay=0.5, rate_cap=8000.0)
    path.transmit(pkt(0, size=1000))
    path.transmit(pkt(1, size=1000))
    sim.run()
    times = [t for t, _ in server.received]
    assert times == [pytest.approx(1.5), pytest.approx(2.5)]


def test_jitter_bounds_delivery_window():
    sim, _, server, path = build(seed=5, one_way_delay=1.0, jitter=0.2)
    for i in range(300):
        sim.schedule(10.0, lambda _, i=i: path.transmit(pkt(i)))
    sim.run()
    for t, _ in server.received:
        assert 10.8 <= t <= 11.2


def test_dead_destination_swallows_packets():
    sim, _, server, path = build()
    server.alive = False
    path.transmit(pkt())
    sim.run()
    assert server.received == []
    assert path.up.stats.dropped_loss == 1


def test_blackhole_window_drops_then_recovers():
    sim, _, server, path = build(one_way_delay=0.1)
    path.set_blackhole(10.0)
    sim.schedule(5.0, lambda _: path.transmit(pkt(0)))
    sim.schedule(10.0, lambda _: path.transmit(pkt(1)))  # boundary: blackhole over
    sim.run()
    assert [p.segment[1] for _, p in server.received] == [1]

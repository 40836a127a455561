import pytest

from flbreak.link import LinkConfig, LinkPath
from flbreak.sim import Simulator
from flbreak.tcp import ConnState, TcpHost, TcpParams


class TransportPair:
    """One client, one server, one impaired path; handshake helpers."""

    def __init__(self, seed=0, link=None, params=None, server_params=None):
        self.sim = Simulator(master_seed=seed)
        self.link_cfg = link or LinkConfig()
        self.params = params or TcpParams()
        self.client = TcpHost(self.sim, "c0")
        self.server = TcpHost(self.sim, "server")
        self.path = LinkPath(self.sim, "c0", self.link_cfg, client=self.client, server=self.server)
        self.client.attach("server", self.path)
        self.server.attach("c0", self.path)
        self.server.listen(server_params or self.params)
        self.connect_result = None

    def connect(self, horizon=30.0):
        conn = self.client.connect("server", self.params, on_result=self._on_result)
        self.sim.run(until_time=horizon)
        return conn

    def _on_result(self, end, ok, reason):
        self.connect_result = (ok, reason, self.sim.now())

    def server_end(self, conn):
        return self.server.ends.get(conn.conn_id)


@pytest.fixture
def pair():
    return TransportPair()


def make_pair(**kw) -> TransportPair:
    return TransportPair(**kw)


def established_pair(seed=0, link=None, params=None, horizon=30.0):
    p = TransportPair(seed=seed, link=link, params=params)
    conn = p.connect(horizon=horizon)
    assert conn.state == ConnState.ESTABLISHED
    return p, conn

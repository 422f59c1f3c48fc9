import numpy as np
import pytest

from privspec.crypto import kem_backend
from privspec.errors import CircuitError
from privspec.netsim import Network
from privspec.onion import (
    CELL_BYTES,
    Cell,
    CircuitState,
    Destination,
    OnionClient,
    Relay,
    cells_for,
    choose_path,
    circuit_create,
    layer_len,
    onion_receive,
    onion_send,
)


class Sink:
    def __init__(self, node_id):
        self.node_id = node_id
        self.got = []

    def on_frame(self, net, src, channel, data):
        self.got.append((net.now, src, data))


# ------------------------------------------------------------------ netsim


def test_delivery_order_and_fifo_under_jitter():
    net = Network(0.01, jitter=0.05, rng=3)
    sink = net.register(Sink("b"))
    net.register(Sink("a"))
    for i in range(50):
        net.send("a", "b", bytes([i]))
    net.run()
    assert [d[0] for _, _, d in sink.got] == list(range(50))
    times = [t for t, _, _ in sink.got]
    assert times == sorted(times)


def test_transcript_is_deterministic():
    def once():
        net = Network(0.02, jitter=0.01, rng=9)
        net.register(Sink("a"))
        net.register(Sink("b"))
        for i in range(20):
            net.send("a", "b", b"x" * i)
            net.send("b", "a", b"y" * i)
        net.run()
        return net.transcript_digest()
    assert once() == once()


def test_per_link_delays_and_advance():
    net = Network(0.5, delays={("a", "b"): 0.1})
    sink = net.register(Sink("b"))
    net.register(Sink("a"))
    net.send("a", "b", b"1")
    net.advance_to(0.05)
    assert not sink.got and net.now == 0.05
    net.advance_to(1.0)
    assert sink.got[0][0] == pytest.approx(0.1) and net.now == 1.0


def test_taps_can_drop():
    net = Network()
    sink = net.register(Sink("b"))
    net.register(Sink("a"))
    net.taps.append(lambda s, d, c, data: None if data == b"drop" else data)
    net.send("a", "b", b"drop")
    net.send("a", "b", b"keep")
    net.run()
    assert [d for _, _, d in sink.got] == [b"keep"] and len(net.dropped) == 1


def test_register_and_send_errors():
    net = Network()
    net.register(Sink("a"))
    with pytest.raises(ValueError):
        net.register(Sink("a"))
    with pytest.raises(KeyError):
        net.send("a", "nowhere", b"")


# ------------------------------------------------------------------- onion


def _world(rng, n_relays=3, kem="stub", delay=0.025):
    net = Network(delay)
    k = kem_backend(kem)
    relays = [net.register(Relay(f"r{i}", k, rng)) for i in range(n_relays)]
    directory = [r.directory_entry() for r in relays]
    return net, k, relays, directory


def test_layer_geometry():
    assert [layer_len(h) for h in range(4)] == [507, 490, 473, 456]
    assert cells_for(0, "d") == 1


def test_cells_are_fixed_size(rng):
    net, k, relays, directory = _world(rng)
    net.register(Destination("svc", lambda m: m[::-1]))
    client = OnionClient("c", net, k, rng)
    circ = circuit_create(client, directory, ("r0", "r1", "r2"))
    onion_send(client, circ, "svc", b"hello")
    assert onion_receive(client, circ) == b"olleh"
    for rec in net.transcript:
        if rec.channel == "cell":
            assert rec.size == CELL_BYTES
    assert Cell.decode(client.trace[0]).circ_id == circ.circ_id


def test_build_time_is_twelve_hops(rng):
    net, k, _, directory = _world(rng)
    client = OnionClient("c", net, k, rng)
    circ = circuit_create(client, directory, ("r0", "r1", "r2"))
    assert circ.build_time == pytest.approx(12 * 0.025)


def test_many_messages_and_circuits_share_relays(rng):
    net, k, relays, directory = _world(rng, 4)
    net.register(Destination("svc", lambda m: b"ack:" + m))
    clients = [OnionClient(f"c{i}", net, k, rng) for i in range(3)]
    paths = [("r0", "r1", "r2"), ("r2", "r1", "r0"), ("r1", "r3", "r0")]
    circs = [circuit_create(c, directory, p) for c, p in zip(clients, paths)]
    for round_ in range(3):
        for i, (c, circ) in enumerate(zip(clients, circs)):
            msg = bytes([i, round_]) * 700
            onion_send(c, circ, "svc", msg)
            assert onion_receive(c, circ) == b"ack:" + msg


def test_tampered_cell_tears_down(rng):
    net, k, relays, directory = _world(rng)
    net.register(Destination("svc", lambda m: m))
    client = OnionClient("c", net, k, rng)
    circ = circuit_create(client, directory, ("r0", "r1", "r2"))

    def flip(src, dst, channel, data):
        if src == "c" and channel == "cell":
            data = data[:-1] + bytes([data[-1] ^ 1])
        return data

    net.taps.append(flip)
    onion_send(client, circ, "svc", b"x")
    assert onion_receive(client, circ) is None
    assert relays[0].dropped == 1 and circ.state == CircuitState.CLOSED


def test_closed_circuit_refuses_send(rng):
    net, k, _, directory = _world(rng)
    client = OnionClient("c", net, k, rng)
    circ = circuit_create(client, directory, ("r0", "r1", "r2"))
    client.circuit_close(circ)
    with pytest.raises(CircuitError):
        onion_send(client, circ, "r2", b"x")


def test_path_rules(rng):
    net, k, _, directory = _world(rng)
    client = OnionClient("c", net, k, rng)
    with pytest.raises(CircuitError):
        client.start_circuit(directory, ("r0", "r0", "r1"))
    assert choose_path(directory, np.random.default_rng(0)) == ("r0", "r1", "r2")
    net2, k2, _, d2 = _world(rng, 6)
    for seed in range(5):
        p = choose_path(d2, np.random.default_rng(seed))
        assert len(set(p)) == 3


def test_exit_knows_destination_only(rng):
    net, k, relays, directory = _world(rng)
    net.register(Destination("svc", lambda m: None))
    client = OnionClient("c", net, k, rng)
    circ = circuit_create(client, directory, ("r0", "r1", "r2"))
    onion_send(client, circ, "svc", b"secret-payload")
    net.run()
    assert relays[2].knowledge[0]["dest"] == {"svc"}
    assert all("dest" not in r.knowledge[0] for r in relays[:2])
    assert relays[0].knowledge[0]["prev"] == "c"
    assert all(r.knowledge[0]["prev"] != "c" for r in relays[1:])

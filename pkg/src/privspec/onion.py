"""Three-hop onion circuits over :mod:`privspec.netsim`.

Wire cells are 512 bytes: ``u32 circ_id || u8 command || 507 payload``.
Hop keys come from a KEM handshake per hop (telescoping CREATE/EXTEND)
and every relay layer is one AES-256-GCM seal.

Layer geometry: hop ``h`` sees ``L_h = 507 - 17 h`` ciphertext bytes.
Its plaintext is a marker byte (``0x00`` pass on, ``0x01`` addressed to
this hop) followed by ``L_{h+1}`` bytes, and a layer costs 17 bytes
(marker plus tag). Replies mirror this: the originating hop seals
``0x01 || message``; every hop closer to the client wraps the result
under ``0x00``. Nonces are per (hop key, direction) counters; hop keys
are unique per circuit.
"""

from __future__ import annotations

import enum
import struct
from collections import deque
from dataclasses import dataclass, field

from .crypto import AeadBackend, KemBackend, KemKeypair, derive_key
from .errors import CircuitError, FormatError
from .netsim import Network
from .util import as_rng

CELL_BYTES = 512
PAYLOAD_BYTES = 507
LAYER_BYTES = 17
N_HOPS = 3
FWD, BWD = 0, 1


def layer_len(hop: int) -> int:
    return PAYLOAD_BYTES - LAYER_BYTES * hop


class Cmd(enum.IntEnum):
    CREATE = 1
    CREATED = 2
    RELAY = 3
    DESTROY = 4


class RelayCmd(enum.IntEnum):
    EXTEND = 1
    EXTENDED = 2
    DATA = 3
    DATA_REPLY = 4


@dataclass(frozen=True)
class Cell:
    circ_id: int
    cmd: Cmd
    payload: bytes

    def encode(self) -> bytes:
        if len(self.payload) > PAYLOAD_BYTES:
            raise FormatError("cell payload too long")
        return struct.pack(">IB", self.circ_id, self.cmd) + self.payload.ljust(PAYLOAD_BYTES, b"\x00")

    @classmethod
    def decode(cls, data: bytes) -> "Cell":
        if len(data) != CELL_BYTES:
            raise FormatError(f"cells are {CELL_BYTES} bytes, got {len(data)}")
        cid, cmd = struct.unpack_from(">IB", data)
        try:
            return cls(cid, Cmd(cmd), data[5:])
        except ValueError:
            raise FormatError(f"unknown cell command {cmd}") from None


def _relay_msg(cmd: RelayCmd, body: bytes, size: int) -> bytes:
    if 3 + len(body) > size:
        raise FormatError("relay message exceeds layer capacity")
    return (struct.pack(">BH", cmd, len(body)) + body).ljust(size, b"\x00")


def _parse_relay_msg(data: bytes) -> tuple[RelayCmd, bytes]:
    cmd, n = struct.unpack_from(">BH", data)
    if 3 + n > len(data):
        raise FormatError("relay message length overruns layer")
    return RelayCmd(cmd), data[3:3 + n]


def _name(s: str) -> bytes:
    b = s.encode()
    return bytes([len(b)]) + b


def _unname(data: bytes, off: int = 0) -> tuple[str, int]:
    n = data[off]
    return data[off + 1:off + 1 + n].decode(), off + 1 + n


# handshake fragments: u16 total || u16 offset || chunk
def _fragments(blob: bytes, room: int) -> list[bytes]:
    chunk = room - 4
    out = []
    for off in range(0, max(len(blob), 1), chunk):
        out.append(struct.pack(">HH", len(blob), off) + blob[off:off + chunk])
    return out


class _Reassembly:
    def __init__(self) -> None:
        self.total = None
        self.parts: dict[int, bytes] = {}

    def add(self, frag: bytes) -> bytes | None:
        total, off = struct.unpack_from(">HH", frag)
        self.total = total
        self.parts[off] = frag[4:]
        have = sum(len(v) for v in self.parts.values())
        if have >= total:
            buf = b"".join(self.parts[k] for k in sorted(self.parts))
            return buf[:total]
        return None


# data fragments: u32 msg_id || u16 idx || u16 count || name(dest) || chunk
def data_capacity(dest: str) -> int:
    return layer_len(N_HOPS) - 3 - 8 - 1 - len(dest.encode())


def cells_for(size: int, dest: str) -> int:
    return max(1, -(-size // data_capacity(dest)))


@dataclass(frozen=True)
class DirectoryEntry:
    node_id: str
    roles: frozenset[str]
    kem_public: bytes


# ------------------------------------------------------------------ relay


@dataclass
class _HopState:
    key: bytes
    hop: int
    prev: tuple[str, int]
    next: tuple[str, int] | None = None
    fwd_ctr: int = 0
    bwd_ctr: int = 0
    extend_buf: _Reassembly | None = None


class Relay:
    def __init__(self, node_id: str, kem: KemBackend, rng=None, roles=("entry", "middle", "exit")) -> None:
        self.node_id = node_id
        self.kem = kem
        self.keypair: KemKeypair = kem.keygen(rng)
        self.aead = AeadBackend()
        self.roles = frozenset(roles)
        self.circuits: dict[tuple[str, int], _HopState] = {}
        self.by_next: dict[tuple[str, int], tuple[str, int]] = {}
        self.creating: dict[tuple[str, int], _Reassembly] = {}
        self.knowledge: list[dict] = []
        self.trace: list[bytes] = []
        self.dropped = 0
        self._next_circ = 1
        self._tokens: dict[int, tuple[tuple[str, int], int]] = {}
        self._next_token = 1
        self._data_bufs: dict[tuple[tuple[str, int], int], dict[int, bytes]] = {}

    def directory_entry(self) -> DirectoryEntry:
        return DirectoryEntry(self.node_id, self.roles, self.keypair.public_bytes)

    # -- helpers
    def _send_cell(self, net: Network, dst: str, cell: Cell) -> None:
        data = cell.encode()
        self.trace.append(data)
        net.send(self.node_id, dst, data, "cell")

    def _teardown(self, net: Network, key: tuple[str, int]) -> None:
        st = self.circuits.pop(key, None)
        if st is None:
            return
        self._send_cell(net, st.prev[0], Cell(st.prev[1], Cmd.DESTROY, b""))
        if st.next is not None:
            self.by_next.pop(st.next, None)
            self._send_cell(net, st.next[0], Cell(st.next[1], Cmd.DESTROY, b""))

    def _send_back(self, net: Network, st: _HopState, message: bytes) -> None:
        """Originate a backward message at this hop."""
        pt = b"\x01" + message
        ct = self.aead.seal(st.key, BWD, st.bwd_ctr, pt)
        st.bwd_ctr += 1
        self._send_cell(net, st.prev[0], Cell(st.prev[1], Cmd.RELAY, ct))

    # -- dispatch
    def on_frame(self, net: Network, src: str, channel: str, data: bytes) -> None:
        self.trace.append(data)
        if channel == "app":
            self._on_app(net, src, data)
            return
        cell = Cell.decode(data)
        key = (src, cell.circ_id)
        if cell.cmd == Cmd.CREATE:
            self._on_create(net, key, cell.payload)
        elif cell.cmd == Cmd.CREATED:
            prev = self.by_next.get(key)
            if prev is None:
                return
            st = self.circuits[prev]
            self._send_back(net, st, _relay_msg(RelayCmd.EXTENDED, cell.payload[:32], layer_len(st.hop + 1)))
        elif cell.cmd == Cmd.RELAY:
            if key in self.circuits:
                self._on_forward(net, key, cell.payload)
            elif key in self.by_next:
                self._on_backward(net, self.by_next[key], cell.payload)
        elif cell.cmd == Cmd.DESTROY:
            if key in self.circuits:
                st = self.circuits.pop(key)
                if st.next is not None:
                    self.by_next.pop(st.next, None)
                    self._send_cell(net, st.next[0], Cell(st.next[1], Cmd.DESTROY, b""))
            elif key in self.by_next:
                prev = self.by_next.pop(key)
                st = self.circuits.pop(prev, None)
                if st is not None:
                    self._send_cell(net, st.prev[0], Cell(st.prev[1], Cmd.DESTROY, b""))

    def _on_create(self, net: Network, key, payload: bytes) -> None:
        hop = payload[0]
        buf = self.creating.setdefault(key, _Reassembly())
        ct = buf.add(payload[1:])
        if ct is None:
            return
        del self.creating[key]
        try:
            ss = self.kem.decapsulate(self.keypair, ct)
        except Exception:  # KEM backends raise assorted errors on malformed input
            self._send_cell(net, key[0], Cell(key[1], Cmd.DESTROY, b""))
            return
        self.circuits[key] = _HopState(derive_key(ss, b"onion-hop-key"), hop, key)
        self.knowledge.append({"circuit": key[1], "prev": key[0], "next": None})
        self._send_cell(net, key[0], Cell(key[1], Cmd.CREATED, derive_key(ss, b"onion-confirm")))

    def _on_forward(self, net: Network, key, payload: bytes) -> None:
        st = self.circuits[key]
        L = layer_len(st.hop)
        pt = self.aead.open(st.key, FWD, st.fwd_ctr, payload[:L])
        st.fwd_ctr += 1
        if pt is None:
            self.dropped += 1
            self._teardown(net, key)
            return
        self.trace.append(pt)
        if pt[0] == 0x00:
            if st.next is None:
                self._teardown(net, key)
                return
            self._send_cell(net, st.next[0], Cell(st.next[1], Cmd.RELAY, pt[1:]))
            return
        cmd, body = _parse_relay_msg(pt[1:])
        if cmd == RelayCmd.EXTEND:
            self._on_extend(net, key, st, body)
        elif cmd == RelayCmd.DATA:
            self._on_data(net, key, st, body)

    def _on_extend(self, net: Network, key, st: _HopState, body: bytes) -> None:
        name, off = _unname(body)
        if st.extend_buf is None:
            st.extend_buf = _Reassembly()
        ct = st.extend_buf.add(body[off:])
        if ct is None:
            return
        st.extend_buf = None
        # the side with the larger name takes the high id half, so ids
        # chosen independently by two neighbours never collide
        circ = self._next_circ | (0x8000_0000 if self.node_id > name else 0)
        self._next_circ += 1
        st.next = (name, circ)
        self.by_next[st.next] = key
        for k in self.knowledge:
            if k["circuit"] == key[1] and k["prev"] == key[0]:
                k["next"] = name
        for frag in _fragments(ct, PAYLOAD_BYTES - 1):
            self._send_cell(net, name, Cell(circ, Cmd.CREATE, bytes([st.hop + 1]) + frag))

    def _on_data(self, net: Network, key, st: _HopState, body: bytes) -> None:
        msg_id, idx, count = struct.unpack_from(">IHH", body)
        dest, off = _unname(body, 8)
        bufs = self._data_bufs.setdefault((key, msg_id), {})
        bufs[idx] = body[off:]
        if len(bufs) < count:
            return
        message = b"".join(bufs[i] for i in range(count))
        del self._data_bufs[(key, msg_id)]
        token = self._next_token
        self._next_token += 1
        self._tokens[token] = (key, msg_id)
        for k in self.knowledge:
            if k["circuit"] == key[1] and k["prev"] == key[0]:
                k.setdefault("dest", set()).add(dest)
        net.send(self.node_id, dest, struct.pack(">I", token) + message, "app")

    def _on_app(self, net: Network, src: str, data: bytes) -> None:
        (token,) = struct.unpack_from(">I", data)
        entry = self._tokens.pop(token, None)
        if entry is None:
            return
        key, msg_id = entry
        st = self.circuits.get(key)
        if st is None:
            return
        for body in _data_fragments(data[4:], msg_id, src, layer_len(st.hop + 1) - 3):
            self._send_back(net, st, _relay_msg(RelayCmd.DATA_REPLY, body, layer_len(st.hop + 1)))

    def _on_backward(self, net: Network, key, payload: bytes) -> None:
        st = self.circuits.get(key)
        if st is None:
            return
        inner = payload[:layer_len(st.hop + 1)]
        ct = self.aead.seal(st.key, BWD, st.bwd_ctr, b"\x00" + inner)
        st.bwd_ctr += 1
        self._send_cell(net, st.prev[0], Cell(st.prev[1], Cmd.RELAY, ct))


def _data_fragments(message: bytes, msg_id: int, name: str, room: int) -> list[bytes]:
    head = 8 + 1 + len(name.encode())
    chunk = room - head
    if chunk <= 0:
        raise FormatError("destination name too long for a cell")
    pieces = [message[i:i + chunk] for i in range(0, len(message), chunk)] or [b""]
    return [struct.pack(">IHH", msg_id, i, len(pieces)) + _name(name) + p for i, p in enumerate(pieces)]


# ---------------------------------------------------------------- circuit


class CircuitState(enum.Enum):
    BUILDING = "building"
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class Circuit:
    circ_id: int
    path: tuple[str, ...]
    hop_keys: list[bytes] = field(default_factory=list)
    state: CircuitState = CircuitState.BUILDING
    fwd_ctr: list[int] = field(default_factory=lambda: [0] * N_HOPS)
    bwd_ctr: list[int] = field(default_factory=lambda: [0] * N_HOPS)
    built_at: float | None = None
    started_at: float = 0.0
    replies: deque = field(default_factory=deque)
    _pending_ss: bytes | None = None
    _reply_bufs: dict = field(default_factory=dict)
    _next_msg: int = 1

    @property
    def build_time(self) -> float | None:
        return None if self.built_at is None else self.built_at - self.started_at


class OnionClient:
    def __init__(self, node_id: str, net: Network, kem: KemBackend, rng=None) -> None:
        self.node_id = node_id
        self.net = net
        self.kem = kem
        self.rng = as_rng(rng)
        self.aead = AeadBackend()
        self.circuits: dict[int, Circuit] = {}
        self.entries: dict[str, DirectoryEntry] = {}
        self.trace: list[bytes] = []
        net.register(self)

    def _send_cell(self, dst: str, cell: Cell) -> None:
        data = cell.encode()
        self.trace.append(data)
        self.net.send(self.node_id, dst, data, "cell")

    def _encapsulate(self, hop_name: str) -> tuple[bytes, bytes]:
        return self.kem.encapsulate(self.entries[hop_name].kem_public, self.rng)

    def _wrap_forward(self, circ: Circuit, target: int, message: bytes) -> bytes:
        data = b"\x01" + message
        for h in range(target, -1, -1):
            data = self.aead.seal(circ.hop_keys[h], FWD, circ.fwd_ctr[h], data)
            circ.fwd_ctr[h] += 1
            if h:
                data = b"\x00" + data
        return data

    def _send_relay(self, circ: Circuit, target: int, cmd: RelayCmd, body: bytes) -> None:
        msg = _relay_msg(cmd, body, layer_len(target + 1))
        self._send_cell(circ.path[0], Cell(circ.circ_id, Cmd.RELAY, self._wrap_forward(circ, target, msg)))

    def _extend(self, circ: Circuit) -> None:
        hop = len(circ.hop_keys)
        name = circ.path[hop]
        ss, ct = self._encapsulate(name)
        circ._pending_ss = ss
        room = layer_len(hop) - 3 - 1 - len(name.encode())
        for frag in _fragments(ct, room):
            self._send_relay(circ, hop - 1, RelayCmd.EXTEND, _name(name) + frag)

    def start_circuit(self, directory: list[DirectoryEntry], path: tuple[str, str, str] | None = None) -> Circuit:
        self.entries = {e.node_id: e for e in directory}
        if path is None:
            path = choose_path(directory, self.rng)
        if len(set(path)) != N_HOPS:
            raise CircuitError("a circuit needs three distinct relays")
        cid = int(self.rng.integers(1, 2**32 - 1))
        circ = Circuit(cid, tuple(path), started_at=self.net.now)
        self.circuits[cid] = circ
        ss, ct = self._encapsulate(path[0])
        circ._pending_ss = ss
        for frag in _fragments(ct, PAYLOAD_BYTES - 1):
            self._send_cell(path[0], Cell(cid, Cmd.CREATE, b"\x00" + frag))
        return circ

    def _hop_ready(self, circ: Circuit, confirm: bytes) -> None:
        ss = circ._pending_ss
        if ss is None or derive_key(ss, b"onion-confirm") != confirm:
            circ.state = CircuitState.CLOSED
            return
        circ._pending_ss = None
        circ.hop_keys.append(derive_key(ss, b"onion-hop-key"))
        if len(circ.hop_keys) == N_HOPS:
            circ.state = CircuitState.OPEN
            circ.built_at = self.net.now
        else:
            self._extend(circ)

    def on_frame(self, net: Network, src: str, channel: str, data: bytes) -> None:
        self.trace.append(data)
        cell = Cell.decode(data)
        circ = self.circuits.get(cell.circ_id)
        if circ is None or src != circ.path[0]:
            return
        if cell.cmd == Cmd.CREATED:
            self._hop_ready(circ, cell.payload[:32])
        elif cell.cmd == Cmd.DESTROY:
            circ.state = CircuitState.CLOSED
        elif cell.cmd == Cmd.RELAY:
            self._on_backward(circ, cell.payload)

    def _on_backward(self, circ: Circuit, payload: bytes) -> None:
        data = payload
        for h in range(len(circ.hop_keys)):
            pt = self.aead.open(circ.hop_keys[h], BWD, circ.bwd_ctr[h], data[:layer_len(h)])
            circ.bwd_ctr[h] += 1
            if pt is None:
                self.circuit_close(circ)
                return
            if pt[0] == 0x01:
                cmd, body = _parse_relay_msg(pt[1:])
                if cmd == RelayCmd.EXTENDED:
                    self._hop_ready(circ, body)
                elif cmd == RelayCmd.DATA_REPLY:
                    self._on_reply(circ, body)
                return
            data = pt[1:]
        self.circuit_close(circ)

    def _on_reply(self, circ: Circuit, body: bytes) -> None:
        msg_id, idx, count = struct.unpack_from(">IHH", body)
        src, off = _unname(body, 8)
        bufs = circ._reply_bufs.setdefault(msg_id, {})
        bufs[idx] = body[off:]
        if len(bufs) == count:
            circ.replies.append((msg_id, src, b"".join(bufs[i] for i in range(count))))
            del circ._reply_bufs[msg_id]

    def circuit_close(self, circ: Circuit) -> None:
        if circ.state != CircuitState.CLOSED:
            circ.state = CircuitState.CLOSED
            self._send_cell(circ.path[0], Cell(circ.circ_id, Cmd.DESTROY, b""))

    def send(self, circ: Circuit, destination: str, message: bytes) -> int:
        if circ.state != CircuitState.OPEN:
            raise CircuitError(f"circuit is {circ.state.value}")
        msg_id = circ._next_msg
        circ._next_msg += 1
        for body in _data_fragments(message, msg_id, destination, layer_len(N_HOPS) - 3):
            self._send_relay(circ, N_HOPS - 1, RelayCmd.DATA, body)
        return msg_id


def choose_path(directory: list[DirectoryEntry], rng=None) -> tuple[str, str, str]:
    """Entry, middle, exit. With exactly three relays the order is the directory order."""
    if len(directory) < N_HOPS:
        raise CircuitError("directory lists fewer than three relays")
    if len(directory) == N_HOPS:
        return tuple(e.node_id for e in directory)
    g = as_rng(rng)
    picks = []
    for role in ("entry", "middle", "exit"):
        cands = [e.node_id for e in directory if role in e.roles and e.node_id not in picks]
        if not cands:
            raise CircuitError(f"no relay offers the {role} role")
        picks.append(cands[int(g.integers(len(cands)))])
    return tuple(picks)


def circuit_create(client: OnionClient, directory: list[DirectoryEntry], path=None) -> Circuit:
    """Build a circuit and run the network until it opens or fails."""
    circ = client.start_circuit(directory, path)
    client.net.run_until(lambda: circ.state != CircuitState.BUILDING)
    if circ.state != CircuitState.OPEN:
        raise CircuitError("circuit build failed")
    return circ


def onion_send(client: OnionClient, circ: Circuit, destination: str, message: bytes) -> int:
    return client.send(circ, destination, message)


def onion_receive(client: OnionClient, circ: Circuit) -> bytes | None:
    """Run the network until a reply arrives or the circuit closes."""
    client.net.run_until(lambda: bool(circ.replies) or circ.state == CircuitState.CLOSED)
    if circ.replies:
        return circ.replies.popleft()[2]
    return None


class Destination:
    """Application endpoint behind the exit; ``handler(message) -> reply``."""

    def __init__(self, node_id: str, handler) -> None:
        self.node_id = node_id
        self.handler = handler
        self.received: list[bytes] = []

    def on_frame(self, net: Network, src: str, channel: str, data: bytes) -> None:
        token, message = data[:4], data[4:]
        self.received.append(message)
        reply = self.handler(message)
        if reply is not None:
            net.send(self.node_id, src, token + reply, "app")

"""Discrete-event end-to-end run: APs, PSDs, relays, the SAS and clients.

Each honest user starts in its own beacon window so that users sharing
an AP never collide on the per-window rate limit. After the honest
users, a fixed attack matrix runs in fresh windows.
"""

from __future__ import annotations

import csv
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..crypto import kem_backend, signature_backend
from ..errors import CapacityError, ConfigError, ProximityError, SignatureError, StaleBeaconError
from ..location import (
    AccessPoint,
    Beacon,
    IdealAttestor,
    PolRequest,
    ProofOfLocation,
    RingContext,
    beacon_window,
    lrs_keygen,
    pol_request,
    pol_verify,
    rss_at,
    rtt_at,
)
from ..netsim import Network
from ..onion import CircuitState, Destination, OnionClient, Relay, circuit_create
from ..pir import (
    PirFrame,
    decode_field,
    encode_bits,
    encode_field,
    ens_query_gen,
    ens_reconstruct,
    ftr_query_gen,
    ftr_reconstruct,
    oop_query_gen,
    oop_reconstruct,
)
from ..pir.ftr import DEFAULT_MODULUS
from ..pow import PowKind, solve_to_bytes
from ..pow.hct import hct_gen
from ..protocol import MsgType, QueryRequest, Reject, ServiceRequest, Stage, parse_decision
from ..psd import PsdConfig, PsdNode
from ..sas import SasServer, Token, create_token, token_context
from ..spectrum_db import (
    BoundPuzzle,
    DbEntryBlock,
    GridCoordinate,
    GridDims,
    RowMajorIndex,
    Scheme,
    SpectrumRecord,
    build_db,
    puzzle_bind,
    validity_window,
)
from .config import SimConfig

# Phase name -> first step of the flow it belongs to; the transcript's
# phase log must be non-decreasing in this number for every user.
PHASES = {"bind": 1, "pol": 2, "query": 9, "response": 14, "reconstruct": 20, "solve": 24, "service": 26}
USER_PHASES = ("pol", "query", "response", "reconstruct", "solve", "service")


# --------------------------------------------------------------- radio


def _encode_beacon(b: Beacon) -> bytes:
    return b"B" + b.ap_hint + struct.pack("<Q", b.window_id) + b.nonce


def _decode_beacon(data: bytes) -> Beacon:
    (window,) = struct.unpack_from("<Q", data, 5)
    return Beacon(data[1:5], window, data[13:21])


def _encode_pol_req(req: PolRequest) -> bytes:
    return b"R" + req.commitment + req.beacon_nonce + struct.pack("<Qdd", req.window_id, req.rss_dbm, req.rtt_s)


def _decode_pol_req(data: bytes) -> PolRequest:
    window, rss, rtt = struct.unpack_from("<Qdd", data, 41)
    return PolRequest(data[1:33], data[33:41], window, rss, rtt)


class ApNode:
    """Radio front-end of an access point."""

    STALE, FAR = 1, 2

    def __init__(self, ap: AccessPoint, net: Network) -> None:
        self.ap = ap
        self.node_id = f"ap-{ap.ap_id}"
        self.net = net
        net.register(self)

    def beacon_to(self, dst: str, window: int) -> None:
        self.net.send(self.node_id, dst, _encode_beacon(self.ap.broadcast(window)), "radio")

    def on_frame(self, net: Network, src: str, channel: str, data: bytes) -> None:
        try:
            pol = self.ap.pol_respond(_decode_pol_req(data))
            reply = b"P\x00" + pol.to_bytes()
        except StaleBeaconError:
            reply = bytes([ord("P"), self.STALE])
        except ProximityError:
            reply = bytes([ord("P"), self.FAR])
        net.send(self.node_id, src, reply, "radio")


class RadioNode:
    def __init__(self, node_id: str, net: Network) -> None:
        self.node_id = node_id
        self.inbox: list[bytes] = []
        net.register(self)

    def on_frame(self, net: Network, src: str, channel: str, data: bytes) -> None:
        self.inbox.append(data)


# -------------------------------------------------------------- results


@dataclass
class PhaseRow:
    user: str
    phase: str
    step: int
    sim_start: float
    sim_end: float
    wall_ms: float
    bytes_on_wire: int
    frames: int


@dataclass
class SimResult:
    config: SimConfig
    phase_rows: list[PhaseRow] = field(default_factory=list)
    outcomes: dict[str, int] = field(default_factory=dict)
    attacks: dict[str, tuple[str, str]] = field(default_factory=dict)   # name -> (expected, observed)
    failures: list[str] = field(default_factory=list)
    transcript_digest: str = ""
    n_frames: int = 0
    sim_seconds: float = 0.0
    wall_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def phase_order_ok(self) -> bool:
        last: dict[str, int] = {}
        for row in self.phase_rows:
            if row.step < last.get(row.user, 0):
                return False
            last[row.user] = row.step
        return True

    def per_phase(self) -> dict[str, list[PhaseRow]]:
        out: dict[str, list[PhaseRow]] = {p: [] for p in PHASES}
        for row in self.phase_rows:
            out[row.phase].append(row)
        return out

    def write_csv(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        cols = ["user", "phase", "step", "sim_start", "sim_end", "wall_ms", "bytes_on_wire", "frames"]
        for phase, rows in self.per_phase().items():
            path = out_dir / f"phase_{PHASES[phase]:02d}_{phase}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for r in rows:
                    w.writerow([r.user, r.phase, r.step, f"{r.sim_start:.6f}", f"{r.sim_end:.6f}",
                                f"{r.wall_ms:.3f}", r.bytes_on_wire, r.frames])
            paths.append(path)
        path = out_dir / "outcomes.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "name", "expected", "observed"])
            for k, v in sorted(self.outcomes.items()):
                w.writerow(["count", k, "", v])
            for name, (exp, obs) in self.attacks.items():
                w.writerow(["attack", name, exp, obs])
            w.writerow(["digest", "transcript", "", self.transcript_digest])
        paths.append(path)
        return paths


class SimFailure(AssertionError):
    pass


# ---------------------------------------------------------------- world


class _Phase:
    def __init__(self, world: "World", user: str, name: str) -> None:
        self.world, self.user, self.name = world, user, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.s0 = self.world.net.now
        self.n0 = len(self.world.net.transcript)
        return self

    def __exit__(self, *exc):
        net = self.world.net
        recs = net.transcript[self.n0:]
        self.world.result.phase_rows.append(PhaseRow(
            self.user, self.name, PHASES[self.name], self.s0, net.now,
            (time.perf_counter() - self.t0) * 1e3, sum(r.size for r in recs), len(recs)))
        return False


class World:
    def __init__(self, cfg: SimConfig) -> None:
        self.cfg = cfg
        self.result = SimResult(cfg)
        self._seed = np.random.SeedSequence(cfg.seed)
        self.rng = self._child()
        self.scheme = cfg.scheme_id
        self.kind = cfg.pow_id
        self.sig = signature_backend(cfg.sig_backend)
        self.kem = kem_backend(cfg.kem_backend)
        self.net = Network(cfg.link_delay_ms / 1e3, jitter=cfg.jitter_ms / 1e3, rng=self._child())

        # location infrastructure
        keys = [lrs_keygen(self.rng) for _ in range(cfg.ring_size)]
        self.ring = RingContext([pk for _, pk in keys])
        self.sok = IdealAttestor(self.rng.bytes(32))
        self.aps = [ApNode(AccessPoint(j, sk, self.ring, self.sok, delta_th=cfg.delta_th), self.net)
                    for j, (sk, _) in enumerate(keys)]

        # spectrum database shared by every replica
        cells = cfg.db_rows // (cfg.n_ch * cfg.n_tv)
        self.dims = GridDims(cells, 1, cfg.n_ch, cfg.n_tv)
        self.encoder = RowMajorIndex(self.dims)
        self.issuer = self.sig.keygen(self.rng)
        self.base_db = build_db(self._records(), self.dims, cfg.block_bytes * 8)
        self.puzzle_window = -1
        # LBP solutions are deterministic, so two users on one row and window would replay
        self.row_order = None
        if cfg.pow_id == PowKind.LBP:
            seq = np.random.SeedSequence(cfg.seed, spawn_key=(0x1B,))
            self.row_order = np.random.default_rng(seq).permutation(self.base_db.rows)

        # servers
        ell = cfg.n_psd
        self.psds: list[PsdNode] = []
        for i in range(ell):
            pcfg = PsdConfig(i, ell, self.scheme, ftr_t=cfg.ftr_t, oop_t=cfg.oop_t or None, workers=cfg.workers,
                             pow_kind=self.kind, difficulties=(cfg.kappa,), n_leaves=cfg.n_leaves,
                             validity_s=cfg.validity_s)
            node = PsdNode(pcfg, self.base_db, self.issuer, self.sig, self.ring, self.sok, rng=self._child())
            self.psds.append(node)
            self.net.register(Destination(node.node_id, self._psd_handler(i)))
        self.sas = SasServer(self.issuer.public_bytes, self.sig, self.ring, self.sok, cfg.validity_s)
        self.net.register(Destination(self.sas.node_id, self._sas_handler))

        self.relays = [self.net.register(Relay(f"relay-{i}", self.kem, self._child())) for i in range(cfg.n_relays)]
        self.directory = [r.directory_entry() for r in self.relays]
        self._byz_rng = self._child()

    def _child(self) -> np.random.Generator:
        return np.random.default_rng(self._seed.spawn(1)[0])

    def _records(self) -> list[SpectrumRecord]:
        g = self.rng
        out = []
        for theta in range(self.dims.rows):
            coord, ch, tv = self.encoder.inverse(theta)
            out.append(SpectrumRecord(coord, ch, tv, int(g.integers(-3000, 3601)), bool(g.integers(0, 2))))
        return out

    # ------------------------------------------------------------ clock

    def windows(self) -> tuple[int, int]:
        now = self.net.now
        return beacon_window(now, self.cfg.window_s), validity_window(now, self.cfg.validity_s)

    def goto(self, t: float) -> None:
        self.net.advance_to(t)
        bw, pw = self.windows()
        for psd in self.psds:
            psd.rotate_window(bw)
        if pw != self.puzzle_window:
            with _Phase(self, "psd", "bind"):
                try:
                    db = puzzle_bind(self.base_db, self.issuer, self.kind, [self.cfg.kappa], window=pw,
                                     rng=self.rng, n_leaves=self.cfg.n_leaves, lbp_dim=self.cfg.lbp_dim)
                except CapacityError as exc:
                    raise ConfigError("block_bytes", str(exc)) from None
                for psd in self.psds:
                    psd.refresh_puzzles(self.net.now, bw, db=db)
            self.sas.purge(pw)
            self.puzzle_window = pw

    # --------------------------------------------------------- servers

    def _psd_handler(self, i: int):
        psd = self.psds[i]

        def handler(msg: bytes) -> bytes:
            psd.rotate_window(self.windows()[0])
            reply = psd.handle(msg)
            if i == self.cfg.byzantine_psd and reply[:1] == bytes([Reject.OK]) and msg[:1] == bytes([MsgType.QUERY]):
                frame = PirFrame.decode(reply[1:])
                vals = decode_field(frame.payload).astype(np.int64)
                vals = (vals + self._byz_rng.integers(1, DEFAULT_MODULUS, size=vals.shape)) % DEFAULT_MODULUS
                reply = reply[:1] + PirFrame(frame.scheme, frame.server_id, encode_field(vals)).encode()
            return reply

        return handler

    def _sas_handler(self, msg: bytes) -> bytes:
        bw, pw = self.windows()
        return self.sas.handle(msg, pw, bw)

    def count(self, key: str) -> None:
        self.result.outcomes[key] = self.result.outcomes.get(key, 0) + 1


class SimClient:
    """One user: a radio interface plus an onion client."""

    def __init__(self, world: World, name: str) -> None:
        self.w = world
        self.name = name
        self.radio = RadioNode(f"{name}-radio", world.net)
        self.onion = OnionClient(name, world.net, world.kem, world._child())
        self.rng = world._child()

    # ---------------------------------------------------------- radio

    def acquire_pol(self, ap: ApNode, coord: GridCoordinate, distance: float):
        """Beacon, commitment, PoL. Returns ``(pol, commitment)`` or ``(None, status)``."""
        net = self.w.net
        bw, _ = self.w.windows()
        self.radio.inbox.clear()
        ap.beacon_to(self.radio.node_id, bw)
        net.run_until(lambda: bool(self.radio.inbox))
        beacon = _decode_beacon(self.radio.inbox.pop())
        req, com = pol_request(coord, beacon, rss_at(distance), rtt_at(distance), self.rng)
        net.send(self.radio.node_id, ap.node_id, _encode_pol_req(req), "radio")
        net.run_until(lambda: bool(self.radio.inbox))
        reply = self.radio.inbox.pop()
        if reply[1] != 0:
            return None, reply[1]
        pol = ProofOfLocation.from_bytes(reply[2:])
        if not pol_verify(pol, self.w.ring, beacon.window_id, self.w.sok):
            return None, -1
        return pol, com

    # ---------------------------------------------------------- onion

    def circuit(self):
        return circuit_create(self.onion, self.w.directory)

    def exchange(self, pairs: list[tuple[object, str, bytes]]) -> list[bytes | None]:
        """Send one message per (circuit, destination) and wait for every reply."""
        for circ, dest, msg in pairs:
            self.onion.send(circ, dest, msg)
        circs = [c for c, _, _ in pairs]
        self.w.net.run_until(lambda: all(c.replies or c.state == CircuitState.CLOSED for c in circs))
        return [c.replies.popleft()[2] if c.replies else None for c in circs]

    def close(self, circs) -> None:
        for c in circs:
            self.onion.circuit_close(c)
        self.w.net.run()

    # ------------------------------------------------------------ PIR

    def build_queries(self, theta: int, circs) -> tuple[list[bytes], object]:
        """Per-PSD PIR frames; OOP first runs the seed handshake."""
        w = self.w
        r, ell = w.base_db.rows, len(w.psds)
        if w.scheme == Scheme.ENS:
            q = ens_query_gen(theta, r, ell, self.rng)
            return [PirFrame(Scheme.ENS, i, encode_bits(s)).encode() for i, s in enumerate(q.shares)], q
        if w.scheme == Scheme.FTR:
            q = ftr_query_gen(theta, r, ell, w.cfg.ftr_t, DEFAULT_MODULUS, self.rng)
            return [PirFrame(Scheme.FTR, i, encode_field(v)).encode() for i, v in enumerate(q.vectors)], q
        replies = self.exchange([(c, p.node_id, bytes([MsgType.OOP_HANDSHAKE])) for c, p in zip(circs, w.psds)])
        sids, seeds, layouts = [], [], []
        for rep in replies:
            if rep is None or rep[0] != Reject.OK:
                raise SimFailure(f"{self.name}: OOP handshake refused")
            sids.append(struct.unpack_from("<I", rep, 1)[0])
            seeds.append(rep[5:21])
            n = rep[21]
            layouts.append(tuple(rep[22:22 + n]))
        subs = oop_query_gen(theta, seeds, layouts, r)
        return [PirFrame(Scheme.OOP, i, struct.pack("<I", sid) + encode_bits(s)).encode()
                for i, (sid, s) in enumerate(zip(sids, subs))], None

    def reconstruct(self, replies: list[bytes | None]) -> bytes:
        w = self.w
        payloads = []
        for rep in replies:
            if rep is None or rep[0] != Reject.OK:
                payloads.append(None)
            else:
                payloads.append(PirFrame.decode(rep[1:]).payload)
        if w.scheme == Scheme.ENS:
            return ens_reconstruct(payloads, len(w.psds))
        if w.scheme == Scheme.FTR:
            resp = {i: decode_field(p) for i, p in enumerate(payloads) if p is not None}
            return ftr_reconstruct(resp, w.cfg.ftr_t, modulus=DEFAULT_MODULUS)
        return oop_reconstruct(payloads)


# ---------------------------------------------------------------- flows


def _honest_user(w: World, u: int) -> None:
    cfg = w.cfg
    name = f"user-{u}"
    w.goto(u * cfg.window_s + 1.0)
    cl = SimClient(w, name)
    g = cl.rng
    ap = w.aps[u % len(w.aps)]
    if w.row_order is None:
        theta = int(g.integers(w.base_db.rows))
    else:
        per_window = max(cfg.validity_s // cfg.window_s, 1)
        theta = int(w.row_order[(u % per_window) % w.base_db.rows])
    coord, ch, tv = w.encoder.inverse(theta)
    dist = float(g.uniform(1.0, 0.8 * cfg.delta_th))

    with _Phase(w, name, "pol"):
        pol, com = cl.acquire_pol(ap, coord, dist)
    if pol is None:
        raise SimFailure(f"{name}: AP refused PoL (status {com})")
    with _Phase(w, name, "query"):
        circs = [cl.circuit() for _ in w.psds]
        frames, _ = cl.build_queries(theta, circs)
        for c, psd, f in zip(circs, w.psds, frames):
            cl.onion.send(c, psd.node_id, QueryRequest(f, pol).encode())
    with _Phase(w, name, "response"):
        w.net.run_until(lambda: all(c.replies or c.state == CircuitState.CLOSED for c in circs))
        replies = [c.replies.popleft()[2] if c.replies else None for c in circs]
    with _Phase(w, name, "reconstruct"):
        raw = cl.reconstruct(replies)
        block = DbEntryBlock.decode(raw)
    if raw != w.psds[0].db.row(theta) or (block.record.coord, block.record.channel, block.record.time_window) != (coord, ch, tv):
        raise SimFailure(f"{name}: reconstructed the wrong block")
    _, pw = w.windows()
    with _Phase(w, name, "solve"):
        token = create_token(block, theta, w.issuer.public_bytes, w.sig, current_window=pw, rng=g)
    with _Phase(w, name, "service"):
        sas_c = cl.circuit()
        req = ServiceRequest(token.to_bytes(), pol, com.digest, com.opening)
        (rep,) = cl.exchange([(sas_c, w.sas.node_id, req.encode())])
    granted, stage = parse_decision(rep)
    cl.close(circs + [sas_c])
    if not granted:
        raise SimFailure(f"{name}: service denied at stage {Stage(stage).name}")
    w.count("granted")


def _query_once(cl: SimClient, circ, psd_index: int, theta: int, pol: ProofOfLocation) -> int:
    """Single ENS/FTR/OOP query to one PSD; returns the status byte."""
    w = cl.w
    if w.scheme == Scheme.OOP:
        # only the status matters here, so one handshake and an empty sub-query
        (rep,) = cl.exchange([(circ, w.psds[psd_index].node_id, bytes([MsgType.OOP_HANDSHAKE]))])
        sid = struct.unpack_from("<I", rep, 1)[0]
        k = w.base_db.rows // len(w.psds)
        frame = PirFrame(Scheme.OOP, psd_index, struct.pack("<I", sid) + encode_bits(np.zeros(k, np.uint8))).encode()
    else:
        frames, _ = cl.build_queries(theta, None)
        frame = frames[psd_index]
    (rep,) = cl.exchange([(circ, w.psds[psd_index].node_id, QueryRequest(frame, pol).encode())])
    return rep[0]


def _attack(w: World, name: str, expected: str, observed: str) -> None:
    w.result.attacks[name] = (expected, observed)
    if expected != observed:
        w.result.failures.append(f"attack {name}: expected {expected}, observed {observed}")


def _attacks(w: World, start_window: int) -> None:
    cfg = w.cfg
    win = start_window
    mal = SimClient(w, "mallory")
    g = mal.rng
    ap = w.aps[0]
    coord = GridCoordinate(0, 0)
    near = 0.25 * cfg.delta_th

    # replayed PoL, then the same PoL in the next window
    w.goto(win * cfg.window_s + 1.0)
    circ = mal.circuit()
    pol, com = mal.acquire_pol(ap, coord, near)
    first = _query_once(mal, circ, 0, 0, pol)
    replay = _query_once(mal, circ, 0, 0, pol)
    _attack(w, "fresh-pol", Reject.OK.name, Reject(first).name)
    _attack(w, "replayed-pol", Reject.RATE_LIMITED.name, Reject(replay).name)
    mal.close([circ])
    win += 1
    w.goto(win * cfg.window_s + 1.0)
    circ = mal.circuit()
    _attack(w, "foreign-window-pol", Reject.BAD_PROOF.name, Reject(_query_once(mal, circ, 0, 0, pol)).name)

    # ring signature from outside the PSD's ring
    rogue_keys = [lrs_keygen(g) for _ in range(2)]
    rogue_ring = RingContext([pk for _, pk in rogue_keys])
    rogue = AccessPoint(99, rogue_keys[0][0], rogue_ring, w.sok)
    beacon = rogue.broadcast(w.windows()[0])
    req, rcom = pol_request(coord, beacon, rss_at(near), rtt_at(near), g)
    rogue_pol = rogue.pol_respond(req)
    _attack(w, "wrong-ring-pol", Reject.BAD_PROOF.name, Reject(_query_once(mal, circ, 0, 0, rogue_pol)).name)

    # distance spoofing is refused by the AP itself
    _, status = mal.acquire_pol(w.aps[1], coord, 4 * cfg.delta_th)
    _attack(w, "far-from-ap", "FAR", "FAR" if status == ApNode.FAR else str(status))
    mal.close([circ])

    # service-side archetypes, all in one fresh window
    win += 1
    w.goto(win * cfg.window_s + 1.0)
    bw, pw = w.windows()
    pol, com = mal.acquire_pol(ap, coord, near)
    sas_c = mal.circuit()
    theta = 0
    block = w.psds[0].db.block(theta)

    def submit(token: Token, p: ProofOfLocation = pol, c=com) -> str:
        req = ServiceRequest(token.to_bytes(), p, c.digest, c.opening)
        (rep,) = mal.exchange([(sas_c, w.sas.node_id, req.encode())])
        granted, stage = parse_decision(rep)
        return Stage(stage).name

    # a puzzle the PSDs never signed
    fake = BoundPuzzle(PowKind.HCT, cfg.kappa, hct_gen(256, cfg.kappa, cfg.n_leaves, g).to_bytes())
    sol = solve_to_bytes(fake.kind, fake.decode(), token_context(theta, pw), g)
    forged = Token(theta, pw, (fake,), 0, bytes(w.sig.signature_size), sol)
    _attack(w, "unsigned-puzzle", Stage.SIGNATURE.name, submit(forged))
    try:
        create_token(DbEntryBlock(block.record, (fake,), pw, bytes(w.sig.signature_size)), theta,
                     w.issuer.public_bytes, w.sig, current_window=pw, rng=g)
        solved = "solved"
    except SignatureError:
        solved = "refused"
    _attack(w, "client-refuses-unsigned", "refused", solved)

    token = create_token(block, theta, w.issuer.public_bytes, w.sig, current_window=pw, rng=g)
    _attack(w, "first-token", Stage.GRANTED.name, submit(token))
    _attack(w, "reused-token", Stage.REPLAY.name, submit(token))

    # a different row, so the token cannot collide with the one above
    token2 = create_token(w.psds[0].db.block(1), 1, w.issuer.public_bytes, w.sig, current_window=pw, rng=g)
    rreq, rcom = pol_request(coord, rogue.broadcast(bw), rss_at(near), rtt_at(near), g)
    _attack(w, "wrong-ring-service", Stage.POL.name, submit(token2, rogue.pol_respond(rreq), rcom))
    mal.close([sas_c])

    # flooder: many fresh PoLs from one AP in one window, each sent to every PSD
    win += 1
    w.goto(win * cfg.window_s + 1.0)
    flood = SimClient(w, "flooder")
    circs = [flood.circuit() for _ in w.psds]
    accepted = [0] * len(w.psds)
    limited = [0] * len(w.psds)
    for _ in range(cfg.flood_queries):
        fpol, _ = flood.acquire_pol(ap, coord, near)
        for i, c in enumerate(circs):
            st = _query_once(flood, c, i, 0, fpol)
            accepted[i] += st == Reject.OK
            limited[i] += st == Reject.RATE_LIMITED
    flood.close(circs)
    exp = f"1/{cfg.flood_queries - 1}"
    for i in range(len(w.psds)):
        _attack(w, f"flooder-psd{i}", exp, f"{accepted[i]}/{limited[i]}")


def run_sim(cfg: SimConfig, out_dir=None) -> SimResult:
    """Run honest users then the attack matrix; raises nothing on protocol failures.

    Failures are collected in ``result.failures``.
    """
    t0 = time.perf_counter()
    w = World(cfg)
    w.goto(0.0)
    for u in range(cfg.n_users):
        try:
            _honest_user(w, u)
        except SimFailure as exc:
            w.result.failures.append(str(exc))
            w.count("denied")
    if cfg.attacks:
        _attacks(w, cfg.n_users + 1)
    res = w.result
    if not res.phase_order_ok():
        res.failures.append("phase log is out of order")
    res.transcript_digest = w.net.transcript_digest()
    res.n_frames = len(w.net.transcript)
    res.sim_seconds = w.net.now
    res.wall_seconds = time.perf_counter() - t0
    if out_dir is not None:
        res.write_csv(out_dir)
    return res

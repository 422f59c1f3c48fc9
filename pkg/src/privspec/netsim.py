"""Deterministic discrete-event network.

Frames are delivered in timestamp order (ties broken by send order) and
links are FIFO even with jitter. Every frame is logged once in the
transcript with its endpoints, channel, size and digest.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from typing import Callable, Protocol

from .util import as_rng

Tap = Callable[[str, str, str, bytes], bytes | None]


class Node(Protocol):
    node_id: str

    def on_frame(self, net: "Network", src: str, channel: str, data: bytes) -> None: ...


@dataclass(frozen=True)
class FrameRecord:
    seq: int
    t_send: float
    t_recv: float
    src: str
    dst: str
    channel: str
    size: int
    digest: bytes

    def line(self) -> str:
        return (f"{self.seq},{self.t_send:.6f},{self.t_recv:.6f},{self.src},{self.dst},"
                f"{self.channel},{self.size},{self.digest.hex()}")


class Network:
    def __init__(self, default_delay: float = 0.025, delays: dict[tuple[str, str], float] | None = None,
                 jitter: float = 0.0, rng=None) -> None:
        self.default_delay = default_delay
        self.delays = dict(delays or {})
        self.jitter = jitter
        self._rng = as_rng(rng if rng is not None else 0)
        self.nodes: dict[str, Node] = {}
        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        self._link_clock: dict[tuple[str, str], float] = {}
        self.transcript: list[FrameRecord] = []
        self.taps: list[Tap] = []
        self.dropped: list[FrameRecord] = []

    def register(self, node: Node) -> Node:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node
        return node

    def link_delay(self, src: str, dst: str) -> float:
        d = self.delays.get((src, dst), self.delays.get((dst, src), self.default_delay))
        if self.jitter:
            d += float(self._rng.uniform(0, self.jitter))
        return d

    def send(self, src: str, dst: str, data: bytes, channel: str = "cell") -> None:
        if dst not in self.nodes:
            raise KeyError(f"unknown destination {dst}")
        link = (src, dst)
        t = max(self.now + self.link_delay(src, dst), self._link_clock.get(link, 0.0))
        self._link_clock[link] = t
        rec = FrameRecord(self._seq, self.now, t, src, dst, channel, len(data), hashlib.sha256(data).digest())
        self.transcript.append(rec)
        heapq.heappush(self._queue, (t, self._seq, rec, data))
        self._seq += 1

    def step(self) -> bool:
        if not self._queue:
            return False
        t, _, rec, data = heapq.heappop(self._queue)
        self.now = t
        for tap in self.taps:
            data = tap(rec.src, rec.dst, rec.channel, data)
            if data is None:
                self.dropped.append(rec)
                return True
        self.nodes[rec.dst].on_frame(self, rec.src, rec.channel, data)
        return True

    def run(self, until: float | None = None, max_events: int = 10_000_000) -> int:
        n = 0
        while self._queue and n < max_events:
            if until is not None and self._queue[0][0] > until:
                break
            self.step()
            n += 1
        return n

    def run_until(self, predicate: Callable[[], bool], max_events: int = 10_000_000) -> bool:
        n = 0
        while not predicate():
            if not self._queue or n >= max_events:
                return predicate()
            self.step()
            n += 1
        return True

    def advance_to(self, t: float) -> None:
        """Deliver everything due by ``t``, then move the clock to ``t``."""
        self.run(until=t)
        self.now = max(self.now, t)

    def transcript_digest(self) -> str:
        h = hashlib.sha256()
        for rec in self.transcript:
            h.update(rec.line().encode())
            h.update(b"\n")
        return h.hexdigest()

"""Offline-online PIR with seed-masked chunk queries.

The ``r`` blocks are cut into ``n`` chunks of ``k = r / n`` blocks. Server
``i`` stores ``t`` chunks, starting with its flip chunk ``i``; the other
``t - 1`` are covered offline by a precomputed pair ``(S, A)`` where
``A`` is the XOR of the blocks picked by ``PRG(S, k(t-1))``. Online the
server only folds the ``k`` query bits over its flip chunk.

The client expands every server's seed into its mask, XORs all masks
and ``e_theta`` into one selection vector, and sends server ``i`` the
slice of that vector covering chunk ``i``. The XOR of all answers
telescopes to ``DB[theta]``.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import BackpressureError, GeometryError, IncompletenessError, ParameterError, SessionError
from ..kernels import BatchGf2Job, batch_matvec_gf2
from ..spectrum_db import DbMatrix
from ..util import random_bytes

SEED_BYTES = 16
Prg = Callable[[bytes, int], np.ndarray]


def shake_prg(seed: bytes, nbits: int) -> np.ndarray:
    """Expand ``seed`` to ``nbits`` bits with SHAKE-256 (domain separated)."""
    stream = hashlib.shake_256(b"oop-prg" + seed + nbits.to_bytes(4, "big")).digest((nbits + 7) // 8)
    return np.unpackbits(np.frombuffer(stream, dtype=np.uint8), count=nbits)


def zero_prg(seed: bytes, nbits: int) -> np.ndarray:
    del seed
    return np.zeros(nbits, dtype=np.uint8)


def default_layout(server: int, n: int, t: int) -> tuple[int, ...]:
    return tuple((server + j) % n for j in range(t))


@dataclass
class OopState:
    db: DbMatrix
    n_chunks: int
    t: int
    layouts: tuple[tuple[int, ...], ...]
    prg: Prg = shake_prg
    queues: list[deque] = field(default_factory=list)
    pending: dict[tuple[int, int], bytes] = field(default_factory=dict)
    rows_touched: list[int] = field(default_factory=list)
    _sessions: itertools.count = field(default_factory=itertools.count)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def blocks_per_chunk(self) -> int:
        return self.db.rows // self.n_chunks

    def chunk_rows(self, chunk: int) -> slice:
        k = self.blocks_per_chunk
        return slice(chunk * k, (chunk + 1) * k)

    def mask_vector(self, server: int, seed: bytes) -> np.ndarray:
        return expand_mask(seed, self.layouts[server], self.db.rows, self.n_chunks, self.prg)


def expand_mask(seed: bytes, layout: Sequence[int], r: int, n: int, prg: Prg = shake_prg) -> np.ndarray:
    """Full-length selection mask for one server: PRG bits on its non-flip chunks."""
    k = r // n
    bits = prg(seed, k * (len(layout) - 1))
    mask = np.zeros(r, dtype=np.uint8)
    for pos, chunk in enumerate(layout[1:]):
        mask[chunk * k:(chunk + 1) * k] = bits[pos * k:(pos + 1) * k]
    return mask


def _validate(db: DbMatrix, n: int, t: int, layouts) -> tuple[tuple[int, ...], ...]:
    if n < 2:
        raise ParameterError("need at least two chunks/servers")
    if db.rows % n:
        raise GeometryError(f"{db.rows} rows do not split into {n} equal chunks")
    if not 1 <= t <= n:
        raise ParameterError(f"t={t} outside [1, {n}]")
    if layouts is None:
        return tuple(default_layout(i, n, t) for i in range(n))
    out = []
    for i, lay in enumerate(layouts):
        lay = tuple(lay)
        if len(lay) != t or len(set(lay)) != t or lay[0] != i or not all(0 <= c < n for c in lay):
            raise ParameterError(f"layout for server {i} must hold {t} distinct chunks starting with chunk {i}")
        out.append(lay)
    if len(out) != n:
        raise ParameterError("one layout per server required")
    return tuple(out)


def _precompute(state: OopState, server: int, count: int, rng, workers: int) -> None:
    if count <= 0:
        return
    seeds = [random_bytes(SEED_BYTES, rng) for _ in range(count)]
    masks = np.stack([state.mask_vector(server, s) for s in seeds])
    answers = batch_matvec_gf2(BatchGf2Job(masks, state.db.payload), workers)
    with state._lock:
        for s, a in zip(seeds, answers):
            state.queues[server].append((s, a.tobytes()))


def oop_preprocess(db: DbMatrix, n: int, t: int | None = None, queue_depth: int = 4, rng=None, *,
                   layouts=None, prg: Prg = shake_prg, workers: int = 1, servers=None) -> OopState:
    """Fill the queues of ``servers`` (default: all ``n``).

    A PSD that only runs server ``i`` passes ``servers=[i]``.
    """
    t = n if t is None else t
    lay = _validate(db, n, t, layouts)
    state = OopState(db, n, t, lay, prg, [deque() for _ in range(n)], rows_touched=[0] * n)
    for i in (range(n) if servers is None else servers):
        _precompute(state, i, queue_depth, rng, workers)
    return state


def oop_refill(state: OopState, server: int, count: int, rng=None, workers: int = 1) -> None:
    _precompute(state, server, count, rng, workers)


def oop_offline_handshake(state: OopState, server: int) -> tuple[int, bytes]:
    """Pop one precomputed pair; returns ``(session_id, seed)``."""
    with state._lock:
        if not state.queues[server]:
            raise BackpressureError(f"server {server} has no precomputed pairs left")
        seed, answer = state.queues[server].popleft()
        sid = next(state._sessions)
        state.pending[(server, sid)] = answer
    return sid, seed


def oop_query_gen(theta: int, seeds: Sequence[bytes], layouts: Sequence[Sequence[int]], r: int,
                  prg: Prg = shake_prg) -> list[np.ndarray]:
    """Sub-query of ``k`` bits per server (its flip-chunk slice)."""
    n = len(seeds)
    if len(layouts) != n:
        raise ParameterError("one layout per seed required")
    if r % n:
        raise GeometryError(f"{r} rows do not split into {n} chunks")
    if not 0 <= theta < r:
        raise ParameterError(f"theta={theta} outside [0, {r})")
    k = r // n
    total = np.zeros(r, dtype=np.uint8)
    total[theta] = 1
    for seed, lay in zip(seeds, layouts):
        total ^= expand_mask(seed, lay, r, n, prg)
    return [total[lay[0] * k:(lay[0] + 1) * k].copy() for lay in layouts]


def oop_respond(state: OopState, server: int, session_id: int, q_i) -> bytes:
    q_i = np.asarray(q_i, dtype=np.uint8)
    if q_i.shape != (state.blocks_per_chunk,):
        raise GeometryError(f"sub-query must have {state.blocks_per_chunk} bits")
    with state._lock:
        answer = state.pending.pop((server, session_id), None)
    if answer is None:
        raise SessionError(f"session {session_id} at server {server} is unknown or already used")
    flip = state.chunk_rows(state.layouts[server][0])
    rows = state.db.payload[flip][q_i.astype(bool)]
    state.rows_touched[server] += state.blocks_per_chunk
    acc = np.frombuffer(answer, dtype=np.uint8).copy()
    if len(rows):
        acc ^= np.bitwise_xor.reduce(rows, axis=0)
    return acc.tobytes()


def oop_reconstruct(responses: Sequence[bytes | None]) -> bytes:
    if any(r is None for r in responses) or not responses:
        raise IncompletenessError("offline-online reconstruction needs every server's answer")
    acc = np.frombuffer(responses[0], dtype=np.uint8).copy()
    for r in responses[1:]:
        acc ^= np.frombuffer(r, dtype=np.uint8)
    return acc.tobytes()

"""Batched server kernels for XOR (GF(2)) and prime-field PIR answers.

Both kernels split the output into independent tiles and run the tiles
on a thread pool; the tile bodies are numba ``nogil`` functions, so the
pool scales with available cores. Within a tile the accumulation order
is fixed, which makes the result independent of the worker count.

GF(2) tiles are (query group, lane) pairs, a lane being up to 128
consecutive 64-bit words of the packed block. Rows are accumulated into
8 strided partial sums that are folded at the end of the tile.

Field tiles are ``bm x bn`` output blocks. Depth is walked ``br`` rows
at a time into 64-bit accumulators, with one modular reduction per
step; ``br * (p-1)**2 < 2**64`` holds for every ``p <= 2**17``. The
``tm x tn`` register blocks of a GPU thread have no CPU counterpart
beyond the compiler's vectorization of the contiguous ``bn`` loop, so
those two parameters are carried in :class:`Tiling` but not used.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .errors import GeometryError, ParameterError

LANE_WORDS = 128   # 8192 bits = 256 of the 32-bit column lanes
QUERY_GROUP = 16
STRIDE = 8


# ----------------------------------------------------------------- helpers


def pack_rows(rows_u8: np.ndarray) -> np.ndarray:
    """``(r, nbytes)`` uint8 -> ``(r, nbytes/8)`` uint64 (byte order preserved)."""
    rows_u8 = np.ascontiguousarray(rows_u8, dtype=np.uint8)
    if rows_u8.shape[1] % 8:
        raise GeometryError("row length must be a multiple of 8 bytes")
    return rows_u8.view(np.uint64)


def unpack_rows(words: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(words).view(np.uint8)


@dataclass(frozen=True)
class Tiling:
    bm: int = 64
    bn: int = 64
    br: int = 8
    tm: int = 8
    tn: int = 8

    @classmethod
    def default(cls, batch: int, cols: int) -> "Tiling":
        big = batch >= 128 and cols >= 128
        return cls(bm=128 if big else 64, bn=128 if big else 64)


@dataclass(frozen=True)
class BatchGf2Job:
    queries: np.ndarray   # (q, r) of 0/1 uint8
    db: np.ndarray        # (r, nbytes) uint8

    def __post_init__(self) -> None:
        q, db = self.queries, self.db
        if q.ndim != 2 or db.ndim != 2:
            raise GeometryError("queries and db must be 2-D")
        if q.shape[0] < 1:
            raise GeometryError("batch must hold at least one query")
        if q.shape[1] != db.shape[0]:
            raise GeometryError(f"query length {q.shape[1]} != db rows {db.shape[0]}")


@dataclass(frozen=True)
class BatchFieldJob:
    queries: np.ndarray   # (q, r) residues
    db: np.ndarray        # (r, s) residues
    modulus: int
    tiling: Tiling | None = None

    def __post_init__(self) -> None:
        q, db = self.queries, self.db
        if q.ndim != 2 or db.ndim != 2:
            raise GeometryError("queries and db must be 2-D")
        if q.shape[0] < 1:
            raise GeometryError("batch must hold at least one query")
        if q.shape[1] != db.shape[0]:
            raise GeometryError(f"query length {q.shape[1]} != db rows {db.shape[0]}")
        if not 2 <= self.modulus <= (1 << 17):
            raise ParameterError("modulus must lie in [2, 2^17] for lazy 64-bit reduction")

    def resolved_tiling(self) -> Tiling:
        return self.tiling or Tiling.default(self.queries.shape[0], self.db.shape[1])


# ----------------------------------------------------------- numba bodies


@numba.njit(nogil=True, cache=True)
def _gf2_tile(qT, db, out, q0, q1, w0, w1):
    nq = q1 - q0
    nw = w1 - w0
    acc = np.zeros((nq * STRIDE, nw), dtype=np.uint64)
    for j in range(db.shape[0]):
        s = j & (STRIDE - 1)
        row = db[j, w0:w1]
        for qi in range(nq):
            if qT[j, q0 + qi]:
                a = acc[qi * STRIDE + s]
                for w in range(nw):
                    a[w] ^= row[w]
    for qi in range(nq):
        for w in range(nw):
            v = np.uint64(0)
            for s in range(STRIDE):
                v ^= acc[qi * STRIDE + s, w]
            out[q0 + qi, w0 + w] = v


@numba.njit(nogil=True, cache=True)
def _gf2_tile_masked(qT, db, out, q0, q1, w0, w1):
    nq = q1 - q0
    nw = w1 - w0
    acc = np.zeros((nq * STRIDE, nw), dtype=np.uint64)
    for j in range(db.shape[0]):
        s = j & (STRIDE - 1)
        row = db[j, w0:w1]
        for qi in range(nq):
            m = np.uint64(0) - np.uint64(qT[j, q0 + qi])
            a = acc[qi * STRIDE + s]
            for w in range(nw):
                a[w] ^= row[w] & m
    for qi in range(nq):
        for w in range(nw):
            v = np.uint64(0)
            for s in range(STRIDE):
                v ^= acc[qi * STRIDE + s, w]
            out[q0 + qi, w0 + w] = v


@numba.njit(nogil=True, cache=True)
def _field_tile(Q, D, out, p, i0, i1, j0, j1, br):
    nj = j1 - j0
    acc = np.zeros((i1 - i0, nj), dtype=np.uint64)
    pp = np.uint64(p)
    for k0 in range(0, Q.shape[1], br):
        k1 = min(k0 + br, Q.shape[1])
        for i in range(i1 - i0):
            a_row = acc[i]
            for k in range(k0, k1):
                a = np.uint64(Q[i0 + i, k])
                d = D[k, j0:j1]
                for j in range(nj):
                    a_row[j] += a * d[j]
            for j in range(nj):
                a_row[j] %= pp
    for i in range(i1 - i0):
        for j in range(nj):
            out[i0 + i, j0 + j] = np.uint32(acc[i, j])


# -------------------------------------------------------------- dispatch


def _run_tiles(tasks: list[Callable[[], None]], workers: int) -> None:
    if workers < 1:
        raise ParameterError("workers must be >= 1")
    if workers == 1 or len(tasks) == 1:
        for t in tasks:
            t()
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(t) for t in tasks]:
            fut.result()


def batch_matvec_gf2(job: BatchGf2Job, workers: int = 1, *, branchless: bool = False) -> np.ndarray:
    """XOR-fold the rows selected by each query; returns ``(q, nbytes)`` uint8."""
    db = pack_rows(job.db)
    qT = np.ascontiguousarray(job.queries.T, dtype=np.uint8)
    if qT.size and qT.max() > 1:
        raise GeometryError("GF(2) queries must be 0/1")
    nq, nw = job.queries.shape[0], db.shape[1]
    out = np.zeros((nq, nw), dtype=np.uint64)
    body = _gf2_tile_masked if branchless else _gf2_tile
    tasks = []
    for q0 in range(0, nq, QUERY_GROUP):
        for w0 in range(0, nw, LANE_WORDS):
            q1, w1 = min(q0 + QUERY_GROUP, nq), min(w0 + LANE_WORDS, nw)
            tasks.append(lambda q0=q0, q1=q1, w0=w0, w1=w1: body(qT, db, out, q0, q1, w0, w1))
    _run_tiles(tasks, workers)
    return unpack_rows(out)


def batch_matmul_field(job: BatchFieldJob, workers: int = 1) -> np.ndarray:
    """Exact ``queries @ db mod p`` as ``(q, s)`` uint32."""
    tl = job.resolved_tiling()
    p = job.modulus
    Q = np.ascontiguousarray(job.queries, dtype=np.uint32)
    D = np.ascontiguousarray(job.db, dtype=np.uint32)
    if (Q.size and Q.max() >= p) or (D.size and D.max() >= p):
        raise GeometryError("inputs must be reduced modulo p")
    nq, ns = Q.shape[0], D.shape[1]
    out = np.zeros((nq, ns), dtype=np.uint32)
    tasks = []
    for i0 in range(0, nq, tl.bm):
        for j0 in range(0, ns, tl.bn):
            i1, j1 = min(i0 + tl.bm, nq), min(j0 + tl.bn, ns)
            tasks.append(lambda i0=i0, i1=i1, j0=j0, j1=j1:
                         _field_tile(Q, D, out, p, i0, i1, j0, j1, tl.br))
    _run_tiles(tasks, workers)
    return out


# ------------------------------------------------------------- references


def scalar_matvec_gf2(job: BatchGf2Job, workers: int = 1) -> np.ndarray:
    """Per-query, per-row fold; the baseline for speedup measurements."""
    del workers
    out = np.zeros((job.queries.shape[0], job.db.shape[1]), dtype=np.uint8)
    for i, q in enumerate(job.queries):
        acc = out[i]
        for j in np.flatnonzero(q):
            acc ^= job.db[j]
    return out


def scalar_matmul_field(job: BatchFieldJob, workers: int = 1) -> np.ndarray:
    del workers
    p = job.modulus
    db = job.db.astype(np.uint64)
    out = np.zeros((job.queries.shape[0], job.db.shape[1]), dtype=np.uint64)
    for i, q in enumerate(job.queries):
        acc = out[i]
        for j in np.flatnonzero(q):
            acc += np.uint64(q[j]) * db[j]
            acc %= p
    return out.astype(np.uint32)


@dataclass(frozen=True)
class KernelHandle:
    name: str
    gf2: Callable[..., np.ndarray]
    field: Callable[..., np.ndarray]


_BACKENDS = {
    "scalar": KernelHandle("scalar", scalar_matvec_gf2, scalar_matmul_field),
    "data-parallel": KernelHandle("data-parallel", batch_matvec_gf2, batch_matmul_field),
}


def backend_select(kind: str = "data-parallel") -> KernelHandle:
    try:
        return _BACKENDS[kind]
    except KeyError:
        raise ParameterError(f"unknown kernel backend {kind!r}; choose from {sorted(_BACKENDS)}") from None


def default_workers() -> int:
    return max(4, os.cpu_count() or 1)

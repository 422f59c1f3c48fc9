"""XOR-share PIR across ``l`` non-colluding servers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import GeometryError, IncompletenessError, ParameterError
from ..kernels import BatchGf2Job, batch_matvec_gf2
from ..spectrum_db import DbMatrix
from ..util import as_rng


@dataclass(frozen=True)
class EnsQuery:
    shares: np.ndarray   # (l, r) of 0/1

    @property
    def n_servers(self) -> int:
        return self.shares.shape[0]


def ens_query_gen(theta: int, r: int, n_servers: int, rng=None) -> EnsQuery:
    if n_servers < 2:
        raise ParameterError("XOR-share PIR needs at least two servers")
    if not 0 <= theta < r:
        raise ParameterError(f"theta={theta} outside [0, {r})")
    g = as_rng(rng)
    return EnsQuery(ens_share(theta, g.integers(0, 2, size=(n_servers - 1, r), dtype=np.uint8)))


def ens_share(theta: int, prefix) -> np.ndarray:
    """Complete ``l - 1`` random shares with the share that XORs to ``e_theta``."""
    prefix = np.asarray(prefix, dtype=np.uint8)
    if prefix.ndim != 2 or not 0 <= theta < prefix.shape[1]:
        raise ParameterError("prefix must be (l-1, r) with theta inside [0, r)")
    last = np.bitwise_xor.reduce(prefix, axis=0)
    last[theta] ^= 1
    return np.vstack([prefix, last[None, :]])


def _check_share(share: np.ndarray, db: DbMatrix) -> np.ndarray:
    share = np.asarray(share, dtype=np.uint8)
    if share.shape != (db.rows,):
        raise GeometryError(f"share length {share.shape} does not match {db.rows} rows")
    return share


def ens_respond(share, db: DbMatrix) -> bytes:
    share = _check_share(share, db)
    sel = db.payload[share.astype(bool)]
    if not len(sel):
        return bytes(db.row_bytes)
    return np.bitwise_xor.reduce(sel, axis=0).tobytes()


def ens_respond_batch(shares, db: DbMatrix, workers: int = 1) -> list[bytes]:
    shares = np.asarray(shares, dtype=np.uint8)
    if shares.ndim != 2 or shares.shape[1] != db.rows:
        raise GeometryError("batch shares must be (q, r)")
    if shares.shape[0] == 1:
        return [ens_respond(shares[0], db)]
    out = batch_matvec_gf2(BatchGf2Job(shares, db.payload), workers)
    return [row.tobytes() for row in out]


def ens_reconstruct(responses: Sequence[bytes | None], n_servers: int | None = None) -> bytes:
    """XOR of all answers; every server must have answered."""
    expected = n_servers if n_servers is not None else len(responses)
    got = [r for r in responses if r is not None]
    if len(got) != expected or len(responses) != expected:
        raise IncompletenessError(f"XOR reconstruction needs all {expected} responses, got {len(got)}")
    acc = np.frombuffer(got[0], dtype=np.uint8).copy()
    for r in got[1:]:
        if len(r) != len(acc):
            raise GeometryError("responses differ in length")
        acc ^= np.frombuffer(r, dtype=np.uint8)
    return acc.tobytes()

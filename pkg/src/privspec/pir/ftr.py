"""Shamir-coded PIR over a prime field with error-correcting reconstruction.

Each row ``j`` of the selection vector ``e_theta`` is shared with a
random degree-``t`` polynomial ``f_j`` (``f_j(0) = e_theta[j]``); server
``i`` receives ``f_j(alpha_i)`` for all ``j`` with ``alpha_i = i + 1``.
Its answer is the vector-matrix product with the DB read as bytes.
Answers from ``k`` servers are points of the degree-``t`` polynomials
whose constant terms are the target block's words.

Reconstruction first checks every word for consistency against the
interpolant of ``t + 1`` answers. Inconsistent words go through
Berlekamp-Welch, which corrects up to ``floor((k - t - 1) / 2)`` bad
answers. The decoder is vectorized across words.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from ..errors import GeometryError, IncompletenessError, ParameterError, RobustnessError
from ..kernels import BatchFieldJob, batch_matmul_field
from ..spectrum_db import DbMatrix
from ..util import as_rng

DEFAULT_MODULUS = 65537


def eval_point(server_id: int) -> int:
    return server_id + 1


@dataclass(frozen=True)
class FtrQuery:
    vectors: np.ndarray          # (l, r) residues
    eval_points: tuple[int, ...]
    t: int
    modulus: int = DEFAULT_MODULUS


def _vandermonde(points: Sequence[int], degree: int, p: int) -> np.ndarray:
    V = np.ones((len(points), degree + 1), dtype=np.int64)
    for d in range(1, degree + 1):
        V[:, d] = (V[:, d - 1] * np.asarray(points, dtype=np.int64)) % p
    return V


def ftr_share(theta: int, r: int, coeffs: np.ndarray, points: Sequence[int], p: int) -> np.ndarray:
    """Evaluate ``e_theta[j] + sum_d coeffs[d-1, j] x^d`` at every point.

    ``coeffs`` has shape ``(t, r)``; exposing it lets tests enumerate the
    sharing randomness exhaustively.
    """
    t = coeffs.shape[0]
    poly = np.zeros((t + 1, r), dtype=np.int64)
    poly[0, theta] = 1
    poly[1:] = np.asarray(coeffs, dtype=np.int64) % p
    V = _vandermonde(points, t, p)
    return ((V @ poly) % p).astype(np.uint32)


def ftr_query_gen(theta: int, r: int, n_servers: int, t: int, modulus: int = DEFAULT_MODULUS,
                  rng=None) -> FtrQuery:
    if not 0 <= t < n_servers:
        raise ParameterError(f"need 0 <= t < l, got t={t}, l={n_servers}")
    if modulus <= n_servers:
        raise ParameterError("field order must exceed the number of servers")
    if not 0 <= theta < r:
        raise ParameterError(f"theta={theta} outside [0, {r})")
    points = tuple(eval_point(i) for i in range(n_servers))
    coeffs = as_rng(rng).integers(0, modulus, size=(t, r), dtype=np.int64)
    return FtrQuery(ftr_share(theta, r, coeffs, points, modulus), points, t, modulus)


def db_words(db: DbMatrix) -> np.ndarray:
    return db.payload.astype(np.uint32)


def ftr_respond(query_vec, db: DbMatrix, modulus: int = DEFAULT_MODULUS, *, words: np.ndarray | None = None) -> np.ndarray:
    q = np.asarray(query_vec, dtype=np.uint32)
    if q.shape != (db.rows,):
        raise GeometryError(f"query length {q.shape} does not match {db.rows} rows")
    return ftr_respond_batch(q[None, :], db, modulus, words=words)[0]


def ftr_respond_batch(queries, db: DbMatrix, modulus: int = DEFAULT_MODULUS, workers: int = 1,
                      *, words: np.ndarray | None = None) -> np.ndarray:
    Q = np.asarray(queries, dtype=np.uint32)
    if Q.ndim != 2 or Q.shape[1] != db.rows:
        raise GeometryError("batch queries must be (q, r)")
    W = words if words is not None else db_words(db)
    return batch_matmul_field(BatchFieldJob(Q, W, modulus), workers)


# ------------------------------------------------------------ field algebra


def _inv(a: int, p: int) -> int:
    return pow(int(a) % p, -1, p)


def lagrange_weights(points: Sequence[int], x: int, p: int) -> list[int]:
    """Weights ``w_i`` with ``f(x) = sum w_i f(points[i])`` for deg f < len(points)."""
    out = []
    for i, xi in enumerate(points):
        num = den = 1
        for j, xj in enumerate(points):
            if i != j:
                num = num * (x - xj) % p
                den = den * (xi - xj) % p
        out.append(num * _inv(den, p) % p)
    return out


def _solve_batched(A: np.ndarray, b: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``A[w] x = b[w]`` mod p for every ``w``.

    Returns ``(x, ok)``; free variables are set to zero, ``ok`` is False
    where the system is inconsistent. Gauss-Jordan with per-word pivots.
    """
    W, m, n = A.shape
    M = np.concatenate([A, b[:, :, None]], axis=2) % p
    widx = np.arange(W)
    row = np.zeros(W, dtype=np.int64)
    pivcol = np.full((W, m), -1, dtype=np.int64)
    for c in range(n):
        live = row < m
        cand = (M[:, :, c] != 0) & (np.arange(m)[None, :] >= row[:, None])
        has = cand.any(axis=1) & live
        piv = np.argmax(cand, axis=1)
        w = widx[has]
        if not len(w):
            continue
        rw, pw = row[w], piv[w]
        tmp = M[w, rw].copy()
        M[w, rw] = M[w, pw]
        M[w, pw] = tmp
        inv = np.array([_inv(v, p) for v in M[w, rw, c]], dtype=np.int64)
        M[w, rw] = (M[w, rw] * inv[:, None]) % p
        factors = M[w, :, c].copy()
        factors[np.arange(len(w)), rw] = 0
        M[w] = (M[w] - factors[:, :, None] * M[w, rw][:, None, :]) % p
        pivcol[w, rw] = c
        row[w] += 1
    x = np.zeros((W, n), dtype=np.int64)
    ok = np.ones(W, dtype=bool)
    for i in range(m):
        pc = pivcol[:, i]
        has = pc >= 0
        x[widx[has], pc[has]] = M[widx[has], i, n]
        ok &= has | (M[:, i, n] == 0)
    return x, ok


def _polydiv_monic(num: np.ndarray, den: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched division by monic ``den`` (coefficients low->high)."""
    num = num.copy() % p
    dn = den.shape[1] - 1
    qlen = num.shape[1] - dn
    quot = np.zeros((num.shape[0], max(qlen, 1)), dtype=np.int64)
    for k in range(qlen - 1, -1, -1):
        coef = num[:, k + dn].copy()
        quot[:, k] = coef
        num[:, k:k + dn + 1] = (num[:, k:k + dn + 1] - coef[:, None] * den) % p
    return quot, num[:, :dn]


def _poly_eval(coeffs: np.ndarray, x: int, p: int) -> np.ndarray:
    acc = np.zeros(coeffs.shape[0], dtype=np.int64)
    for k in range(coeffs.shape[1] - 1, -1, -1):
        acc = (acc * x + coeffs[:, k]) % p
    return acc


class Decoder(Protocol):
    def __call__(self, points: Sequence[int], values: np.ndarray, t: int, e: int, p: int
                 ) -> tuple[np.ndarray, np.ndarray]: ...


def berlekamp_welch(points: Sequence[int], values: np.ndarray, t: int, e: int, p: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Decode ``values`` (shape ``(k, W)``) as noisy evaluations of degree-``t`` polys.

    Returns ``(coeffs (W, t+1), ok (W,))``. ``ok`` is False when no
    polynomial agrees with at least ``k - e`` of the points.
    """
    k, W = values.shape
    y = values.T.astype(np.int64) % p                  # (W, k)
    pts = np.asarray(points, dtype=np.int64)
    qdeg = t + e
    V = _vandermonde(points, max(qdeg, e), p)          # (k, .)
    # unknowns: Q_0..Q_{t+e}, E_0..E_{e-1}
    A = np.empty((W, k, qdeg + 1 + e), dtype=np.int64)
    A[:, :, :qdeg + 1] = V[None, :, :qdeg + 1]
    A[:, :, qdeg + 1:] = (-(y[:, :, None] * V[None, :, :e])) % p
    b = (y * V[None, :, e]) % p
    sol, ok = _solve_batched(A, b, p)
    Qc = sol[:, :qdeg + 1]
    Ec = np.concatenate([sol[:, qdeg + 1:], np.ones((W, 1), dtype=np.int64)], axis=1)
    f, rem = _polydiv_monic(Qc, Ec, p)
    ok &= ~(rem != 0).any(axis=1)
    f = f[:, :t + 1] if f.shape[1] >= t + 1 else np.pad(f, ((0, 0), (0, t + 1 - f.shape[1])))
    agree = np.zeros(W, dtype=np.int64)
    for i in range(k):
        agree += _poly_eval(f, int(pts[i]), p) == y[:, i]
    ok &= agree >= k - e
    return f % p, ok


def unique_radius(k: int, t: int) -> int:
    return max((k - t - 1) // 2, 0)


def ftr_reconstruct(responses: Mapping[int, np.ndarray] | Sequence[np.ndarray | None], t: int,
                    nu_max: int | None = None, modulus: int = DEFAULT_MODULUS,
                    decoder: Decoder = berlekamp_welch) -> bytes:
    """Recover the block from answers keyed by server id.

    ``nu_max`` caps the number of corrected answers (default: the unique
    decoding radius for the number of answers present).
    """
    if not isinstance(responses, Mapping):
        responses = {i: r for i, r in enumerate(responses) if r is not None}
    ids = sorted(responses)
    k = len(ids)
    if k <= t:
        raise IncompletenessError(f"need at least t+1={t + 1} responses, got {k}")
    p = modulus
    Y = np.stack([np.asarray(responses[i], dtype=np.int64) for i in ids]) % p   # (k, W)
    points = [eval_point(i) for i in ids]
    radius = unique_radius(k, t)
    e = radius if nu_max is None else min(nu_max, radius)

    base = points[:t + 1]
    w0 = np.array(lagrange_weights(base, 0, p), dtype=np.int64)
    secret = (w0 @ Y[:t + 1]) % p
    bad = np.zeros(Y.shape[1], dtype=bool)
    for i in range(t + 1, k):
        wi = np.array(lagrange_weights(base, points[i], p), dtype=np.int64)
        bad |= ((wi @ Y[:t + 1]) % p) != Y[i]
    suspects: set[int] = set()
    if bad.any():
        if e == 0:
            raise RobustnessError("answers are inconsistent and no error budget is available")
        cols = np.flatnonzero(bad)
        f, ok = decoder(points, Y[:, cols], t, e, p)
        for idx, x in zip(ids, points):
            if (_poly_eval(f[ok], x, p) != Y[ids.index(idx), cols[ok]]).any():
                suspects.add(idx)
        if not ok.all():
            raise RobustnessError(f"{int((~ok).sum())} words exceed the correction radius {e}",
                                  tuple(sorted(suspects)))
        secret[cols] = f[:, 0]
    if (secret > 255).any():
        raise RobustnessError("decoded words are not bytes", tuple(sorted(suspects)))
    return secret.astype(np.uint8).tobytes()

"""Lattice basis reduction and bounded short-vector enumeration.

Bases are lists of integer row vectors. ``fpylll`` backs LLL/BKZ when it
is importable; the pure-Python integral LLL is the fallback and the
reference used in tests.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import SolverExhausted

try:  # pragma: no cover - exercised implicitly when installed
    from fpylll import BKZ as _BKZ
    from fpylll import LLL as _LLL
    from fpylll import IntegerMatrix as _IntegerMatrix

    HAVE_FPYLLL = True
except ImportError:  # pragma: no cover
    HAVE_FPYLLL = False


def sqnorm(v) -> int:
    return sum(int(x) * int(x) for x in v)


def lll_python(basis: list[list[int]]) -> list[list[int]]:
    """Integral LLL with delta = 3/4 (exact big-integer arithmetic).

    Follows the fraction-free formulation: ``d[i]`` are the Gram
    determinants and ``lam[k][j]`` the scaled Gram-Schmidt coefficients.
    """
    b = [[int(x) for x in row] for row in basis]
    n = len(b)
    if n <= 1:
        return b

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    # 1-indexed storage
    bb = [None] + b
    d = [0] * (n + 1)
    lam = [[0] * (n + 1) for _ in range(n + 1)]
    d[0] = 1
    d[1] = dot(bb[1], bb[1])
    if d[1] == 0:
        raise ValueError("basis vectors are linearly dependent")
    k, kmax = 2, 1

    def redi(k, l):
        if 2 * abs(lam[k][l]) > d[l]:
            q = (2 * lam[k][l] + d[l]) // (2 * d[l])
            bk, bl = bb[k], bb[l]
            bb[k] = [x - q * y for x, y in zip(bk, bl)]
            lam[k][l] -= q * d[l]
            for i in range(1, l):
                lam[k][i] -= q * lam[l][i]

    def swapi(k):
        bb[k], bb[k - 1] = bb[k - 1], bb[k]
        for j in range(1, k - 1):
            lam[k][j], lam[k - 1][j] = lam[k - 1][j], lam[k][j]
        lk = lam[k][k - 1]
        big = (d[k - 2] * d[k] + lk * lk) // d[k - 1]
        for i in range(k + 1, kmax + 1):
            t = lam[i][k]
            lam[i][k] = (d[k] * lam[i][k - 1] - lk * t) // d[k - 1]
            lam[i][k - 1] = (big * t + lk * lam[i][k]) // d[k]
        d[k - 1] = big

    while k <= n:
        if k > kmax:
            kmax = k
            for j in range(1, k + 1):
                u = dot(bb[k], bb[j])
                for i in range(1, j):
                    u = (d[i] * u - lam[k][i] * lam[j][i]) // d[i - 1]
                if j < k:
                    lam[k][j] = u
                else:
                    if u == 0:
                        raise ValueError("basis vectors are linearly dependent")
                    d[k] = u
        redi(k, k - 1)
        if 4 * d[k] * d[k - 2] < 3 * d[k - 1] ** 2 - 4 * lam[k][k - 1] ** 2:
            swapi(k)
            k = max(2, k - 1)
        else:
            for l in range(k - 2, 0, -1):
                redi(k, l)
            k += 1
    return [list(r) for r in bb[1:]]


def is_lll_reduced(basis: list[list[int]], delta: float = 0.75, eps: float = 1e-9) -> bool:
    mu, bstar_sq = gso(basis)
    n = len(basis)
    for i in range(n):
        for j in range(i):
            if abs(mu[i, j]) > 0.5 + eps:
                return False
    for k in range(1, n):
        if bstar_sq[k] < (delta - mu[k, k - 1] ** 2) * bstar_sq[k - 1] * (1 - eps):
            return False
    return True


def lll(basis: list[list[int]], backend: str = "auto") -> list[list[int]]:
    if backend == "python" or (backend == "auto" and not HAVE_FPYLLL):
        return lll_python(basis)
    m = _IntegerMatrix.from_matrix(basis)
    _LLL.reduction(m)
    return [list(m[i]) for i in range(m.nrows)]


def bkz(basis: list[list[int]], block_size: int) -> list[list[int]]:
    if not HAVE_FPYLLL:
        raise SolverExhausted("BKZ needs fpylll")
    m = _IntegerMatrix.from_matrix(basis)
    _BKZ.reduction(m, _BKZ.Param(block_size=min(block_size, m.nrows), max_loops=8))
    return [list(m[i]) for i in range(m.nrows)]


def gso(basis) -> tuple[np.ndarray, np.ndarray]:
    """Floating Gram-Schmidt: returns ``(mu, |b*_i|^2)``."""
    B = np.array([[float(x) for x in row] for row in basis], dtype=float)
    n = B.shape[0]
    bstar = np.zeros_like(B)
    mu = np.eye(n)
    bsq = np.zeros(n)
    for i in range(n):
        v = B[i].copy()
        for j in range(i):
            mu[i, j] = B[i] @ bstar[j] / bsq[j]
            v -= mu[i, j] * bstar[j]
        bstar[i] = v
        bsq[i] = v @ v
    return mu, bsq


def enumerate_short(basis: list[list[int]], radius_sq: int, max_nodes: int = 2_000_000) -> list[int] | None:
    """Depth-first Schnorr-Euchner enumeration.

    Returns the first nonzero lattice vector whose exact squared norm is
    at most ``radius_sq``; ``None`` when the whole tree is exhausted
    without one. Raises :class:`SolverExhausted` past ``max_nodes``.
    """
    n = len(basis)
    mu, bsq = gso(basis)
    bound = float(radius_sq) * (1 + 1e-9)
    x = [0] * n
    nodes = 0

    def center(k):
        return -sum(x[j] * mu[j, k] for j in range(k + 1, n))

    def rec(k: int, partial: float):
        nonlocal nodes
        c = center(k)
        x0 = round(c)
        # zigzag outwards from the nearest integer
        up, down = x0, x0 - 1
        up_live = down_live = True
        while up_live or down_live:
            if up_live and (not down_live or abs(up - c) <= abs(down - c)):
                cand = up
                up += 1
                is_up = True
            else:
                cand = down
                down -= 1
                is_up = False
            step = partial + (cand - c) ** 2 * bsq[k]
            if step > bound:
                if is_up:
                    up_live = False
                else:
                    down_live = False
                continue
            nodes += 1
            if nodes > max_nodes:
                raise SolverExhausted(f"enumeration exceeded {max_nodes} nodes")
            x[k] = cand
            if k == 0:
                if any(x):
                    v = [sum(x[i] * basis[i][j] for i in range(n)) for j in range(n)]
                    if 0 < sqnorm(v) <= radius_sq:
                        return v
            else:
                found = rec(k - 1, step)
                if found is not None:
                    return found
        x[k] = 0
        return None

    return rec(n - 1, 0.0)


def gaussian_heuristic(det: int, n: int) -> float:
    return math.exp(math.lgamma(n / 2 + 1) / n - math.log(math.pi) / 2 + math.log(det) / n)

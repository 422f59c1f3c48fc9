"""Lattice client puzzles based on approximate Hermite-SVP.

The basis ``B`` (column convention, ``v = B @ nu``) has first row
``[p, x_2, ..., x_n]`` and ones on the diagonal below it, so
``det B = p`` and ``Lambda(B) = {v : v_0 = p*nu_0 + sum x_i v_i}``.
A solution is any nonzero ``v`` with ``|v| <= alpha * p**(1/n)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np

from ..errors import FormatError, ParameterError, SolverExhausted
from ..util import random_below, random_bytes
from . import lattice

# below this dimension a uniformly sampled lattice has a non-negligible
# chance of having no vector inside the bound; see lbp_gen(plant=...)
PLANT_BELOW_DIM = 83


def lbp_alpha(n: int) -> float:
    return 1.05 * math.exp(math.lgamma(n / 2 + 1) / n) / math.sqrt(math.pi)


@dataclass(frozen=True)
class LbpPuzzle:
    alpha: float
    dim: int
    p: int
    xs: tuple[int, ...]   # x_2 .. x_n

    def __post_init__(self) -> None:
        if len(self.xs) != self.dim - 1:
            raise ParameterError("need n-1 samples")

    @property
    def prime_bits(self) -> int:
        return 10 * self.dim

    def basis(self) -> list[list[int]]:
        n = self.dim
        B = [[0] * n for _ in range(n)]
        B[0][0] = self.p
        for j, x in enumerate(self.xs, start=1):
            B[0][j] = x
            B[j][j] = 1
        return B

    def basis_rows(self) -> list[list[int]]:
        """Columns of ``B`` as row vectors (the form reduction works on)."""
        n = self.dim
        rows = [[self.p] + [0] * (n - 1)]
        for j, x in enumerate(self.xs, start=1):
            r = [0] * n
            r[0] = x
            r[j] = 1
            rows.append(r)
        return rows

    def to_bytes(self) -> bytes:
        """``p || x_2..x_n`` packed at 10n bits each, then alpha (f32) and n (u32)."""
        w = self.prime_bits
        acc = 0
        for value in (self.p, *self.xs):
            if value.bit_length() > w:
                raise FormatError("value exceeds 10n bits")
            acc = (acc << w) | value
        nbytes = (w * self.dim + 7) // 8
        pad = nbytes * 8 - w * self.dim
        return (acc << pad).to_bytes(nbytes, "big") + struct.pack("<fI", self.alpha, self.dim)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LbpPuzzle":
        if len(data) < 8:
            raise FormatError("LBP puzzle truncated")
        alpha32, n = struct.unpack("<fI", data[-8:])
        if n < 2:
            raise FormatError("bad lattice dimension")
        w = 10 * n
        nbytes = (w * n + 7) // 8
        if len(data) != nbytes + 8:
            raise FormatError("LBP puzzle length mismatch")
        alpha = lbp_alpha(n)
        if struct.pack("<f", alpha) != struct.pack("<f", alpha32):
            raise FormatError("alpha does not match the lattice dimension")
        acc = int.from_bytes(data[:nbytes], "big") >> (nbytes * 8 - w * n)
        mask = (1 << w) - 1
        vals = [(acc >> (w * (n - 1 - i))) & mask for i in range(n)]
        return cls(alpha, n, vals[0], tuple(vals[1:]))


@dataclass(frozen=True)
class LbpSolution:
    v: tuple[int, ...]
    nu: tuple[int, ...]

    def to_bytes(self) -> bytes:
        """Fixed-width two's complement: u32 n, u16 width, then v and nu."""
        width = max(max((abs(x).bit_length() for x in self.v + self.nu), default=1) + 1, 2)
        nbytes = (width + 7) // 8
        out = struct.pack("<IH", len(self.v), nbytes)
        for x in self.v + self.nu:
            out += x.to_bytes(nbytes, "big", signed=True)
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "LbpSolution":
        if len(data) < 6:
            raise FormatError("LBP solution truncated")
        n, nbytes = struct.unpack_from("<IH", data)
        if nbytes == 0 or len(data) != 6 + 2 * n * nbytes:
            raise FormatError("LBP solution length mismatch")
        vals = [int.from_bytes(data[6 + i * nbytes: 6 + (i + 1) * nbytes], "big", signed=True) for i in range(2 * n)]
        return cls(tuple(vals[:n]), tuple(vals[n:]))


def within_bound(norm_sq: int, alpha: float, p: int, n: int) -> bool:
    """Exact test of ``norm_sq <= (alpha * p**(1/n))**2``.

    Rewritten as ``(norm_sq / alpha**2)**n <= p**2`` with ``alpha`` taken
    as the exact rational value of its binary float.
    """
    a = Fraction(alpha)
    lhs_num = norm_sq * a.denominator ** 2
    lhs_den = a.numerator ** 2
    return lhs_num ** n <= p * p * lhs_den ** n


def bound_sq(puzzle: LbpPuzzle) -> int:
    """Largest integer squared norm accepted by :func:`within_bound`."""
    hi = int((puzzle.alpha ** 2) * math.exp(2 * math.log(puzzle.p) / puzzle.dim)) + 2
    while hi > 0 and not within_bound(hi, puzzle.alpha, puzzle.p, puzzle.dim):
        hi -= 1
    while within_bound(hi + 1, puzzle.alpha, puzzle.p, puzzle.dim):
        hi += 1
    return hi


def _random_prime(bits: int, rng) -> int:
    while True:
        cand = random_below(1 << bits, rng) | (1 << (bits - 1)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits:
            return p


def _planted_vector(n: int, bsq: int, rng) -> list[int]:
    # Gaussian direction scaled to a random radius inside the bound
    g = np.random.default_rng(int.from_bytes(random_bytes(16, rng), "little"))
    radius = math.sqrt(bsq)
    while True:
        d = g.standard_normal(n)
        d /= np.linalg.norm(d)
        s = [int(round(x)) for x in d * radius * g.uniform(0.85, 0.99)]
        if s[-1] != 0 and 0 < lattice.sqnorm(s) <= bsq:
            return s


def lbp_gen(lam: int = 128, dim: int = 40, kappa: int | None = None, rng=None, *,
            prime_bits: int | None = None, plant: bool | None = None) -> LbpPuzzle:
    """Sample a puzzle of dimension ``dim`` with a ``10*dim``-bit prime.

    ``plant=None`` plants a hidden short vector below ``PLANT_BELOW_DIM``
    so that a solution is guaranteed to exist; at larger dimensions the
    ``x_i`` are independent and uniform. ``kappa`` is informational: the
    expected solving work grows with ``dim``. ``prime_bits`` overrides the
    prime width (used for tiny exhaustive-oracle instances; such puzzles
    do not serialize).
    """
    del lam, kappa
    if dim < 2:
        raise ParameterError("lattice dimension must be >= 2")
    bits = prime_bits or 10 * dim
    p = _random_prime(bits, rng)
    alpha = lbp_alpha(dim)
    xs = [random_below(p, rng) for _ in range(dim - 1)]
    if plant is None:
        plant = dim < PLANT_BELOW_DIM
    if plant:
        probe = LbpPuzzle(alpha, dim, p, tuple(xs))
        s = _planted_vector(dim, bound_sq(probe), rng)
        # make s a lattice vector: s_0 = p*nu_0 + sum_{i>=1} x_{i+1} s_i
        partial = sum(x * si for x, si in zip(xs[:-1], s[1:-1]))
        xs[-1] = ((s[0] - partial) * pow(s[-1], -1, p)) % p
    return LbpPuzzle(alpha, dim, p, tuple(xs))


def coefficients_for(puzzle: LbpPuzzle, v) -> tuple[int, ...] | None:
    """Recover ``nu`` with ``B @ nu = v``, or ``None`` if ``v`` is not in the lattice."""
    n = puzzle.dim
    if len(v) != n:
        return None
    rest = sum(x * vi for x, vi in zip(puzzle.xs, v[1:]))
    q, r = divmod(int(v[0]) - rest, puzzle.p)
    if r:
        return None
    return (q, *(int(x) for x in v[1:]))


def _first_within(puzzle: LbpPuzzle, rows, bsq: int):
    for row in sorted(rows, key=lattice.sqnorm):
        nsq = lattice.sqnorm(row)
        if nsq == 0:
            continue
        if nsq <= bsq:
            return row
        break
    return None


def lbp_solve(puzzle: LbpPuzzle, *, reduction: str = "auto", block_sizes=(10, 20),
              max_nodes: int = 2_000_000) -> LbpSolution:
    """LLL, then BKZ tours, then bounded enumeration over the reduced basis."""
    bsq = bound_sq(puzzle)
    rows = lattice.lll(puzzle.basis_rows(), backend=reduction)
    hit = _first_within(puzzle, rows, bsq)
    if hit is None and lattice.HAVE_FPYLLL and reduction != "python":
        for beta in block_sizes:
            if beta > puzzle.dim:
                break
            rows = lattice.bkz(rows, beta)
            hit = _first_within(puzzle, rows, bsq)
            if hit is not None:
                break
    if hit is None:
        hit = lattice.enumerate_short(rows, bsq, max_nodes=max_nodes)
    if hit is None:
        raise SolverExhausted("no lattice vector inside the bound")
    nu = coefficients_for(puzzle, hit)
    if nu is None:  # pragma: no cover - reduction preserves the lattice
        raise SolverExhausted("reduced vector left the lattice")
    return LbpSolution(tuple(int(x) for x in hit), nu)


def lbp_verify(puzzle: LbpPuzzle, solution: LbpSolution) -> bool:
    v, nu = solution.v, solution.nu
    n = puzzle.dim
    if len(v) != n or len(nu) != n:
        return False
    if not all(isinstance(x, int) for x in (*v, *nu)):
        return False
    if not any(v):
        return False
    B = puzzle.basis()
    for i in range(n):
        if sum(B[i][j] * nu[j] for j in range(n)) != v[i]:
            return False
    return within_bound(lattice.sqnorm(v), puzzle.alpha, puzzle.p, n)


def solution_size_bits(puzzle: LbpPuzzle) -> int:
    """Reported token size: ``n * ceil(log2(2 alpha p^(1/n)))`` bits."""
    n = puzzle.dim
    return n * math.ceil(math.log2(2 * puzzle.alpha) + math.log2(puzzle.p) / n)

"""PIR and puzzle benchmarks written as CSV rows."""

from __future__ import annotations

import csv
import io
import time
from statistics import mean

import numpy as np

from ..kernels import BatchFieldJob, BatchGf2Job, backend_select
from ..pir.ftr import DEFAULT_MODULUS
from ..pow import PowKind, decode_puzzle, solve_to_bytes, verify_bytes
from ..pow.hct import hct_gen
from ..pow.lbp import lbp_gen

PIR_COLUMNS = ["scheme", "rows", "db_bytes", "batch", "workers", "backend", "ms_total", "ms_per_query", "speedup"]
POW_COLUMNS = ["pow", "kappa", "trials", "puzzle_bytes", "solution_bytes", "ms_gen", "ms_solve", "ms_verify"]


def _timed(fn, repeats: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3, out


def _pir_job(scheme: str, rows: int, batch: int, block_bytes: int, n_servers: int, rng):
    """The server-side work one PSD does for ``batch`` queries."""
    if scheme == "ftr":
        db = rng.integers(0, 256, size=(rows, block_bytes), dtype=np.uint32)
        q = rng.integers(0, DEFAULT_MODULUS, size=(batch, rows), dtype=np.uint32)
        return "field", BatchFieldJob(q, db, DEFAULT_MODULUS)
    # OOP answers online over its flip chunk only
    r = rows // n_servers if scheme == "oop" else rows
    db = rng.integers(0, 256, size=(r, block_bytes), dtype=np.uint8)
    q = rng.integers(0, 2, size=(batch, r), dtype=np.uint8)
    return "gf2", BatchGf2Job(q, db)


def bench_pir(schemes, rows_list, batches, *, workers: int = 4, block_bytes: int = 3072, n_servers: int = 2,
              repeats: int = 1, seed: int = 0, check: bool = True) -> list[dict]:
    """Scalar and data-parallel timings per (scheme, rows, batch); parallel rows carry the speedup."""
    rng = np.random.default_rng(seed)
    scalar, parallel = backend_select("scalar"), backend_select("data-parallel")
    out = []
    for scheme in schemes:
        for rows in rows_list:
            for batch in batches:
                kind, job = _pir_job(scheme, rows, batch, block_bytes, n_servers, rng)
                run_s = (lambda: scalar.gf2(job)) if kind == "gf2" else (lambda: scalar.field(job))
                run_p = (lambda: parallel.gf2(job, workers)) if kind == "gf2" else (lambda: parallel.field(job, workers))
                run_p()  # compile / warm caches
                ms_s, ref = _timed(run_s, repeats)
                ms_p, got = _timed(run_p, repeats)
                if check and not np.array_equal(ref, got):
                    raise AssertionError(f"{scheme}: parallel kernel disagrees with the scalar reference")
                base = dict(scheme=scheme, rows=rows, db_bytes=rows * block_bytes, batch=batch)
                out.append(dict(base, workers=1, backend="scalar", ms_total=round(ms_s, 3),
                                ms_per_query=round(ms_s / batch, 4), speedup=1.0))
                out.append(dict(base, workers=workers, backend="data-parallel", ms_total=round(ms_p, 3),
                                ms_per_query=round(ms_p / batch, 4), speedup=round(ms_s / ms_p, 3)))
    return out


def bench_pow(kind: str, kappas, *, trials: int = 3, n_leaves: int = 4, seed: int = 0) -> list[dict]:
    """Generate, solve and verify. For LBP each value is the lattice dimension."""
    pk = PowKind.parse(kind)
    rng = np.random.default_rng(seed)
    out = []
    for kappa in kappas:
        gen_ms, solve_ms, ver_ms = [], [], []
        sizes = (0, 0)
        for _ in range(trials):
            t0 = time.perf_counter()
            if pk == PowKind.HCT:
                data = hct_gen(256, kappa, n_leaves, rng).to_bytes()
            else:
                data = lbp_gen(128, kappa, rng=rng).to_bytes()
            t1 = time.perf_counter()
            puzzle = decode_puzzle(pk, data)
            sol = solve_to_bytes(pk, puzzle, b"bench", rng)
            t2 = time.perf_counter()
            ok = verify_bytes(pk, puzzle, sol, b"bench")
            t3 = time.perf_counter()
            if not ok:
                raise AssertionError(f"{kind} kappa={kappa}: solution failed verification")
            gen_ms.append((t1 - t0) * 1e3)
            solve_ms.append((t2 - t1) * 1e3)
            ver_ms.append((t3 - t2) * 1e3)
            sizes = (len(data), len(sol))
        out.append(dict(pow=pk.name.lower(), kappa=kappa, trials=trials, puzzle_bytes=sizes[0],
                        solution_bytes=sizes[1], ms_gen=round(mean(gen_ms), 3), ms_solve=round(mean(solve_ms), 3),
                        ms_verify=round(mean(ver_ms), 3)))
    return out


def to_csv(rows: list[dict], columns: list[str], fh=None) -> str:
    buf = fh or io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue() if fh is None else ""

"""``privspec`` command line: sim, bench and db subcommands.

Exit codes: 0 success, 2 configuration or usage error, 3 a run finished
but one of its checks failed.
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
from pathlib import Path

from ..crypto import signature_backend
from ..errors import CapacityError, ConfigError, DimensionError, FormatError
from ..spectrum_db import (
    GridCoordinate,
    GridDims,
    SpectrumRecord,
    build_db,
    db_load,
    db_save,
    puzzle_bind,
    validity_window,
)
from .bench import PIR_COLUMNS, POW_COLUMNS, bench_pir, bench_pow, to_csv
from .config import parse_config
from .sim import run_sim

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3

_POW2 = re.compile(r"^2\^(\d+)$")


def _int(tok: str) -> int:
    tok = tok.strip()
    m = _POW2.match(tok)
    return 1 << int(m.group(1)) if m else int(tok, 0)


def parse_int_list(spec: str) -> list[int]:
    """``"1,128,1024"``, ``"2^12..2^18"`` (powers of two) or ``"4..8"`` (every integer)."""
    out = []
    for part in spec.split(","):
        if ".." in part:
            lo, hi = part.split("..", 1)
            if _POW2.match(lo.strip()) and _POW2.match(hi.strip()):
                a, b = int(_POW2.match(lo.strip()).group(1)), int(_POW2.match(hi.strip()).group(1))
                out += [1 << e for e in range(a, b + 1)]
            else:
                out += list(range(_int(lo), _int(hi) + 1))
        elif part.strip():
            out.append(_int(part))
    if not out:
        raise ValueError(f"empty list {spec!r}")
    return out


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- sim


def cmd_sim_run(args) -> int:
    overrides = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    text = Path(args.config).read_text() if args.config else ""
    extra = "".join(f"{k} = {v}\n" for k, v in overrides.items())
    cfg = parse_config(text + extra) if args.config else parse_config(extra)
    res = run_sim(cfg, out_dir=args.out)
    granted = res.outcomes.get("granted", 0)
    print(f"users granted: {granted}/{cfg.n_users}")
    for name, (exp, obs) in res.attacks.items():
        print(f"attack {name}: expected {exp} observed {obs} {'ok' if exp == obs else 'MISMATCH'}")
    print(f"frames: {res.n_frames}  sim time: {res.sim_seconds:.3f} s  wall: {res.wall_seconds:.2f} s")
    print(f"transcript digest: {res.transcript_digest}")
    for f in res.failures:
        print(f"FAIL {f}", file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_FAILED


# -------------------------------------------------------------- bench


def cmd_bench_pir(args) -> int:
    schemes = [s.strip().lower() for s in args.scheme.split(",")]
    for s in schemes:
        if s not in ("ens", "ftr", "oop"):
            raise ConfigError("scheme", f"unknown scheme {s!r}")
    rows = bench_pir(schemes, parse_int_list(args.rows), parse_int_list(args.batch), workers=args.workers,
                     block_bytes=args.block_bytes, n_servers=args.servers, repeats=args.repeats, seed=args.seed)
    _write(to_csv(rows, PIR_COLUMNS), args.out)
    return EXIT_OK


def cmd_bench_pow(args) -> int:
    if args.kind.lower() not in ("hct", "lbp"):
        raise ConfigError("kind", f"unknown puzzle kind {args.kind!r}")
    rows = bench_pow(args.kind, parse_int_list(args.kappa), trials=args.trials, n_leaves=args.leaves, seed=args.seed)
    _write(to_csv(rows, POW_COLUMNS), args.out)
    return EXIT_OK


# ----------------------------------------------------------------- db

RECORD_FIELDS = ("cell_x", "cell_y", "channel", "time_window", "eirp_cdbm", "availability")


def read_records(path) -> list[SpectrumRecord]:
    """CSV with a header naming ``cell_x,cell_y,channel,time_window,eirp_cdbm,availability``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError("records", f"missing columns {sorted(missing)}")
        out = []
        for row in reader:
            try:
                out.append(SpectrumRecord(GridCoordinate(int(row["cell_x"]), int(row["cell_y"])),
                                          int(row["channel"]), int(row["time_window"]), int(row["eirp_cdbm"]),
                                          row["availability"].strip().lower() in ("1", "true", "yes")))
            except ValueError as exc:
                raise ConfigError("records", f"line {reader.line_num}: {exc}") from None
    return out


def cmd_db_build(args) -> int:
    records = read_records(args.records)
    if not records:
        raise ConfigError("records", "no records")
    dims = GridDims(
        args.cols or max(r.coord.cell_x for r in records) + 1,
        args.grid_rows or max(r.coord.cell_y for r in records) + 1,
        args.channels or max(r.channel for r in records) + 1,
        args.windows or max(r.time_window for r in records) + 1,
    )
    try:
        db = build_db(records, dims, args.block_bytes * 8)
        if args.pow != "none":
            signer = signature_backend(args.sig).keygen()
            db = puzzle_bind(db, signer, args.pow, parse_int_list(args.kappa), window=validity_window(args.now),
                             n_leaves=args.leaves)
            if args.key_out:
                Path(args.key_out).write_bytes(signer.public_bytes)
    except DimensionError as exc:
        raise ConfigError(exc.field, str(exc)) from None
    except CapacityError as exc:
        raise ConfigError("block_bytes", str(exc)) from None
    db_save(db, args.out)
    print(f"wrote {args.out}: {db.rows} rows x {db.block_bits} bits, pow={db.pow_kind.name.lower()}")
    return EXIT_OK


def cmd_db_info(args) -> int:
    try:
        db = db_load(args.path)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    print(f"rows={db.rows} block_bits={db.block_bits} scheme={db.scheme.name.lower()} "
          f"pow={db.pow_kind.name.lower()} sha256={db.digest().hex()}")
    return EXIT_OK


# --------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privspec", description="Private spectrum access simulator and benchmarks.")
    sub = p.add_subparsers(dest="group", required=True)

    sim = sub.add_parser("sim").add_subparsers(dest="cmd", required=True)
    run = sim.add_parser("run", help="run the end-to-end simulation")
    run.add_argument("--config", help="flat key = value file")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    run.add_argument("--out", help="directory for per-phase CSV files")
    run.set_defaults(fn=cmd_sim_run)

    bench = sub.add_parser("bench").add_subparsers(dest="cmd", required=True)
    bp = bench.add_parser("pir", help="PIR server kernels, scalar vs data-parallel")
    bp.add_argument("--scheme", default="ens", help="ens, ftr, oop or a comma list")
    bp.add_argument("--rows", default="2^12", help="e.g. 2^12..2^18 or 4096,8192")
    bp.add_argument("--batch", default="1,128", help="comma list of batch sizes")
    bp.add_argument("--workers", type=int, default=4)
    bp.add_argument("--block-bytes", type=int, default=3072)
    bp.add_argument("--servers", type=int, default=2, help="chunk count for oop")
    bp.add_argument("--repeats", type=int, default=1)
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--out")
    bp.set_defaults(fn=cmd_bench_pir)
    bw = bench.add_parser("pow", help="puzzle generation, solving and verification")
    bw.add_argument("--kind", default="hct")
    bw.add_argument("--kappa", default="14,18", help="difficulties (hct) or lattice dimensions (lbp)")
    bw.add_argument("--trials", type=int, default=3)
    bw.add_argument("--leaves", type=int, default=4)
    bw.add_argument("--seed", type=int, default=0)
    bw.add_argument("--out")
    bw.set_defaults(fn=cmd_bench_pow)

    db = sub.add_parser("db").add_subparsers(dest="cmd", required=True)
    bd = db.add_parser("build", help="build and optionally puzzle-bind a database file")
    bd.add_argument("--records", required=True, help="CSV: " + ",".join(RECORD_FIELDS))
    bd.add_argument("--out", default="spectrum.qpdb")
    bd.add_argument("--pow", default="hct", choices=("hct", "lbp", "none"))
    bd.add_argument("--kappa", default="20")
    bd.add_argument("--leaves", type=int, default=4)
    bd.add_argument("--block-bytes", type=int, default=3072)
    bd.add_argument("--sig", default="ml-dsa", choices=("ml-dsa", "stub"))
    bd.add_argument("--key-out", help="write the issuer public key here")
    bd.add_argument("--now", type=float, default=0.0, help="clock value selecting the validity window")
    for flag in ("--cols", "--grid-rows", "--channels", "--windows"):
        bd.add_argument(flag, type=int, default=0, help="grid dimension (default: from records)")
    bd.set_defaults(fn=cmd_db_build)
    bi = db.add_parser("info", help="validate a database file and print its header")
    bi.add_argument("path")
    bi.set_defaults(fn=cmd_db_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

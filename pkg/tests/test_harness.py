import csv
import io

import pytest

from privspec.errors import ConfigError
from privspec.harness.bench import PIR_COLUMNS, POW_COLUMNS, bench_pir, bench_pow, to_csv
from privspec.harness.cli import main, parse_int_list
from privspec.harness.config import SimConfig, dump_config, load_config, parse_config
from privspec.harness.sim import PHASES, run_sim


def run_cli(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# ----------------------------------------------------------------- config


def test_parse_config_types_and_comments():
    cfg = parse_config("# demo\nn_users = 3  # few\nlink_delay_ms = 12.5\nattacks = no\nscheme = FTR\nn_psd = 3\n")
    assert cfg.n_users == 3 and cfg.link_delay_ms == 12.5 and cfg.attacks is False
    assert cfg.scheme_id.name == "FTR"
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text,field", [
    ("n_users = 0", "n_users"),
    ("colour = red", "colour"),
    ("scheme = xor", "scheme"),
    ("pow_kind = md5", "pow_kind"),
    ("block_bytes = 3073", "block_bytes"),
    ("ring_size = 6", "ring_size"),
    ("n_leaves = 3", "n_leaves"),
    ("n_relays = 2", "n_relays"),
    ("scheme = ftr\nn_psd = 2\nftr_t = 2", "ftr_t"),
    ("scheme = oop\nn_psd = 3", "db_rows"),
    ("byzantine_psd = 0", "byzantine_psd"),
    ("sig_backend = rsa", "sig_backend"),
    ("attacks = maybe", "attacks"),
    ("kappa = x", "kappa"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_replace_revalidates():
    with pytest.raises(ConfigError):
        SimConfig().replace(db_rows=1)


# ------------------------------------------------------------------ bench


def test_parse_int_list():
    assert parse_int_list("2^3..2^5") == [8, 16, 32]
    assert parse_int_list("1,128") == [1, 128]
    assert parse_int_list("4..6,0x10") == [4, 5, 6, 16]
    with pytest.raises(ValueError):
        parse_int_list(",")


def test_bench_pir_rows_have_speedups():
    rows = bench_pir(["ens", "ftr", "oop"], [64], [1, 8], workers=2, block_bytes=64)
    assert len(rows) == 12
    assert {r["backend"] for r in rows} == {"scalar", "data-parallel"}
    text = to_csv(rows, PIR_COLUMNS)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert list(parsed[0]) == PIR_COLUMNS and all(float(r["speedup"]) > 0 for r in parsed)


def test_bench_pow_both_kinds():
    hct = bench_pow("hct", [4], trials=2)
    lbp = bench_pow("lbp", [10], trials=1)
    assert hct[0]["puzzle_bytes"] == 37 and lbp[0]["puzzle_bytes"] == (10 * 10 * 10 + 7) // 8 + 8
    assert set(hct[0]) == set(POW_COLUMNS)


# -------------------------------------------------------------------- sim


@pytest.mark.parametrize("overrides", [
    dict(scheme="ens", n_users=3),
    dict(scheme="ftr", n_psd=5, ftr_t=1, byzantine_psd=2, n_users=2),
    dict(scheme="oop", n_psd=4, n_users=2),
    dict(scheme="ens", pow_kind="lbp", lbp_dim=12, block_bytes=4096, n_users=2),
])
def test_sim_variants_pass(overrides, tmp_path):
    cfg = SimConfig(flood_queries=10, db_rows=16, **overrides)
    res = run_sim(cfg, out_dir=tmp_path)
    assert res.ok, res.failures
    assert res.outcomes["granted"] == cfg.n_users
    assert res.phase_order_ok()
    assert all(exp == obs for exp, obs in res.attacks.values())
    assert {p.name for p in tmp_path.glob("phase_*.csv")} == {f"phase_{n:02d}_{k}.csv" for k, n in PHASES.items()}
    assert (tmp_path / "outcomes.csv").exists()


def test_sim_is_deterministic_and_seed_sensitive():
    a = run_sim(SimConfig(n_users=2, flood_queries=5, db_rows=16))
    b = run_sim(SimConfig(n_users=2, flood_queries=5, db_rows=16))
    c = run_sim(SimConfig(n_users=2, flood_queries=5, db_rows=16, seed=2))
    assert a.transcript_digest == b.transcript_digest != c.transcript_digest


def test_sim_with_jitter_and_production_crypto():
    res = run_sim(SimConfig(n_users=1, flood_queries=3, db_rows=16, jitter_ms=7.0, sig_backend="ml-dsa",
                            kem_backend="ml-kem"))
    assert res.ok, res.failures


def test_sim_lbp_capacity_is_config_error():
    with pytest.raises(ConfigError) as exc:
        run_sim(SimConfig(pow_kind="lbp", lbp_dim=30, n_users=1, db_rows=16))
    assert exc.value.field == "block_bytes"


# -------------------------------------------------------------------- cli


def test_cli_sim_run(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n_users = 2\nflood_queries = 4\ndb_rows = 16\n")
    code, out, _ = run_cli(["sim", "run", "--config", str(cfg), "--set", "seed=3", "--out", str(tmp_path / "o")],
                           capsys)
    assert code == 0 and "users granted: 2/2" in out and "transcript digest:" in out
    code, _, err = run_cli(["sim", "run", "--set", "ring_size=5"], capsys)
    assert code == 2 and "ring_size" in err
    code, _, err = run_cli(["sim", "run", "--config", str(tmp_path / "missing.cfg")], capsys)
    assert code == 2


def test_cli_bench(tmp_path, capsys):
    code, out, _ = run_cli(["bench", "pir", "--scheme", "ens", "--rows", "2^6", "--batch", "1,4",
                            "--block-bytes", "64"], capsys)
    assert code == 0 and out.splitlines()[0] == ",".join(PIR_COLUMNS) and len(out.splitlines()) == 5
    dest = tmp_path / "pow.csv"
    code, _, _ = run_cli(["bench", "pow", "--kind", "hct", "--kappa", "4", "--trials", "1", "--out", str(dest)],
                         capsys)
    assert code == 0 and dest.read_text().startswith(",".join(POW_COLUMNS))
    code, _, err = run_cli(["bench", "pir", "--scheme", "xor"], capsys)
    assert code == 2 and "scheme" in err


def test_cli_db_build_and_info(tmp_path, capsys):
    records = tmp_path / "r.csv"
    records.write_text("cell_x,cell_y,channel,time_window,eirp_cdbm,availability\n"
                       "0,0,0,0,1200,1\n1,0,0,0,-500,0\n3,1,1,0,3000,true\n")
    db = tmp_path / "x.qpdb"
    key = tmp_path / "issuer.pub"
    code, out, _ = run_cli(["db", "build", "--records", str(records), "--out", str(db), "--pow", "hct",
                            "--kappa", "4", "--sig", "stub", "--key-out", str(key)], capsys)
    assert code == 0 and "16 rows" in out and key.exists()
    code, out, _ = run_cli(["db", "info", str(db)], capsys)
    assert code == 0 and "rows=16" in out and "pow=hct" in out
    db.write_bytes(db.read_bytes()[:-1])
    code, _, err = run_cli(["db", "info", str(db)], capsys)
    assert code == 3
    code, _, err = run_cli(["db", "build", "--records", str(records), "--out", str(db), "--pow", "lbp",
                            "--kappa", "40", "--sig", "stub"], capsys)
    assert code == 2 and "block_bytes" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("cell_x,cell_y\n0,0\n")
    code, _, err = run_cli(["db", "build", "--records", str(bad)], capsys)
    assert code == 2 and "records" in err

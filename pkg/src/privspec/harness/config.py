"""Flat ``key = value`` configuration for simulation runs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ConfigError
from ..pow import PowKind
from ..spectrum_db import Scheme


@dataclass(frozen=True)
class SimConfig:
    n_psd: int = 2
    scheme: str = "ens"
    pow_kind: str = "hct"
    kappa: int = 8
    n_leaves: int = 4
    lbp_dim: int = 20
    db_rows: int = 64
    block_bytes: int = 3072
    n_ch: int = 2
    n_tv: int = 2
    n_users: int = 4
    ring_size: int = 8
    window_s: int = 60
    validity_s: int = 3600
    link_delay_ms: float = 25.0
    jitter_ms: float = 0.0
    n_relays: int = 6
    workers: int = 1
    seed: int = 1
    ftr_t: int = 1
    oop_t: int = 0           # 0 means t = n
    byzantine_psd: int = -1  # FTR only
    attacks: bool = True
    flood_queries: int = 100
    sig_backend: str = "stub"
    kem_backend: str = "stub"
    delta_th: float = 50.0

    def __post_init__(self) -> None:
        if self.db_rows < 2:
            raise ConfigError("db_rows", "need at least two rows")
        positive = ("n_psd", "db_rows", "block_bytes", "n_ch", "n_tv", "n_users", "ring_size", "window_s",
                    "validity_s", "n_relays", "workers", "n_leaves", "flood_queries", "lbp_dim")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        for name in ("kappa", "link_delay_ms", "jitter_ms", "ftr_t", "oop_t", "seed", "delta_th"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        try:
            scheme = Scheme.parse(self.scheme)
        except ValueError:
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}") from None
        if scheme == Scheme.NONE:
            raise ConfigError("scheme", "choose ens, ftr or oop")
        try:
            kind = PowKind.parse(self.pow_kind)
        except ValueError:
            raise ConfigError("pow_kind", f"unknown puzzle kind {self.pow_kind!r}") from None
        if kind == PowKind.NONE:
            raise ConfigError("pow_kind", "choose hct or lbp")
        if (self.block_bytes * 8) % 64:
            raise ConfigError("block_bytes", "must be a multiple of 8")
        if self.db_rows % (self.n_ch * self.n_tv):
            raise ConfigError("db_rows", "must be a multiple of n_ch * n_tv")
        if self.ring_size & (self.ring_size - 1) or self.ring_size < 2:
            raise ConfigError("ring_size", "must be a power of two >= 2")
        if self.n_leaves & (self.n_leaves - 1) or self.n_leaves < 2:
            raise ConfigError("n_leaves", "must be a power of two >= 2")
        if self.n_relays < 3:
            raise ConfigError("n_relays", "need at least three relays")
        if scheme == Scheme.ENS and self.n_psd < 2:
            raise ConfigError("n_psd", "XOR shares need at least two PSDs")
        if scheme == Scheme.FTR and self.ftr_t >= self.n_psd:
            raise ConfigError("ftr_t", "must be below n_psd")
        if scheme == Scheme.OOP:
            if self.n_psd < 2:
                raise ConfigError("n_psd", "offline-online PIR needs at least two PSDs")
            if self.db_rows % self.n_psd:
                raise ConfigError("db_rows", "must split evenly into n_psd chunks")
            if self.oop_t > self.n_psd:
                raise ConfigError("oop_t", "cannot exceed n_psd")
        if self.byzantine_psd >= 0 and (scheme != Scheme.FTR or self.byzantine_psd >= self.n_psd):
            raise ConfigError("byzantine_psd", "only meaningful for ftr with a valid PSD index")
        if self.sig_backend not in ("stub", "ml-dsa"):
            raise ConfigError("sig_backend", "choose stub or ml-dsa")
        if self.kem_backend not in ("stub", "ml-kem"):
            raise ConfigError("kem_backend", "choose stub or ml-kem")

    @property
    def scheme_id(self) -> Scheme:
        return Scheme.parse(self.scheme)

    @property
    def pow_id(self) -> PowKind:
        return PowKind.parse(self.pow_kind)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, kind, raw: str):
    if kind is bool or kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(name, f"expected a boolean, got {raw!r}")
    try:
        if kind in (int, "int"):
            return int(raw, 0)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, **overrides) -> SimConfig:
    known = {f.name: f.type for f in fields(SimConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(key, "unknown setting")
        values[key] = _coerce(key, known[key], raw)
    values.update(overrides)
    return SimConfig(**values)


def load_config(path, **overrides) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    return parse_config(text, **overrides)


def dump_config(cfg: SimConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))

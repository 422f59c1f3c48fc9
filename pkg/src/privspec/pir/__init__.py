"""Multi-server PIR: XOR shares (ENS), Shamir shares with decoding (FTR)
and offline-online seed-masked chunks (OOP)."""

from .ens import EnsQuery, ens_query_gen, ens_reconstruct, ens_respond, ens_respond_batch, ens_share
from .ftr import (
    DEFAULT_MODULUS,
    FtrQuery,
    berlekamp_welch,
    ftr_query_gen,
    ftr_reconstruct,
    ftr_respond,
    ftr_respond_batch,
    ftr_share,
    unique_radius,
)
from .oop import (
    OopState,
    expand_mask,
    oop_offline_handshake,
    oop_preprocess,
    oop_query_gen,
    oop_reconstruct,
    oop_refill,
    oop_respond,
    shake_prg,
    zero_prg,
)
from .wire import PirFrame, decode_bits, decode_field, encode_bits, encode_field

__all__ = [
    "EnsQuery", "ens_query_gen", "ens_share", "ens_respond", "ens_respond_batch", "ens_reconstruct",
    "FtrQuery", "DEFAULT_MODULUS", "ftr_query_gen", "ftr_share", "ftr_respond", "ftr_respond_batch",
    "ftr_reconstruct", "berlekamp_welch", "unique_radius",
    "OopState", "oop_preprocess", "oop_refill", "oop_offline_handshake", "oop_query_gen",
    "oop_respond", "oop_reconstruct", "expand_mask", "shake_prg", "zero_prg",
    "PirFrame", "encode_bits", "decode_bits", "encode_field", "decode_field",
]

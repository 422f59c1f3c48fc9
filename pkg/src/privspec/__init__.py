"""Private spectrum access: multi-server PIR, location proofs, client puzzles
and an onion-routed transport, with a simulation harness."""

__version__ = "0.1.0"

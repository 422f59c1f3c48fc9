"""End-to-end simulation, benchmarks and the command-line entry point."""

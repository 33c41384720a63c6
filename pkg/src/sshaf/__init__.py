"""Smart-home authentication framework: three hash-based mutual
authentication schemes, a contextual decision engine, a gateway
orchestrator, and a deterministic simulation/attack harness."""

__version__ = "0.1.0"

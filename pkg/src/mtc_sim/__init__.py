"""Simulator and protocol library for memory-thread-based P2P communities.

Modules:
  memory_core         digital memories, memory threads, networking points
  overlay_mtc         MTC overlay protocol (form/join/leave/sub-communities)
  dataset             synthetic memory population and placement
  baseline_topologies unstructured / IBC / MTC topology generators
  sim_engine          deterministic discrete-event query simulation
  metrics             per-run counters, aggregation, stability analysis
  cli_io              config parsing, CLI entry point, Pajek export
"""

__version__ = "0.1.0"

"""Deterministic planning and simulation toolkit for distributed multimodal-LLM training.

Everything here runs at desk scale: cost models and combinatorial search
instead of GPUs. The package is organized around five concerns:

- ``model``: the multimodal model graph, per-layer cost profiles, frozen
  status, and effective backward-cost computation.
- ``partition`` / ``layout``: pipeline-stage partitioning, in-flight
  microbatch accounting, and memory estimates.
- ``schedule``: a discrete-event simulator of 1F1B pipeline schedules for
  chain and multi-encoder graph layouts, plus SVG timeline rendering.
- ``planner``: the two-step parallelization search (LLM first, then
  encoders fitted to match) over a cluster description.
- ``mask`` / ``balance``: bitfield attention masks for packed multimodal
  sequences, blockwise workload extraction, and workload-balanced
  context-parallel distribution (inter-GPU and intra-GPU).
"""

__version__ = "0.1.0"

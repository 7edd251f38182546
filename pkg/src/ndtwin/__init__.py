"""Edge-cluster digital-twin workbench.

Pipeline: deterministic cluster simulation -> telemetry store -> regime-aware
feature refinement -> latency models (gradient-boosted trees, MLP) ->
counterfactual what-if reports with matched-pairs trust metrics.
"""

__version__ = "0.1.0"

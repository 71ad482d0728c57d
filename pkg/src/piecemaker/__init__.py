"""Piecemaker and Factory protocols for distributing graph states through a switch."""

from .graphs import Graph, make_graph, minimal_local_covers
from .montecarlo import Estimate, Scenario, run_trials, sweep
from .network import LinkConfig
from .protocols import Target, run_factory, run_general_piecemaker, run_ghz_piecemaker, run_mvc, run_protocol
from .stabilizer import StabilizerState, graph_state, overlap_sq

__all__ = ["Graph", "make_graph", "minimal_local_covers", "Estimate", "Scenario", "run_trials", "sweep",
           "LinkConfig", "Target", "run_factory", "run_general_piecemaker", "run_ghz_piecemaker", "run_mvc",
           "run_protocol", "StabilizerState", "graph_state", "overlap_sq"]

"""Signal temporal logic planning: STL semantics, spec graphs, planners and a graph-conditioned flow model."""

__version__ = "0.1.0"

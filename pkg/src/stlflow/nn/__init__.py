"""Autodiff engine, GCN encoder and flow-matching model; import the submodules directly."""

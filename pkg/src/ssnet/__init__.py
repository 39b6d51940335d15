"""Correlated fluid-antenna channel datasets, a masked-autoencoder
MoE transformer for CSI extrapolation, and LMMSE/nearest-neighbor
oracles, with a CLI tying them together."""

__version__ = "0.1.0"

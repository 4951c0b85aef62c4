"""Sparse large-scale fading decoding and precoding for cell-free massive MIMO."""
__version__ = "0.1.0"

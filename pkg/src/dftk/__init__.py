"""Learning double fibration transforms with levelset integral kernels."""
__version__ = "0.1.0"

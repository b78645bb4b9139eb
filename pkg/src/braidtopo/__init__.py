"""Non-Abelian band topology of PT-symmetric multi-band models."""

__version__ = "0.1.0"

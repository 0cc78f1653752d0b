"""Cross-modal autoencoder embeddings for paired data matrices."""

__version__ = "0.1.0"

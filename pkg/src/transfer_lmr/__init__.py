"""Two-stage heavy-tail classification with long-tailed mixed reconstruction (LMR)."""

__version__ = "0.1.0"

"""Chain-ordered handle counting: matching, chain losses, dedup, two-pass counting and metrics."""

__version__ = "0.1.0"

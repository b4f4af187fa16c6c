"""Standard and l2-robust image classifiers, and what their learned representations can do."""
__version__ = "0.1.0"

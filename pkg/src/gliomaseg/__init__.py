"""ioMRI simulation and detect-then-segment glioma evaluation."""

__version__ = "0.1.0"

"""Grant-free SCMA active-user detection: signal model, trainable detectors and preamble analytics."""

__version__ = "0.1.0"

"""Federated cause-of-death assignment from binary symptom data."""

__version__ = "0.1.0"

TOOL_VERSION = __version__

"""Proactive state migration for stateful edge apps under user mobility."""

__version__ = "0.1.0"

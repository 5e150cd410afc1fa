"""Offline exporters for the promptbank engine's input files."""

__version__ = "0.1.0"
